#include "caminv/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace caminv::losses {
namespace {

// Softmax over the class axis at (n, y, x).
void softmax_at(const LogitMap& m, int n, int y, int x, std::vector<double>& p) {
  p.resize(m.classes);
  double mx = -INFINITY;
  for (int k = 0; k < m.classes; ++k) mx = std::max(mx, m.at(n, k, y, x));
  double z = 0.0;
  for (int k = 0; k < m.classes; ++k) {
    p[k] = std::exp(m.at(n, k, y, x) - mx);
    z += p[k];
  }
  for (auto& v : p) v /= z;
}

double floored(double p) { return std::max(p, kProbabilityFloor); }

void prepare_grad(const LogitMap& logits, LogitMap* grad) {
  if (grad) *grad = LogitMap(logits.batch, logits.classes, logits.height, logits.width);
}

}  // namespace

void HyperParams::validate() const {
  for (double v : {alpha1, alpha2, gamma, lambda1, lambda2, lambda3, lambda4}) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      throw ConfigError("loss hyper-parameters must be finite and non-negative");
    }
  }
}

LogitMap to_logit_map(const Tensor& t) {
  LogitMap m(t.n(), t.c(), t.h(), t.w());
  for (std::size_t i = 0; i < t.size(); ++i) m.values[i] = t.data()[i];
  return m;
}

Tensor to_tensor(const LogitMap& m) {
  Tensor t(m.batch, m.classes, m.height, m.width);
  for (std::size_t i = 0; i < m.values.size(); ++i) t.data()[i] = static_cast<float>(m.values[i]);
  return t;
}

double camera_focal_loss(const LogitMap& logits, std::span<const int> cameras, double gamma,
                         LogitMap* grad) {
  if (static_cast<int>(cameras.size()) != logits.batch) {
    throw DimensionError("camera_focal_loss: " + std::to_string(cameras.size()) +
                         " targets for batch of " + std::to_string(logits.batch));
  }
  prepare_grad(logits, grad);
  std::vector<double> p;
  double total = 0.0;
  const double inv_batch = 1.0 / logits.batch;
  for (int n = 0; n < logits.batch; ++n) {
    const int t = cameras[n];
    if (t < 0 || t >= logits.classes) {
      throw DimensionError("camera_focal_loss: camera index " + std::to_string(t) +
                           " outside " + std::to_string(logits.classes) + " classes");
    }
    for (int y = 0; y < logits.height; ++y) {
      for (int x = 0; x < logits.width; ++x) {
        softmax_at(logits, n, y, x, p);
        const double pt = floored(p[t]);
        const double q = 1.0 - p[t];
        const double logp = std::log(pt);
        total += -std::pow(q, gamma) * logp;
        if (grad) {
          // dL/dp_t, then chain through dp_t/dz_k = p_t (delta_tk - p_k).
          const double dq = gamma > 0.0 ? gamma * std::pow(q, gamma - 1.0) * logp : 0.0;
          const double dl_dpt = dq - std::pow(q, gamma) / pt;
          for (int k = 0; k < logits.classes; ++k) {
            const double dpt_dz = p[t] * ((k == t ? 1.0 : 0.0) - p[k]);
            grad->at(n, k, y, x) = dl_dpt * dpt_dz * inv_batch;
          }
        }
      }
    }
  }
  return total * inv_batch;
}

double decam_loss(const LogitMap& logits, LogitMap* grad) {
  prepare_grad(logits, grad);
  std::vector<double> p;
  const double target = 1.0 / logits.classes;
  const double inv_batch = 1.0 / logits.batch;
  double total = 0.0;
  for (int n = 0; n < logits.batch; ++n) {
    for (int y = 0; y < logits.height; ++y) {
      for (int x = 0; x < logits.width; ++x) {
        softmax_at(logits, n, y, x, p);
        for (int k = 0; k < logits.classes; ++k) {
          total += -target * std::log(floored(p[k]));
          if (grad) grad->at(n, k, y, x) = (p[k] - target) * inv_batch;
        }
      }
    }
  }
  return total * inv_batch;
}

double binary_focal_loss(std::span<const double> p_live, std::span<const int> labels,
                         double alpha1, double alpha2, double gamma, std::vector<double>* dp) {
  if (p_live.size() != labels.size() || p_live.empty()) {
    throw DimensionError("binary_focal_loss: probability/label count mismatch");
  }
  const double inv_batch = 1.0 / static_cast<double>(p_live.size());
  if (dp) dp->assign(p_live.size(), 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < p_live.size(); ++i) {
    const double p = std::clamp(p_live[i], kProbabilityFloor, 1.0 - kProbabilityFloor);
    double l = 0.0, d = 0.0;
    if (labels[i] == 1) {
      const double q = 1.0 - p;
      l = -alpha1 * std::pow(q, gamma) * std::log(p);
      d = alpha1 * ((gamma > 0.0 ? gamma * std::pow(q, gamma - 1.0) * std::log(p) : 0.0) -
                    std::pow(q, gamma) / p);
    } else {
      const double q = 1.0 - p;
      l = -alpha2 * std::pow(p, gamma) * std::log(q);
      d = alpha2 * (-(gamma > 0.0 ? gamma * std::pow(p, gamma - 1.0) * std::log(q) : 0.0) +
                    std::pow(p, gamma) / q);
    }
    total += l;
    if (dp) (*dp)[i] = d * inv_batch;
  }
  return total * inv_batch;
}

double binary_focal_loss_logits(const LogitMap& logits, std::span<const int> labels,
                                double alpha1, double alpha2, double gamma, LogitMap* grad) {
  if (logits.classes != 2 || logits.height != 1 || logits.width != 1) {
    throw DimensionError("binary_focal_loss_logits: expected [N, 2] logits");
  }
  std::vector<double> p(logits.batch);
  for (int n = 0; n < logits.batch; ++n) {
    // p_live = sigmoid(z_live - z_spoof)
    const double d = logits.at(n, 0, 0, 0) - logits.at(n, 1, 0, 0);
    p[n] = d >= 0.0 ? 1.0 / (1.0 + std::exp(-d)) : std::exp(d) / (1.0 + std::exp(d));
  }
  std::vector<double> dp;
  const double value = binary_focal_loss(p, labels, alpha1, alpha2, gamma, grad ? &dp : nullptr);
  if (grad) {
    prepare_grad(logits, grad);
    for (int n = 0; n < logits.batch; ++n) {
      const double s = dp[n] * p[n] * (1.0 - p[n]);
      grad->at(n, 0, 0, 0) = s;
      grad->at(n, 1, 0, 0) = -s;
    }
  }
  return value;
}

double total_loss(const LossComponents& c, const HyperParams& hp) {
  const double parts[] = {c.cam_id1, c.cam_id2, c.anti1, c.anti2, c.anti3, c.decam};
  const char* names[] = {"cam_id1", "cam_id2", "anti1", "anti2", "anti3", "decam"};
  for (int i = 0; i < 6; ++i) {
    if (!std::isfinite(parts[i])) {
      throw NumericError(std::string("non-finite loss component ") + names[i] + " = " +
                         std::to_string(parts[i]));
    }
  }
  return hp.lambda1 * (c.cam_id1 + c.cam_id2) + hp.lambda2 * (c.anti1 + c.anti2 + c.anti3) +
         hp.lambda3 * c.decam;
}

}  // namespace caminv::losses
