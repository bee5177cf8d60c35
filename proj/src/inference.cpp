#include "caminv/inference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace caminv::inference {

void FusionWeights::validate() const {
  if (!(w_inv > 0.0) || !(w_aug > 0.0) || !(unknown_mode_w_aug > 0.0)) {
    throw ConfigError("fusion weights must be positive");
  }
}

double fuse_scores(double p_spf, double p_aug, double w_inv, double w_aug) {
  if (w_inv < 0.0 || w_aug < 0.0 || w_inv + w_aug <= 0.0) {
    throw ConfigError("fusion weights must be non-negative with a positive sum");
  }
  return (w_inv * p_spf + w_aug * p_aug) / (w_inv + w_aug);
}

double fuse_scores(double p_spf, double p_aug, const FusionWeights& w) {
  w.validate();
  return fuse_scores(p_spf, p_aug, w.w_inv, w.w_aug);
}

void CameraCalibration::validate() const {
  if (!(tau > 0.0) || !std::isfinite(tau)) {
    throw CalibrationError("tau must be finite and positive, got " + std::to_string(tau));
  }
  if (n_cameras < 2) throw CalibrationError("calibration needs at least 2 known cameras");
}

TopTwo top_two(std::span<const double> probs) {
  if (probs.size() < 2) throw DimensionError("top_two needs at least two probabilities");
  TopTwo t{-std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
  for (double p : probs) {
    if (p > t.first) {
      t.second = t.first;
      t.first = p;
    } else if (p > t.second) {
      t.second = p;
    }
  }
  return t;
}

CameraCalibration calibrate_tau(std::span<const std::vector<double>> train_probs, double floor) {
  CameraCalibration cal;
  cal.floor = floor;
  cal.tau = std::numeric_limits<double>::infinity();
  std::size_t selected = 0;
  for (const auto& probs : train_probs) {
    if (cal.n_cameras == 0) cal.n_cameras = static_cast<int>(probs.size());
    if (static_cast<int>(probs.size()) != cal.n_cameras) {
      throw DimensionError("calibrate_tau: inconsistent camera counts");
    }
    const auto t = top_two(probs);
    if (!(t.first > floor)) continue;
    ++selected;
    if (t.first < 1.0) cal.tau = std::min(cal.tau, (t.first - t.second) / (1.0 - t.first));
  }
  if (selected == 0) {
    throw CalibrationError("no training sample has a top camera probability above " +
                           std::to_string(floor));
  }
  if (!std::isfinite(cal.tau)) {
    throw CalibrationError("every selected sample is saturated (top probability 1)");
  }
  cal.validate();
  return cal;
}

double unknown_probability(double p_max1st, double p_max2nd, double tau) {
  if (!(tau > 0.0)) throw CalibrationError("tau must be positive");
  return std::clamp(1.0 - (p_max1st - p_max2nd) / tau, 0.0, 1.0);
}

std::vector<double> normalize_probs(std::span<const double> known, double p_unknown) {
  std::vector<double> out(known.begin(), known.end());
  out.push_back(p_unknown);
  double total = 0.0;
  for (double v : out) {
    if (!(v >= 0.0)) throw NumericError("normalize_probs: negative or NaN component");
    total += v;
  }
  if (total <= 0.0) throw NumericError("normalize_probs: all components are zero");
  for (auto& v : out) v /= total;
  return out;
}

int classify_camera(std::span<const double> normalized) {
  if (normalized.empty()) throw DimensionError("classify_camera: empty distribution");
  std::size_t best = 0;
  for (std::size_t i = 1; i < normalized.size(); ++i) {
    if (normalized[i] > normalized[best]) best = i;
  }
  return static_cast<int>(best) + 1;
}

AttentionState attention_refine(std::span<const double> x_cam, int channels, int positions) {
  if (channels <= 0 || positions <= 0) throw DimensionError("attention_refine: empty input");
  if (x_cam.size() != static_cast<std::size_t>(channels) * positions) {
    throw DimensionError("attention_refine: buffer size does not match channels x positions");
  }
  AttentionState s;
  s.channels = channels;
  s.positions = positions;
  const auto P = static_cast<std::size_t>(positions);
  s.g.assign(P * P, 0.0);
  for (int c = 0; c < channels; ++c) {
    const double* row = x_cam.data() + c * P;
    for (std::size_t u = 0; u < P; ++u) {
      for (std::size_t v = 0; v < P; ++v) s.g[u * P + v] += row[u] * row[v];
    }
  }
  s.h.assign(P * P, 0.0);
  for (std::size_t u = 0; u < P; ++u) {
    const double* g = s.g.data() + u * P;
    const double mx = *std::max_element(g, g + P);
    double z = 0.0;
    for (std::size_t v = 0; v < P; ++v) z += std::exp(g[v] - mx);
    for (std::size_t v = 0; v < P; ++v) s.h[u * P + v] = std::exp(g[v] - mx) / z;
  }
  s.x_att.assign(static_cast<std::size_t>(channels) * P, 0.0);
  for (int c = 0; c < channels; ++c) {
    const double* row = x_cam.data() + c * P;
    double* out = s.x_att.data() + c * P;
    for (std::size_t u = 0; u < P; ++u) {
      for (std::size_t v = 0; v < P; ++v) out[v] += row[u] * s.h[u * P + v];
    }
  }
  return s;
}

Tensor refine_camera_feature(const Tensor& m_cam) {
  const int c = m_cam.c();
  const int hw = m_cam.h() * m_cam.w();
  Tensor out(m_cam.shape());
  std::vector<double> x(static_cast<std::size_t>(c) * hw);
  for (int n = 0; n < m_cam.n(); ++n) {
    const auto src = m_cam.sample(n);
    std::copy(src.begin(), src.end(), x.begin());
    const auto s = attention_refine(x, c, hw);
    auto dst = out.sample(n);
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<float>(s.x_att[i]);
  }
  return out;
}

std::vector<Prediction> predict(const CameraInvariantModel& model, const Tensor& images,
                                const CameraCalibration* calibration,
                                const PredictOptions& options) {
  options.weights.validate();
  if (options.unknown_mode && !calibration) {
    throw MissingArtifact("unknown-camera mode requires a tau calibration");
  }
  if (options.unknown_mode && !model.has_camera_branch()) {
    throw ConfigError("unknown-camera mode requires the camera sub-network");
  }
  if (calibration) {
    calibration->validate();
    if (model.has_camera_branch() && calibration->n_cameras != model.config().num_cameras) {
      throw CalibrationError("calibration is for " + std::to_string(calibration->n_cameras) +
                             " cameras, model has " +
                             std::to_string(model.config().num_cameras));
    }
  }

  const auto inv = model.forward_invariant(images);
  const auto aug = model.forward_augmentation(images);
  const int batch = images.n();
  std::vector<Prediction> out(batch);
  std::vector<int> to_refine;
  for (int n = 0; n < batch; ++n) {
    auto& p = out[n];
    p.p_spf = inv.p_spf[n];
    p.p_aug = aug.p_aug[n];
    if (model.has_camera_branch()) {
      p.camera_probs = image_camera_probs(inv.o_cam, n);
      if (calibration) {
        const auto t = top_two(p.camera_probs);
        p.p_unknown = unknown_probability(t.first, t.second, calibration->tau);
        p.normalized = normalize_probs(p.camera_probs, p.p_unknown);
        p.camera_pred = classify_camera(p.normalized);
      } else {
        p.camera_pred = classify_camera(p.camera_probs);
      }
    }
    const bool unknown = calibration && p.camera_pred == calibration->n_cameras + 1;
    if (options.unknown_mode && unknown) {
      p.refined = true;
      to_refine.push_back(n);
    } else {
      p.p_fused = fuse_scores(p.p_spf, p.p_aug, options.weights.w_inv, options.weights.w_aug);
    }
  }

  if (!to_refine.empty()) {
    std::vector<Tensor> mix, cam;
    for (int n : to_refine) {
      mix.push_back(take_sample(inv.m_mix, n));
      cam.push_back(take_sample(inv.m_cam, n));
    }
    const Tensor refined = refine_camera_feature(stack(cam));
    const auto p_spf = model.spoof_probabilities_with_camera_feature(stack(mix), refined);
    for (std::size_t i = 0; i < to_refine.size(); ++i) {
      auto& p = out[to_refine[i]];
      p.p_spf = p_spf[i];
      p.p_fused = fuse_scores(p.p_spf, p.p_aug, options.weights.w_inv,
                              options.weights.unknown_mode_w_aug);
    }
  }
  return out;
}

}  // namespace caminv::inference
