#pragma once

// Training objectives, evaluated in double precision on logits copied out of
// the network. Spatial terms are summed over (i, j, k); every loss is then
// averaged over the batch. Probabilities are floored at 1e-12 before logs.

#include <span>
#include <vector>

#include "caminv/tensor.hpp"

namespace caminv::losses {

inline constexpr double kProbabilityFloor = 1e-12;

struct HyperParams {
  double alpha1 = 0.5;   // live-class focal weight
  double alpha2 = 1.0;   // spoof-class focal weight
  double gamma = 4.0;    // focusing exponent
  double lambda1 = 0.005;  // camera identification losses
  double lambda2 = 5.0;    // three anti-spoofing losses
  double lambda3 = 0.1;    // camera confusion loss
  double lambda4 = 0.7;    // augmentation-branch fusion weight

  void validate() const;
};

// Logits in NCHW order, double precision.
struct LogitMap {
  int batch = 0;
  int classes = 0;
  int height = 1;
  int width = 1;
  std::vector<double> values;

  LogitMap() = default;
  LogitMap(int n, int k, int h, int w) : batch(n), classes(k), height(h), width(w),
                                         values(static_cast<std::size_t>(n) * k * h * w, 0.0) {}
  double& at(int n, int k, int y, int x) {
    return values[((static_cast<std::size_t>(n) * classes + k) * height + y) * width + x];
  }
  double at(int n, int k, int y, int x) const {
    return values[((static_cast<std::size_t>(n) * classes + k) * height + y) * width + x];
  }
};

LogitMap to_logit_map(const Tensor& t);
Tensor to_tensor(const LogitMap& m);

// Per-pixel multi-class focal loss against one camera index per image,
// broadcast to every location. grad (optional) receives dL/dlogits.
double camera_focal_loss(const LogitMap& logits, std::span<const int> cameras, double gamma,
                         LogitMap* grad = nullptr);

// Cross-entropy of every location's softmax against the uniform 1/K target.
double decam_loss(const LogitMap& logits, LogitMap* grad = nullptr);

// alpha1*y*(1-p)^g*(-log p) + alpha2*(1-y)*p^g*(-log(1-p)), batch mean.
// labels: 1 = live. dp (optional) receives dL/dp.
double binary_focal_loss(std::span<const double> p_live, std::span<const int> labels,
                         double alpha1, double alpha2, double gamma,
                         std::vector<double>* dp = nullptr);

// Same loss on [N, 2] head logits (index 0 = live); grad receives dL/dlogits.
double binary_focal_loss_logits(const LogitMap& logits, std::span<const int> labels,
                                double alpha1, double alpha2, double gamma,
                                LogitMap* grad = nullptr);

struct LossComponents {
  double cam_id1 = 0.0;  // O_cam
  double cam_id2 = 0.0;  // O_mix
  double anti1 = 0.0;    // mixed feature head
  double anti2 = 0.0;    // decomposed feature head
  double anti3 = 0.0;    // augmentation head
  double decam = 0.0;    // O_spf
};

// lambda1*(cam1+cam2) + lambda2*(anti1+anti2+anti3) + lambda3*decam.
// Throws NumericError if any component is non-finite.
double total_loss(const LossComponents& c, const HyperParams& hp);

}  // namespace caminv::losses
