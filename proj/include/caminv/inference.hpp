#pragma once

#include <optional>
#include <span>
#include <vector>

#include "caminv/model.hpp"

namespace caminv::inference {

struct FusionWeights {
  double w_inv = 1.0;
  double w_aug = 0.7;
  // Augmentation weight once a sample is attributed to an unknown camera:
  // the invariant:augmentation ratio grows by 1/0.7.
  double unknown_mode_w_aug = 0.49;

  void validate() const;
};

// (w_inv * p_spf + w_aug * p_aug) / (w_inv + w_aug)
double fuse_scores(double p_spf, double p_aug, double w_inv, double w_aug);
double fuse_scores(double p_spf, double p_aug, const FusionWeights& w = {});

struct CameraCalibration {
  double tau = 0.0;
  double floor = 0.6;
  int n_cameras = 0;

  void validate() const;
};

struct TopTwo {
  double first = 0.0;
  double second = 0.0;
};
TopTwo top_two(std::span<const double> probs);

// tau = min over samples with p_max1st > floor of (p1 - p2) / (1 - p1).
// Samples whose top probability is exactly 1 give an infinite descriptor and
// never set the minimum. Throws CalibrationError if nothing qualifies.
CameraCalibration calibrate_tau(std::span<const std::vector<double>> train_probs,
                                double floor = 0.6);

// clamp(1 - (p1 - p2) / tau, 0, 1)
double unknown_probability(double p_max1st, double p_max2nd, double tau);

// Appends p_unknown and divides by the total.
std::vector<double> normalize_probs(std::span<const double> known, double p_unknown);

// 1-based category of the largest entry; N+1 is the unknown camera. Ties go
// to the smallest index.
int classify_camera(std::span<const double> normalized);

struct AttentionState {
  int channels = 0;
  int positions = 0;
  std::vector<double> g;      // positions x positions
  std::vector<double> h;      // row-softmax of g
  std::vector<double> x_att;  // channels x positions
};

// x_cam is row-major channels x positions. G = X^T X, H = row-softmax(G),
// X_att = X H.
AttentionState attention_refine(std::span<const double> x_cam, int channels, int positions);
// Per-sample refinement of a camera feature map, same shape out.
Tensor refine_camera_feature(const Tensor& m_cam);

struct PredictOptions {
  FusionWeights weights;
  bool unknown_mode = false;
};

struct Prediction {
  double p_spf = 0.0;
  double p_aug = 0.0;
  double p_fused = 0.0;
  int camera_pred = 0;  // 1-based; n_cameras + 1 = unknown; 0 = no camera branch
  double p_unknown = 0.0;
  bool refined = false;
  std::vector<double> camera_probs;  // known-camera softmax mean
  std::vector<double> normalized;    // N+1 vector when calibrated
};

// Runs both branches on a batch of images. calibration is required when
// options.unknown_mode is set; without it camera_pred is the plain argmax.
std::vector<Prediction> predict(const CameraInvariantModel& model, const Tensor& images,
                                const CameraCalibration* calibration,
                                const PredictOptions& options);

}  // namespace caminv::inference
