#pragma once

// Two-branch camera-invariant anti-spoofing network.
//
// Invariant branch:  image -> EDDF -> Conv_hf -> {trunk_cam, trunk_mix}
//   M_spf = M_mix - M_cam; a single shared Conv_cam maps M_cam, M_mix and
//   M_spf to camera logit maps; pooled M_mix / M_spf feed binary heads.
// Augmentation branch: clamp(image + Conv_aug(EDDF(image))) -> trunk_aug ->
//   pooled -> binary head.

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "caminv/backbone.hpp"
#include "caminv/filters.hpp"

namespace caminv {

struct ModelConfig {
  int input_size = 224;
  int hf_channels = 64;
  int stem_channels = 64;
  std::array<int, 3> stage_channels{128, 256, 512};
  int gn_groups = 32;
  int head_hidden = 128;
  int num_cameras = 3;
  // Ablations: bypass EDDF (raw image into a 3-channel stem) per branch, or
  // drop the camera sub-network together with every camera loss.
  bool no_eddf_branch1 = false;
  bool no_eddf_branch2 = false;
  bool no_cam_id = false;

  // Layer widths exactly as in the reference architecture table, 224 input.
  static ModelConfig full_profile(int num_cameras);
  // Same topology at 64x64 input with narrow layers, sized for one CPU core.
  static ModelConfig desk_profile(int num_cameras);

  void validate() const;
  TrunkConfig trunk_config(int in_channels) const;
  int feature_channels() const { return stage_channels[2]; }
};

// FC(features, hidden) -> ReLU -> FC(hidden, 2). Logit 0 is the live class.
class BinaryHead {
 public:
  struct Cache {
    Tensor features;
    Tensor hidden;
  };

  BinaryHead() = default;
  BinaryHead(int features, int hidden);

  void init(Rng& rng);
  Tensor forward(const Tensor& features, Cache* cache) const;
  Tensor backward(const Tensor& dlogits, const Cache& cache);
  void collect(const std::string& prefix, ParameterList& out);

  Linear fc1;
  Linear fc2;
};

struct LivenessPair {
  double live = 0.5;
  double spoof = 0.5;
};

// Softmax of the two head logits for sample n.
LivenessPair liveness_from_logits(const Tensor& logits, int n);
std::vector<double> live_probabilities(const Tensor& logits);
// Head applied to one pooled feature vector ([1, C, 1, 1] or [C,1,1,1]).
LivenessPair binary_head(const Tensor& features, const BinaryHead& head);

// M_mix - M_cam.
Tensor decompose(const Tensor& m_mix, const Tensor& m_cam);
// 3x3 Conv_cam over a trunk output.
Tensor camera_logits(const Tensor& features, const Conv2d& conv_cam);
// Spatial mean of per-location softmax vectors of sample n of a logit map.
std::vector<double> image_camera_probs(const Tensor& logits, int n = 0);

struct InvariantOutputs {
  Tensor m_cam, m_mix, m_spf;
  Tensor o_cam, o_mix, o_spf;
  Tensor f_mix, f_spf;
  Tensor logits_mix, logits_spf;
  std::vector<double> p_mix, p_spf;
};

struct AugmentationOutputs {
  Tensor aug_component;
  Tensor augmented;
  Tensor m_aug;
  Tensor f_aug;
  Tensor logits_aug;
  std::vector<double> p_aug;
};

struct InvariantCache {
  Tensor images;
  Tensor residuals;
  Tensor trunk_input;
  Trunk::Cache trunk_cam, trunk_mix;
  BinaryHead::Cache head_mix, head_spf;
  InvariantOutputs out;
};

struct AugmentationCache {
  Tensor images;
  Tensor residuals;
  Trunk::Cache trunk;
  BinaryHead::Cache head;
  AugmentationOutputs out;
};

// Loss gradients w.r.t. the branch outputs; empty tensors mean zero.
struct InvariantGrads {
  Tensor o_cam, o_mix, o_spf;
  Tensor logits_mix, logits_spf;
};

class CameraInvariantModel {
 public:
  explicit CameraInvariantModel(const ModelConfig& config);

  void init(std::uint64_t seed);

  InvariantOutputs forward_invariant(const Tensor& images, InvariantCache* cache = nullptr) const;
  AugmentationOutputs forward_augmentation(const Tensor& images,
                                           AugmentationCache* cache = nullptr) const;
  // Re-runs decomposition and the spoof head with a substitute camera feature
  // (used by attention refinement). Returns live probabilities per sample.
  std::vector<double> spoof_probabilities_with_camera_feature(const Tensor& m_mix,
                                                              const Tensor& m_cam) const;

  void backward_invariant(const InvariantCache& cache, const InvariantGrads& grads);
  void backward_augmentation(const AugmentationCache& cache, const Tensor& dlogits_aug);

  ParameterList parameters();
  Parameter* find_parameter(const std::string& name);
  void zero_grad();

  const ModelConfig& config() const { return config_; }
  bool has_camera_branch() const { return trunk_cam_.has_value(); }
  const Conv2d& conv_cam() const { return *conv_cam_; }
  const BinaryHead& head_spf() const;

 private:
  ModelConfig config_;
  std::optional<Conv2d> conv_hf_;
  std::optional<Conv2d> conv_aug_;
  std::optional<Trunk> trunk_cam_;
  Trunk trunk_mix_;
  Trunk trunk_aug_;
  std::optional<Conv2d> conv_cam_;
  BinaryHead head_mix_;
  std::optional<BinaryHead> head_spf_;
  BinaryHead head_aug_;
};

}  // namespace caminv
