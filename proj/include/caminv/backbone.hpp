#pragma once

// Residual trunk shared in structure by the camera, mixed and augmentation
// sub-networks: 7x7/2 stem -> 3x3/2 max-pool -> three stages of two basic
// blocks each, group-normalized throughout.

#include <array>
#include <vector>

#include "caminv/layers.hpp"

namespace caminv {

struct TrunkConfig {
  int in_channels = 64;
  int stem_channels = 64;
  std::array<int, 3> stage_channels{128, 256, 512};
  int gn_groups = 32;

  // Throws ConfigError when gn_groups does not divide a normalized width.
  void validate() const;
  int out_channels() const { return stage_channels[2]; }
};

// Per-sample group normalization with eps = 1e-5 followed by the affine map.
Tensor group_normalize(const Tensor& x, int groups, const Tensor& scale, const Tensor& shift);

class BasicBlock {
 public:
  struct Cache {
    Tensor x;
    Tensor conv1_out;
    GroupNorm::Cache norm1;
    Tensor act1;
    Tensor conv2_out;
    GroupNorm::Cache norm2;
    Tensor proj_out;
    GroupNorm::Cache proj_norm;
    Tensor y;
  };

  BasicBlock() = default;
  BasicBlock(int in_channels, int out_channels, int stride, int groups);

  void init(Rng& rng);
  Tensor forward(const Tensor& x, Cache* cache) const;
  Tensor backward(const Tensor& dy, const Cache& cache, bool need_input_grad);
  void collect(const std::string& prefix, ParameterList& out);

  bool has_projection() const { return proj_.has_value(); }

 private:
  Conv2d conv1_, conv2_;
  GroupNorm norm1_, norm2_;
  std::optional<Conv2d> proj_;
  std::optional<GroupNorm> proj_norm_;
};

class Trunk {
 public:
  struct Cache {
    Tensor x;
    Tensor stem_out;
    GroupNorm::Cache stem_norm;
    Tensor stem_act;
    std::vector<int> pool_argmax;
    std::vector<BasicBlock::Cache> blocks;
  };

  Trunk() = default;
  explicit Trunk(const TrunkConfig& config);

  void init(Rng& rng);
  // Optional trace receives the shapes after stem conv, pooling and each stage.
  Tensor forward(const Tensor& x, Cache* cache, std::vector<Shape>* trace = nullptr) const;
  Tensor backward(const Tensor& dy, const Cache& cache, bool need_input_grad);
  void collect(const std::string& prefix, ParameterList& out);

  const TrunkConfig& config() const { return config_; }

 private:
  TrunkConfig config_;
  Conv2d stem_;
  GroupNorm stem_norm_;
  std::vector<BasicBlock> blocks_;  // stage-major, two per stage
};

}  // namespace caminv
