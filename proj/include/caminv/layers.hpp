#pragma once

// Trainable building blocks. Forward passes are const and reentrant; backward
// passes accumulate into each Parameter's grad and are single-writer.

#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "caminv/kernels.hpp"
#include "caminv/tensor.hpp"

namespace caminv {

using Rng = std::mt19937_64;

struct Parameter {
  Tensor value;
  Tensor grad;

  Parameter() = default;
  explicit Parameter(Shape s, float fill = 0.0f) : value(s, fill), grad(s) {}
  void zero_grad() { grad.fill(0.0f); }
};

using ParameterList = std::vector<std::pair<std::string, Parameter*>>;

// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)).
void init_fan_in_uniform(Tensor& weight, int fan_in, Rng& rng);

class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(int in_channels, int out_channels, int kernel, int stride, int pad, bool with_bias);

  void init(Rng& rng);
  Tensor forward(const Tensor& x) const;
  // Accumulates weight/bias gradients; returns dL/dx only when requested.
  Tensor backward(const Tensor& x, const Tensor& dy, bool need_input_grad);
  void collect(const std::string& prefix, ParameterList& out);

  int in_channels() const { return weight.value.c(); }
  int out_channels() const { return weight.value.n(); }
  kernels::ConvGeometry geometry() const { return geom_; }

  Parameter weight;
  std::optional<Parameter> bias;

 private:
  kernels::ConvGeometry geom_{};
};

class GroupNorm {
 public:
  struct Cache {
    Tensor xhat;
    std::vector<float> inv_std;
  };

  static constexpr float kEpsilon = 1e-5f;

  GroupNorm() = default;
  GroupNorm(int channels, int groups);

  Tensor forward(const Tensor& x, Cache* cache) const;
  Tensor backward(const Tensor& dy, const Cache& cache);
  void collect(const std::string& prefix, ParameterList& out);

  int groups() const { return groups_; }

  Parameter gamma;
  Parameter beta;

 private:
  int groups_ = 1;
};

class Linear {
 public:
  Linear() = default;
  Linear(int in_features, int out_features);

  void init(Rng& rng);
  Tensor forward(const Tensor& x) const;
  Tensor backward(const Tensor& x, const Tensor& dy, bool need_input_grad);
  void collect(const std::string& prefix, ParameterList& out);

  Parameter weight;
  Parameter bias;
};

}  // namespace caminv
