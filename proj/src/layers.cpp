#include "caminv/layers.hpp"

#include <cmath>

namespace caminv {

void init_fan_in_uniform(Tensor& weight, int fan_in, Rng& rng) {
  const float bound = 1.0f / std::sqrt(static_cast<float>(fan_in));
  std::uniform_real_distribution<float> dist(-bound, bound);
  for (auto& v : weight.values()) v = dist(rng);
}

Conv2d::Conv2d(int in_channels, int out_channels, int kernel, int stride, int pad, bool with_bias)
    : weight(Shape{out_channels, in_channels, kernel, kernel}), geom_{kernel, stride, pad} {
  if (with_bias) bias.emplace(Shape{out_channels, 1, 1, 1});
}

void Conv2d::init(Rng& rng) {
  init_fan_in_uniform(weight.value, in_channels() * geom_.kernel * geom_.kernel, rng);
  if (bias) bias->value.fill(0.0f);
}

Tensor Conv2d::forward(const Tensor& x) const {
  return kernels::conv2d(x, weight.value, bias ? &bias->value : nullptr, geom_);
}

Tensor Conv2d::backward(const Tensor& x, const Tensor& dy, bool need_input_grad) {
  kernels::conv2d_backward_params(x, dy, geom_, weight.grad, bias ? &bias->grad : nullptr);
  if (!need_input_grad) return {};
  return kernels::conv2d_backward_input(dy, weight.value, x.shape(), geom_);
}

void Conv2d::collect(const std::string& prefix, ParameterList& out) {
  out.emplace_back(prefix + ".weight", &weight);
  if (bias) out.emplace_back(prefix + ".bias", &*bias);
}

GroupNorm::GroupNorm(int channels, int groups)
    : gamma(Shape{channels, 1, 1, 1}, 1.0f), beta(Shape{channels, 1, 1, 1}), groups_(groups) {
  if (groups <= 0 || channels % groups != 0) {
    throw DimensionError("GroupNorm: " + std::to_string(groups) + " groups do not divide " +
                         std::to_string(channels) + " channels");
  }
}

Tensor GroupNorm::forward(const Tensor& x, Cache* cache) const {
  return kernels::group_norm(x, groups_, gamma.value, beta.value, kEpsilon,
                             cache ? &cache->xhat : nullptr, cache ? &cache->inv_std : nullptr);
}

Tensor GroupNorm::backward(const Tensor& dy, const Cache& cache) {
  return kernels::group_norm_backward(dy, cache.xhat, cache.inv_std, groups_, gamma.value,
                                      gamma.grad, beta.grad);
}

void GroupNorm::collect(const std::string& prefix, ParameterList& out) {
  out.emplace_back(prefix + ".gamma", &gamma);
  out.emplace_back(prefix + ".beta", &beta);
}

Linear::Linear(int in_features, int out_features)
    : weight(Shape{out_features, in_features, 1, 1}), bias(Shape{out_features, 1, 1, 1}) {}

void Linear::init(Rng& rng) {
  init_fan_in_uniform(weight.value, weight.value.c(), rng);
  bias.value.fill(0.0f);
}

Tensor Linear::forward(const Tensor& x) const {
  return kernels::linear(x, weight.value, bias.value);
}

Tensor Linear::backward(const Tensor& x, const Tensor& dy, bool need_input_grad) {
  kernels::linear_backward_params(x, dy, weight.grad, bias.grad);
  if (!need_input_grad) return {};
  return kernels::linear_backward_input(dy, weight.value);
}

void Linear::collect(const std::string& prefix, ParameterList& out) {
  out.emplace_back(prefix + ".weight", &weight);
  out.emplace_back(prefix + ".bias", &bias);
}

}  // namespace caminv
