#include "caminv/model.hpp"

#include <algorithm>
#include <cmath>

namespace caminv {

ModelConfig ModelConfig::full_profile(int num_cameras) {
  ModelConfig c;
  c.num_cameras = num_cameras;
  return c;
}

ModelConfig ModelConfig::desk_profile(int num_cameras) {
  ModelConfig c;
  c.input_size = 64;
  c.hf_channels = 16;
  c.stem_channels = 16;
  c.stage_channels = {16, 32, 64};
  c.gn_groups = 8;
  c.head_hidden = 128;
  c.num_cameras = num_cameras;
  return c;
}

void ModelConfig::validate() const {
  if (input_size <= 0 || input_size % 16 != 0) {
    throw ConfigError("input_size must be a positive multiple of 16, got " +
                      std::to_string(input_size));
  }
  if (hf_channels <= 0 || head_hidden <= 0) throw ConfigError("layer widths must be positive");
  if (!no_cam_id && num_cameras < 2) {
    throw ConfigError("camera classification needs at least 2 cameras, got " +
                      std::to_string(num_cameras));
  }
  trunk_config(3).validate();
}

TrunkConfig ModelConfig::trunk_config(int in_channels) const {
  TrunkConfig t;
  t.in_channels = in_channels;
  t.stem_channels = stem_channels;
  t.stage_channels = stage_channels;
  t.gn_groups = gn_groups;
  return t;
}

BinaryHead::BinaryHead(int features, int hidden) : fc1(features, hidden), fc2(hidden, 2) {}

void BinaryHead::init(Rng& rng) {
  fc1.init(rng);
  fc2.init(rng);
}

Tensor BinaryHead::forward(const Tensor& features, Cache* cache) const {
  Tensor h = fc1.forward(features);
  kernels::relu_inplace(h);
  Tensor logits = fc2.forward(h);
  if (cache) {
    cache->features = features;
    cache->hidden = std::move(h);
  }
  return logits;
}

Tensor BinaryHead::backward(const Tensor& dlogits, const Cache& cache) {
  Tensor dh = fc2.backward(cache.hidden, dlogits, true);
  kernels::relu_backward_inplace(dh, cache.hidden);
  return fc1.backward(cache.features, dh, true);
}

void BinaryHead::collect(const std::string& prefix, ParameterList& out) {
  fc1.collect(prefix + ".fc1", out);
  fc2.collect(prefix + ".fc2", out);
}

LivenessPair liveness_from_logits(const Tensor& logits, int n) {
  const double a = logits.data()[static_cast<std::size_t>(n) * 2];
  const double b = logits.data()[static_cast<std::size_t>(n) * 2 + 1];
  const double m = std::max(a, b);
  const double ea = std::exp(a - m), eb = std::exp(b - m);
  return {ea / (ea + eb), eb / (ea + eb)};
}

std::vector<double> live_probabilities(const Tensor& logits) {
  std::vector<double> p(logits.n());
  for (int n = 0; n < logits.n(); ++n) p[n] = liveness_from_logits(logits, n).live;
  return p;
}

LivenessPair binary_head(const Tensor& features, const BinaryHead& head) {
  const int len = static_cast<int>(features.size());
  if (len != head.fc1.weight.value.c()) {
    throw DimensionError("binary_head: feature length " + std::to_string(len) + " vs " +
                         std::to_string(head.fc1.weight.value.c()));
  }
  Tensor f = features.reshaped(Shape{1, len, 1, 1});
  return liveness_from_logits(head.forward(f, nullptr), 0);
}

Tensor decompose(const Tensor& m_mix, const Tensor& m_cam) {
  require_same_shape(m_mix, m_cam, "decompose");
  return subtract(m_mix, m_cam);
}

Tensor camera_logits(const Tensor& features, const Conv2d& conv_cam) {
  if (features.c() != conv_cam.in_channels()) {
    throw DimensionError("camera_logits: expected " + std::to_string(conv_cam.in_channels()) +
                         " channels, got " + std::to_string(features.c()));
  }
  return conv_cam.forward(features);
}

std::vector<double> image_camera_probs(const Tensor& logits, int n) {
  const int k = logits.c();
  const int hw = logits.h() * logits.w();
  std::vector<double> mean(k, 0.0), p(k);
  for (int y = 0; y < logits.h(); ++y) {
    for (int x = 0; x < logits.w(); ++x) {
      double m = -INFINITY;
      for (int c = 0; c < k; ++c) m = std::max(m, static_cast<double>(logits.at(n, c, y, x)));
      double z = 0.0;
      for (int c = 0; c < k; ++c) {
        p[c] = std::exp(logits.at(n, c, y, x) - m);
        z += p[c];
      }
      for (int c = 0; c < k; ++c) mean[c] += p[c] / z;
    }
  }
  for (auto& v : mean) v /= hw;
  return mean;
}

CameraInvariantModel::CameraInvariantModel(const ModelConfig& config) : config_(config) {
  config_.validate();
  const int inv_in = config.no_eddf_branch1 ? 3 : config.hf_channels;
  if (!config.no_eddf_branch1) conv_hf_ = filters::make_conv_hf(config.hf_channels);
  if (!config.no_eddf_branch2) conv_aug_ = filters::make_conv_aug();
  if (!config.no_cam_id) {
    trunk_cam_.emplace(config.trunk_config(inv_in));
    conv_cam_.emplace(config.feature_channels(), config.num_cameras, 3, 1, 1, true);
    head_spf_.emplace(config.feature_channels(), config.head_hidden);
  }
  trunk_mix_ = Trunk(config.trunk_config(inv_in));
  trunk_aug_ = Trunk(config.trunk_config(3));
  head_mix_ = BinaryHead(config.feature_channels(), config.head_hidden);
  head_aug_ = BinaryHead(config.feature_channels(), config.head_hidden);
}

void CameraInvariantModel::init(std::uint64_t seed) {
  // One stream per component so that ablating a component leaves the
  // initialization of the others unchanged.
  auto init_with = [seed](auto& component, std::uint64_t salt) {
    Rng rng(seed * 0x9E3779B97F4A7C15ULL + salt);
    component.init(rng);
  };
  if (conv_hf_) init_with(*conv_hf_, 1);
  if (conv_aug_) init_with(*conv_aug_, 2);
  if (trunk_cam_) init_with(*trunk_cam_, 3);
  init_with(trunk_mix_, 4);
  init_with(trunk_aug_, 5);
  if (conv_cam_) init_with(*conv_cam_, 6);
  init_with(head_mix_, 7);
  if (head_spf_) init_with(*head_spf_, 8);
  init_with(head_aug_, 9);
}

InvariantOutputs CameraInvariantModel::forward_invariant(const Tensor& images,
                                                         InvariantCache* cache) const {
  if (images.c() != 3) {
    throw DimensionError("forward_invariant: expected 3-channel images, got " +
                         std::to_string(images.c()));
  }
  Tensor residuals, input;
  if (conv_hf_) {
    residuals = filters::apply_eddf(images);
    input = filters::conv_hf(residuals, *conv_hf_);
  } else {
    input = images;
  }
  InvariantOutputs out;
  out.m_mix = trunk_mix_.forward(input, cache ? &cache->trunk_mix : nullptr);
  out.f_mix = kernels::global_avg_pool(out.m_mix);
  out.logits_mix = head_mix_.forward(out.f_mix, cache ? &cache->head_mix : nullptr);
  out.p_mix = live_probabilities(out.logits_mix);
  if (trunk_cam_) {
    out.m_cam = trunk_cam_->forward(input, cache ? &cache->trunk_cam : nullptr);
    out.m_spf = decompose(out.m_mix, out.m_cam);
    out.o_cam = camera_logits(out.m_cam, *conv_cam_);
    out.o_mix = camera_logits(out.m_mix, *conv_cam_);
    out.o_spf = camera_logits(out.m_spf, *conv_cam_);
    out.f_spf = kernels::global_avg_pool(out.m_spf);
    out.logits_spf = head_spf_->forward(out.f_spf, cache ? &cache->head_spf : nullptr);
    out.p_spf = live_probabilities(out.logits_spf);
  } else {
    out.m_spf = out.m_mix;
    out.f_spf = out.f_mix;
    out.logits_spf = out.logits_mix;
    out.p_spf = out.p_mix;
  }
  if (cache) {
    cache->images = images;
    cache->residuals = std::move(residuals);
    cache->trunk_input = std::move(input);
    cache->out = out;
  }
  return out;
}

AugmentationOutputs CameraInvariantModel::forward_augmentation(const Tensor& images,
                                                               AugmentationCache* cache) const {
  if (images.c() != 3) {
    throw DimensionError("forward_augmentation: expected 3-channel images, got " +
                         std::to_string(images.c()));
  }
  AugmentationOutputs out;
  Tensor residuals;
  if (conv_aug_) {
    residuals = filters::apply_eddf(images);
    out.aug_component = filters::conv_aug(residuals, *conv_aug_);
    out.augmented = filters::recompose(images, out.aug_component);
  } else {
    out.augmented = images;
  }
  out.m_aug = trunk_aug_.forward(out.augmented, cache ? &cache->trunk : nullptr);
  out.f_aug = kernels::global_avg_pool(out.m_aug);
  out.logits_aug = head_aug_.forward(out.f_aug, cache ? &cache->head : nullptr);
  out.p_aug = live_probabilities(out.logits_aug);
  if (cache) {
    cache->images = images;
    cache->residuals = std::move(residuals);
    cache->out = out;
  }
  return out;
}

std::vector<double> CameraInvariantModel::spoof_probabilities_with_camera_feature(
    const Tensor& m_mix, const Tensor& m_cam) const {
  const Tensor m_spf = decompose(m_mix, m_cam);
  const Tensor f = kernels::global_avg_pool(m_spf);
  return live_probabilities(head_spf().forward(f, nullptr));
}

const BinaryHead& CameraInvariantModel::head_spf() const {
  return head_spf_ ? *head_spf_ : head_mix_;
}

void CameraInvariantModel::backward_invariant(const InvariantCache& cache,
                                              const InvariantGrads& grads) {
  const InvariantOutputs& out = cache.out;
  const bool need_input = conv_hf_.has_value();
  Tensor dm_mix(out.m_mix.shape());
  if (!grads.logits_mix.empty()) {
    Tensor df = head_mix_.backward(grads.logits_mix, cache.head_mix);
    add_inplace(dm_mix, kernels::global_avg_pool_backward(df, out.m_mix.shape()));
  }
  Tensor dinput;
  if (trunk_cam_) {
    Tensor dm_cam(out.m_cam.shape());
    Tensor dm_spf(out.m_spf.shape());
    if (!grads.logits_spf.empty()) {
      Tensor df = head_spf_->backward(grads.logits_spf, cache.head_spf);
      add_inplace(dm_spf, kernels::global_avg_pool_backward(df, out.m_spf.shape()));
    }
    if (!grads.o_cam.empty()) add_inplace(dm_cam, conv_cam_->backward(out.m_cam, grads.o_cam, true));
    if (!grads.o_mix.empty()) add_inplace(dm_mix, conv_cam_->backward(out.m_mix, grads.o_mix, true));
    if (!grads.o_spf.empty()) add_inplace(dm_spf, conv_cam_->backward(out.m_spf, grads.o_spf, true));
    add_inplace(dm_mix, dm_spf);
    for (std::size_t i = 0; i < dm_cam.size(); ++i) dm_cam.data()[i] -= dm_spf.data()[i];
    dinput = trunk_cam_->backward(dm_cam, cache.trunk_cam, need_input);
  } else if (!grads.logits_spf.empty()) {
    // Without the camera branch the spoof head is the mixed head.
    Tensor df = head_mix_.backward(grads.logits_spf, cache.head_mix);
    add_inplace(dm_mix, kernels::global_avg_pool_backward(df, out.m_mix.shape()));
  }
  Tensor dmix_in = trunk_mix_.backward(dm_mix, cache.trunk_mix, need_input);
  if (conv_hf_) {
    if (dinput.empty()) {
      dinput = std::move(dmix_in);
    } else {
      add_inplace(dinput, dmix_in);
    }
    conv_hf_->backward(cache.residuals, dinput, false);
  }
}

void CameraInvariantModel::backward_augmentation(const AugmentationCache& cache,
                                                 const Tensor& dlogits_aug) {
  const AugmentationOutputs& out = cache.out;
  Tensor df = head_aug_.backward(dlogits_aug, cache.head);
  Tensor dm = kernels::global_avg_pool_backward(df, out.m_aug.shape());
  Tensor dimg = trunk_aug_.backward(dm, cache.trunk, conv_aug_.has_value());
  if (conv_aug_) {
    Tensor daug = filters::recompose_backward(cache.images, out.aug_component, dimg);
    conv_aug_->backward(cache.residuals, daug, false);
  }
}

ParameterList CameraInvariantModel::parameters() {
  ParameterList list;
  if (conv_hf_) conv_hf_->collect("filters.conv_hf", list);
  if (conv_aug_) conv_aug_->collect("filters.conv_aug", list);
  if (trunk_cam_) trunk_cam_->collect("trunk_cam", list);
  trunk_mix_.collect("trunk_mix", list);
  trunk_aug_.collect("trunk_aug", list);
  if (conv_cam_) conv_cam_->collect("conv_cam", list);
  head_mix_.collect("head_mix", list);
  if (head_spf_) head_spf_->collect("head_spf", list);
  head_aug_.collect("head_aug", list);
  return list;
}

Parameter* CameraInvariantModel::find_parameter(const std::string& name) {
  for (auto& [n, p] : parameters()) {
    if (n == name) return p;
  }
  return nullptr;
}

void CameraInvariantModel::zero_grad() {
  for (auto& [name, p] : parameters()) p->zero_grad();
}

}  // namespace caminv
