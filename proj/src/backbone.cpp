#include "caminv/backbone.hpp"

namespace caminv {
namespace {

constexpr kernels::ConvGeometry kPoolGeometry{3, 2, 1};
constexpr int kBlocksPerStage = 2;

}  // namespace

void TrunkConfig::validate() const {
  if (in_channels <= 0) throw ConfigError("trunk: in_channels must be positive");
  auto check = [&](int ch) {
    if (gn_groups <= 0 || ch % gn_groups != 0) {
      throw ConfigError("trunk: gn_groups " + std::to_string(gn_groups) +
                        " does not divide channel count " + std::to_string(ch));
    }
  };
  check(stem_channels);
  for (int ch : stage_channels) check(ch);
}

Tensor group_normalize(const Tensor& x, int groups, const Tensor& scale, const Tensor& shift) {
  return kernels::group_norm(x, groups, scale, shift, GroupNorm::kEpsilon, nullptr, nullptr);
}

BasicBlock::BasicBlock(int in_channels, int out_channels, int stride, int groups)
    : conv1_(in_channels, out_channels, 3, stride, 1, false),
      conv2_(out_channels, out_channels, 3, 1, 1, false),
      norm1_(out_channels, groups),
      norm2_(out_channels, groups) {
  if (stride != 1 || in_channels != out_channels) {
    proj_.emplace(in_channels, out_channels, 1, stride, 0, false);
    proj_norm_.emplace(out_channels, groups);
  }
}

void BasicBlock::init(Rng& rng) {
  conv1_.init(rng);
  conv2_.init(rng);
  if (proj_) proj_->init(rng);
}

Tensor BasicBlock::forward(const Tensor& x, Cache* cache) const {
  Tensor a1 = conv1_.forward(x);
  Tensor h = norm1_.forward(a1, cache ? &cache->norm1 : nullptr);
  kernels::relu_inplace(h);
  Tensor a2 = conv2_.forward(h);
  Tensor y = norm2_.forward(a2, cache ? &cache->norm2 : nullptr);
  if (proj_) {
    Tensor p = proj_->forward(x);
    add_inplace(y, proj_norm_->forward(p, cache ? &cache->proj_norm : nullptr));
    if (cache) cache->proj_out = std::move(p);
  } else {
    add_inplace(y, x);
  }
  kernels::relu_inplace(y);
  if (cache) {
    cache->x = x;
    cache->conv1_out = std::move(a1);
    cache->act1 = std::move(h);
    cache->conv2_out = std::move(a2);
    cache->y = y;
  }
  return y;
}

Tensor BasicBlock::backward(const Tensor& dy, const Cache& cache, bool need_input_grad) {
  Tensor dsum = dy;
  kernels::relu_backward_inplace(dsum, cache.y);
  Tensor da2 = norm2_.backward(dsum, cache.norm2);
  Tensor dh = conv2_.backward(cache.act1, da2, true);
  kernels::relu_backward_inplace(dh, cache.act1);
  Tensor da1 = norm1_.backward(dh, cache.norm1);
  Tensor dx = conv1_.backward(cache.x, da1, need_input_grad);
  if (proj_) {
    Tensor dp = proj_norm_->backward(dsum, cache.proj_norm);
    Tensor dxs = proj_->backward(cache.x, dp, need_input_grad);
    if (need_input_grad) add_inplace(dx, dxs);
  } else if (need_input_grad) {
    add_inplace(dx, dsum);
  }
  return dx;
}

void BasicBlock::collect(const std::string& prefix, ParameterList& out) {
  conv1_.collect(prefix + ".conv1", out);
  norm1_.collect(prefix + ".norm1", out);
  conv2_.collect(prefix + ".conv2", out);
  norm2_.collect(prefix + ".norm2", out);
  if (proj_) {
    proj_->collect(prefix + ".proj", out);
    proj_norm_->collect(prefix + ".proj_norm", out);
  }
}

Trunk::Trunk(const TrunkConfig& config)
    : config_(config),
      stem_(config.in_channels, config.stem_channels, 7, 2, 3, false),
      stem_norm_(config.stem_channels, config.gn_groups) {
  config_.validate();
  int in = config.stem_channels;
  for (int stage = 0; stage < 3; ++stage) {
    const int out = config.stage_channels[stage];
    for (int b = 0; b < kBlocksPerStage; ++b) {
      const int stride = (stage > 0 && b == 0) ? 2 : 1;
      blocks_.emplace_back(b == 0 ? in : out, out, stride, config.gn_groups);
    }
    in = out;
  }
}

void Trunk::init(Rng& rng) {
  stem_.init(rng);
  for (auto& b : blocks_) b.init(rng);
}

Tensor Trunk::forward(const Tensor& x, Cache* cache, std::vector<Shape>* trace) const {
  if (x.c() != config_.in_channels) {
    throw DimensionError("trunk: expected " + std::to_string(config_.in_channels) +
                         " input channels, got " + std::to_string(x.c()));
  }
  if (x.h() % 16 != 0 || x.w() % 16 != 0 || x.h() == 0 || x.w() == 0) {
    throw DimensionError("trunk: spatial size " + std::to_string(x.h()) + "x" +
                         std::to_string(x.w()) + " is not divisible by 16");
  }
  Tensor s = stem_.forward(x);
  if (trace) trace->push_back(s.shape());
  Tensor a = stem_norm_.forward(s, cache ? &cache->stem_norm : nullptr);
  kernels::relu_inplace(a);
  Tensor h = kernels::max_pool(a, kPoolGeometry, cache ? &cache->pool_argmax : nullptr);
  if (trace) trace->push_back(h.shape());
  if (cache) {
    cache->x = x;
    cache->stem_out = std::move(s);
    cache->stem_act = std::move(a);
    cache->blocks.assign(blocks_.size(), {});
  }
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    h = blocks_[i].forward(h, cache ? &cache->blocks[i] : nullptr);
    if (trace && i % kBlocksPerStage == kBlocksPerStage - 1) trace->push_back(h.shape());
  }
  return h;
}

Tensor Trunk::backward(const Tensor& dy, const Cache& cache, bool need_input_grad) {
  Tensor d = dy;
  for (std::size_t i = blocks_.size(); i-- > 0;) {
    d = blocks_[i].backward(d, cache.blocks[i], true);
  }
  Tensor da = kernels::max_pool_backward(d, cache.pool_argmax, cache.stem_act.shape());
  kernels::relu_backward_inplace(da, cache.stem_act);
  Tensor ds = stem_norm_.backward(da, cache.stem_norm);
  return stem_.backward(cache.x, ds, need_input_grad);
}

void Trunk::collect(const std::string& prefix, ParameterList& out) {
  stem_.collect(prefix + ".stem", out);
  stem_norm_.collect(prefix + ".stem_norm", out);
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    const std::size_t stage = i / kBlocksPerStage + 1, block = i % kBlocksPerStage;
    blocks_[i].collect(prefix + ".stage" + std::to_string(stage) + ".block" + std::to_string(block),
                       out);
  }
}

}  // namespace caminv
