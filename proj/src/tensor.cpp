#include "caminv/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace caminv {

std::string Shape::str() const {
  std::ostringstream os;
  os << n << "x" << c << "x" << h << "x" << w;
  return os.str();
}

void Tensor::fill(float v) { std::fill(values_.begin(), values_.end(), v); }

Tensor Tensor::reshaped(Shape shape) const {
  if (shape.size() != size()) {
    throw DimensionError("reshape " + shape_.str() + " -> " + shape.str() +
                         " changes element count");
  }
  Tensor out = *this;
  out.shape_ = shape;
  return out;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (!(a.shape() == b.shape())) {
    throw DimensionError(std::string(what) + ": shape " + a.shape().str() +
                         " vs " + b.shape().str());
  }
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out.data()[i] = a.data()[i] + b.data()[i];
  return out;
}

Tensor subtract(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "subtract");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out.data()[i] = a.data()[i] - b.data()[i];
  return out;
}

void add_inplace(Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add_inplace");
  for (std::size_t i = 0; i < a.size(); ++i) a.data()[i] += b.data()[i];
}

void copy_sample(const Tensor& src, int src_n, Tensor& dst, int dst_n) {
  auto s = src.sample(src_n);
  auto d = dst.sample(dst_n);
  if (s.size() != d.size()) throw DimensionError("copy_sample: per-sample size mismatch");
  std::copy(s.begin(), s.end(), d.begin());
}

Tensor stack(std::span<const Tensor> samples) {
  if (samples.empty()) return {};
  Shape s = samples.front().shape();
  Tensor out(Shape{static_cast<int>(samples.size()), s.c, s.h, s.w});
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const Shape& si = samples[i].shape();
    if (si.c != s.c || si.h != s.h || si.w != s.w || si.n != 1) {
      throw DimensionError("stack: sample " + std::to_string(i) + " has shape " + si.str());
    }
    copy_sample(samples[i], 0, out, static_cast<int>(i));
  }
  return out;
}

Tensor take_sample(const Tensor& batch, int n) {
  Tensor out(1, batch.c(), batch.h(), batch.w());
  copy_sample(batch, n, out, 0);
  return out;
}

float max_abs_diff(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "max_abs_diff");
  float m = 0.0f;
  for (std::size_t i = 0; i < a.size(); ++i) {
    m = std::max(m, std::fabs(a.data()[i] - b.data()[i]));
  }
  return m;
}

}  // namespace caminv
