#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "caminv/errors.hpp"

namespace caminv {

struct Shape {
  int n = 0;
  int c = 0;
  int h = 0;
  int w = 0;

  std::size_t size() const {
    return static_cast<std::size_t>(n) * c * h * w;
  }
  bool operator==(const Shape&) const = default;
  std::string str() const;
};

// Dense float32 array in NCHW order. Weight tensors reuse the same layout
// ([out, in, kh, kw]; vectors as [len, 1, 1, 1]).
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, float fill = 0.0f)
      : shape_(shape), values_(shape.size(), fill) {}
  Tensor(int n, int c, int h, int w, float fill = 0.0f)
      : Tensor(Shape{n, c, h, w}, fill) {}

  const Shape& shape() const { return shape_; }
  int n() const { return shape_.n; }
  int c() const { return shape_.c; }
  int h() const { return shape_.h; }
  int w() const { return shape_.w; }
  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }

  float* data() { return values_.data(); }
  const float* data() const { return values_.data(); }
  std::span<float> span() { return values_; }
  std::span<const float> span() const { return values_; }
  std::vector<float>& values() { return values_; }
  const std::vector<float>& values() const { return values_; }

  std::size_t index(int n, int c, int h, int w) const {
    return ((static_cast<std::size_t>(n) * shape_.c + c) * shape_.h + h) *
               shape_.w + w;
  }
  float& at(int n, int c, int h, int w) { return values_[index(n, c, h, w)]; }
  float at(int n, int c, int h, int w) const {
    return values_[index(n, c, h, w)];
  }

  // Contiguous view of one sample (c*h*w values).
  std::span<float> sample(int n) {
    const std::size_t stride = static_cast<std::size_t>(shape_.c) * shape_.h * shape_.w;
    return std::span<float>(values_).subspan(n * stride, stride);
  }
  std::span<const float> sample(int n) const {
    const std::size_t stride = static_cast<std::size_t>(shape_.c) * shape_.h * shape_.w;
    return std::span<const float>(values_).subspan(n * stride, stride);
  }

  void fill(float v);
  // Same storage, new shape with identical element count.
  Tensor reshaped(Shape shape) const;

 private:
  Shape shape_{};
  std::vector<float> values_;
};

void require_same_shape(const Tensor& a, const Tensor& b, const char* what);

Tensor add(const Tensor& a, const Tensor& b);
Tensor subtract(const Tensor& a, const Tensor& b);
void add_inplace(Tensor& a, const Tensor& b);

// Copies sample `src_n` of `src` into sample `dst_n` of `dst`.
void copy_sample(const Tensor& src, int src_n, Tensor& dst, int dst_n);
// Stacks single-sample tensors of equal shape into one batch.
Tensor stack(std::span<const Tensor> samples);
Tensor take_sample(const Tensor& batch, int n);

float max_abs_diff(const Tensor& a, const Tensor& b);

}  // namespace caminv
