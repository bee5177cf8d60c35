#pragma once

// High-frequency preprocessing: the fixed eight-direction differential filter
// bank (EDDF), the trainable Conv_hf / Conv_aug layers that consume its
// residuals, and recomposition of the augmented image.

#include <array>

#include "caminv/layers.hpp"

namespace caminv::filters {

inline constexpr int kDirections = 8;
inline constexpr int kResidualChannels = 3 * kDirections;

using Kernel3 = std::array<std::array<int, 3>, 3>;

// E, NE, N, NW, W, SW, S, SE first differences: -1 at the centre, +1 at the
// neighbour. Rows index y (north = row 0).
struct KernelBank {
  std::array<Kernel3, kDirections> kernels;
};

const KernelBank& eddf_kernels();

// Residual stack for an N x 3 x H x W batch. Kernel k applied to colour
// channel c lands at output channel 8 * c + k. Replicate padding, stride 1.
Tensor apply_eddf(const Tensor& image);

// 5x5, 24 -> hf_channels (64 in the full profile), zero padding 2.
Conv2d make_conv_hf(int out_channels = 64);
// 3x3, 24 -> 3, zero padding 1.
Conv2d make_conv_aug();

Tensor conv_hf(const Tensor& residuals, const Conv2d& layer);
Tensor conv_aug(const Tensor& residuals, const Conv2d& layer);

// clamp(image + aug, 0, 1) elementwise.
Tensor recompose(const Tensor& image, const Tensor& aug);
// Gradient of recompose w.r.t. aug: passes dy where the sum was not clamped.
Tensor recompose_backward(const Tensor& image, const Tensor& aug, const Tensor& dy);

}  // namespace caminv::filters
