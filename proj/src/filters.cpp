#include "caminv/filters.hpp"

#include <algorithm>

namespace caminv::filters {
namespace {

// (dy, dx) offsets of the +1 tap for E, NE, N, NW, W, SW, S, SE.
constexpr std::array<std::array<int, 2>, kDirections> kOffsets{{
    {0, 1}, {-1, 1}, {-1, 0}, {-1, -1}, {0, -1}, {1, -1}, {1, 0}, {1, 1},
}};

KernelBank build_bank() {
  KernelBank bank{};
  for (int k = 0; k < kDirections; ++k) {
    Kernel3 kern{};
    kern[1][1] = -1;
    kern[1 + kOffsets[k][0]][1 + kOffsets[k][1]] = 1;
    bank.kernels[k] = kern;
  }
  return bank;
}

void require_residuals(const Tensor& residuals, const char* who) {
  if (residuals.c() != kResidualChannels) {
    throw DimensionError(std::string(who) + ": expected 24 residual channels, got " +
                         std::to_string(residuals.c()));
  }
}

}  // namespace

const KernelBank& eddf_kernels() {
  static const KernelBank bank = build_bank();
  return bank;
}

Tensor apply_eddf(const Tensor& image) {
  if (image.c() != 3) {
    throw DimensionError("apply_eddf: expected 3 channels, got " + std::to_string(image.c()));
  }
  const int n = image.n(), h = image.h(), w = image.w();
  Tensor out(n, kResidualChannels, h, w);
#pragma omp parallel for collapse(2) schedule(static)
  for (int s = 0; s < n; ++s) {
    for (int c = 0; c < 3; ++c) {
      const float* src = image.data() + image.index(s, c, 0, 0);
      for (int k = 0; k < kDirections; ++k) {
        const int dy = kOffsets[k][0], dx = kOffsets[k][1];
        float* dst = out.data() + out.index(s, kDirections * c + k, 0, 0);
        for (int y = 0; y < h; ++y) {
          const int yy = std::clamp(y + dy, 0, h - 1);
          const float* row = src + static_cast<std::size_t>(y) * w;
          const float* nrow = src + static_cast<std::size_t>(yy) * w;
          float* drow = dst + static_cast<std::size_t>(y) * w;
          for (int x = 0; x < w; ++x) {
            const int xx = std::clamp(x + dx, 0, w - 1);
            drow[x] = nrow[xx] - row[x];
          }
        }
      }
    }
  }
  return out;
}

Conv2d make_conv_hf(int out_channels) {
  return Conv2d(kResidualChannels, out_channels, 5, 1, 2, true);
}

Conv2d make_conv_aug() { return Conv2d(kResidualChannels, 3, 3, 1, 1, true); }

Tensor conv_hf(const Tensor& residuals, const Conv2d& layer) {
  require_residuals(residuals, "conv_hf");
  return layer.forward(residuals);
}

Tensor conv_aug(const Tensor& residuals, const Conv2d& layer) {
  require_residuals(residuals, "conv_aug");
  return layer.forward(residuals);
}

Tensor recompose(const Tensor& image, const Tensor& aug) {
  require_same_shape(image, aug, "recompose");
  Tensor out(image.shape());
  for (std::size_t i = 0; i < image.size(); ++i) {
    out.data()[i] = std::clamp(image.data()[i] + aug.data()[i], 0.0f, 1.0f);
  }
  return out;
}

Tensor recompose_backward(const Tensor& image, const Tensor& aug, const Tensor& dy) {
  require_same_shape(image, aug, "recompose_backward");
  Tensor d(image.shape());
  for (std::size_t i = 0; i < image.size(); ++i) {
    const float v = image.data()[i] + aug.data()[i];
    d.data()[i] = (v >= 0.0f && v <= 1.0f) ? dy.data()[i] : 0.0f;
  }
  return d;
}

}  // namespace caminv::filters
