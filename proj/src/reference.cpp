#include "caminv/reference.hpp"

#include <cmath>
#include <limits>

namespace caminv::reference {

void matmul(int m, int n, int k, const float* a, const float* b, float* c) {
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int p = 0; p < k; ++p) {
        acc += static_cast<double>(a[static_cast<std::size_t>(i) * k + p]) *
               b[static_cast<std::size_t>(p) * n + j];
      }
      c[static_cast<std::size_t>(i) * n + j] = static_cast<float>(acc);
    }
  }
}

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor* bias, ConvGeometry g) {
  if (x.c() != weight.c()) throw DimensionError("reference::conv2d: channel mismatch");
  const int ho = g.out_size(x.h()), wo = g.out_size(x.w());
  Tensor y(x.n(), weight.n(), ho, wo);
  for (int s = 0; s < x.n(); ++s)
    for (int co = 0; co < weight.n(); ++co)
      for (int oy = 0; oy < ho; ++oy)
        for (int ox = 0; ox < wo; ++ox) {
          double acc = bias ? bias->data()[co] : 0.0;
          for (int ci = 0; ci < x.c(); ++ci)
            for (int ky = 0; ky < g.kernel; ++ky)
              for (int kx = 0; kx < g.kernel; ++kx) {
                const int iy = oy * g.stride - g.pad + ky;
                const int ix = ox * g.stride - g.pad + kx;
                if (iy < 0 || iy >= x.h() || ix < 0 || ix >= x.w()) continue;
                acc += static_cast<double>(weight.at(co, ci, ky, kx)) * x.at(s, ci, iy, ix);
              }
          y.at(s, co, oy, ox) = static_cast<float>(acc);
        }
  return y;
}

Tensor conv2d_backward_input(const Tensor& dy, const Tensor& weight, const Shape& input_shape,
                             ConvGeometry g) {
  std::vector<double> acc(input_shape.size(), 0.0);
  Tensor dx(input_shape);
  for (int s = 0; s < dy.n(); ++s)
    for (int co = 0; co < dy.c(); ++co)
      for (int oy = 0; oy < dy.h(); ++oy)
        for (int ox = 0; ox < dy.w(); ++ox) {
          const double d = dy.at(s, co, oy, ox);
          for (int ci = 0; ci < input_shape.c; ++ci)
            for (int ky = 0; ky < g.kernel; ++ky)
              for (int kx = 0; kx < g.kernel; ++kx) {
                const int iy = oy * g.stride - g.pad + ky;
                const int ix = ox * g.stride - g.pad + kx;
                if (iy < 0 || iy >= input_shape.h || ix < 0 || ix >= input_shape.w) continue;
                acc[dx.index(s, ci, iy, ix)] += d * weight.at(co, ci, ky, kx);
              }
        }
  for (std::size_t i = 0; i < acc.size(); ++i) dx.data()[i] = static_cast<float>(acc[i]);
  return dx;
}

void conv2d_backward_params(const Tensor& x, const Tensor& dy, ConvGeometry g, Tensor& dweight,
                            Tensor* dbias) {
  for (int co = 0; co < dweight.n(); ++co) {
    for (int ci = 0; ci < dweight.c(); ++ci)
      for (int ky = 0; ky < g.kernel; ++ky)
        for (int kx = 0; kx < g.kernel; ++kx) {
          double acc = 0.0;
          for (int s = 0; s < dy.n(); ++s)
            for (int oy = 0; oy < dy.h(); ++oy)
              for (int ox = 0; ox < dy.w(); ++ox) {
                const int iy = oy * g.stride - g.pad + ky;
                const int ix = ox * g.stride - g.pad + kx;
                if (iy < 0 || iy >= x.h() || ix < 0 || ix >= x.w()) continue;
                acc += static_cast<double>(dy.at(s, co, oy, ox)) * x.at(s, ci, iy, ix);
              }
          dweight.at(co, ci, ky, kx) += static_cast<float>(acc);
        }
    if (dbias) {
      double acc = 0.0;
      for (int s = 0; s < dy.n(); ++s)
        for (int oy = 0; oy < dy.h(); ++oy)
          for (int ox = 0; ox < dy.w(); ++ox) acc += dy.at(s, co, oy, ox);
      dbias->data()[co] += static_cast<float>(acc);
    }
  }
}

Tensor group_norm(const Tensor& x, int groups, const Tensor& gamma, const Tensor& beta, float eps) {
  if (groups <= 0 || x.c() % groups != 0) {
    throw DimensionError("reference::group_norm: groups do not divide channels");
  }
  const int cpg = x.c() / groups;
  Tensor y(x.shape());
  for (int s = 0; s < x.n(); ++s)
    for (int gi = 0; gi < groups; ++gi) {
      double sum = 0.0;
      std::size_t count = 0;
      for (int c = gi * cpg; c < (gi + 1) * cpg; ++c)
        for (int i = 0; i < x.h(); ++i)
          for (int j = 0; j < x.w(); ++j) {
            sum += x.at(s, c, i, j);
            ++count;
          }
      const double mean = sum / static_cast<double>(count);
      double sq = 0.0;
      for (int c = gi * cpg; c < (gi + 1) * cpg; ++c)
        for (int i = 0; i < x.h(); ++i)
          for (int j = 0; j < x.w(); ++j) {
            const double d = x.at(s, c, i, j) - mean;
            sq += d * d;
          }
      const double var = sq / static_cast<double>(count);
      for (int c = gi * cpg; c < (gi + 1) * cpg; ++c)
        for (int i = 0; i < x.h(); ++i)
          for (int j = 0; j < x.w(); ++j) {
            const double xh = (x.at(s, c, i, j) - mean) / std::sqrt(var + eps);
            y.at(s, c, i, j) = static_cast<float>(gamma.data()[c] * xh + beta.data()[c]);
          }
    }
  return y;
}

Tensor max_pool(const Tensor& x, ConvGeometry g) {
  const int ho = g.out_size(x.h()), wo = g.out_size(x.w());
  Tensor y(x.n(), x.c(), ho, wo);
  for (int s = 0; s < x.n(); ++s)
    for (int c = 0; c < x.c(); ++c)
      for (int oy = 0; oy < ho; ++oy)
        for (int ox = 0; ox < wo; ++ox) {
          float best = -std::numeric_limits<float>::infinity();
          for (int ky = 0; ky < g.kernel; ++ky)
            for (int kx = 0; kx < g.kernel; ++kx) {
              const int iy = oy * g.stride - g.pad + ky;
              const int ix = ox * g.stride - g.pad + kx;
              if (iy < 0 || iy >= x.h() || ix < 0 || ix >= x.w()) continue;
              best = std::max(best, x.at(s, c, iy, ix));
            }
          y.at(s, c, oy, ox) = best;
        }
  return y;
}

}  // namespace caminv::reference
