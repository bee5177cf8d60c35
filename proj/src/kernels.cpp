#include "caminv/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace caminv::kernels {
namespace {

constexpr int kRowTile = 4;
constexpr int kColTile = 32;
constexpr int kDepthBlock = 256;
constexpr int kRowBlock = 64;
constexpr int kColBlock = 1024;

// 4 x 32 register tile of C, accumulated over [k0, k1).
inline void tile_4x32(const float* a, int lda, const float* b, int ldb, float* c, int ldc, int k0,
                      int k1) {
  float acc[kRowTile][kColTile];
  for (int r = 0; r < kRowTile; ++r)
    for (int t = 0; t < kColTile; ++t) acc[r][t] = c[r * ldc + t];
  for (int kk = k0; kk < k1; ++kk) {
    const float* bp = b + static_cast<std::size_t>(kk) * ldb;
    for (int r = 0; r < kRowTile; ++r) {
      const float ar = a[r * lda + kk];
      for (int t = 0; t < kColTile; ++t) acc[r][t] += ar * bp[t];
    }
  }
  for (int r = 0; r < kRowTile; ++r)
    for (int t = 0; t < kColTile; ++t) c[r * ldc + t] = acc[r][t];
}

inline void edge_block(const float* a, int lda, const float* b, int ldb, float* c, int ldc,
                       int rows, int cols, int k0, int k1) {
  for (int r = 0; r < rows; ++r) {
    float* __restrict cr = c + static_cast<std::size_t>(r) * ldc;
    for (int kk = k0; kk < k1; ++kk) {
      const float ar = a[static_cast<std::size_t>(r) * lda + kk];
      const float* __restrict bp = b + static_cast<std::size_t>(kk) * ldb;
      for (int t = 0; t < cols; ++t) cr[t] += ar * bp[t];
    }
  }
}

// Columns of the im2col matrix enumerate (sample, output position) pairs of
// the whole batch; they are processed in blocks small enough to stay in L2.
struct ColumnSpace {
  int ho = 0;
  int wo = 0;
  std::size_t positions = 0;  // ho * wo
  std::size_t total = 0;      // batch * positions
};

int column_block(int rows) {
  constexpr int kTarget = 1 << 17;  // floats per block (512 KiB)
  int qb = std::max(64, kTarget / std::max(rows, 1));
  return (qb + kColTile - 1) / kColTile * kColTile;
}

// col[r][q - q0] for flattened columns q in [q0, q1).
void im2col_range(const Tensor& x, ConvGeometry g, const ColumnSpace& cs, std::size_t q0,
                  std::size_t q1, float* col) {
  const int cin = x.c(), hi = x.h(), wi = x.w(), k = g.kernel;
  const int rows = cin * k * k;
  const std::size_t ld = q1 - q0;
#pragma omp parallel for schedule(static)
  for (int r = 0; r < rows; ++r) {
    const int ci = r / (k * k);
    const int ky = (r / k) % k;
    const int kx = r % k;
    float* dst = col + static_cast<std::size_t>(r) * ld;
    std::size_t q = q0;
    while (q < q1) {
      const int s = static_cast<int>(q / cs.positions);
      const std::size_t p = q % cs.positions;
      const int oy = static_cast<int>(p / cs.wo);
      const int ox_begin = static_cast<int>(p % cs.wo);
      const int ox_end = static_cast<int>(std::min<std::size_t>(cs.wo, ox_begin + (q1 - q)));
      float* d = dst + (q - q0);
      const int iy = oy * g.stride - g.pad + ky;
      if (iy < 0 || iy >= hi) {
        std::fill(d, d + (ox_end - ox_begin), 0.0f);
      } else {
        const float* srow = x.data() + x.index(s, ci, iy, 0);
        if (g.stride == 1) {
          // valid ox satisfy 0 <= ox - pad + kx < wi
          const int lo = std::clamp(g.pad - kx, ox_begin, ox_end);
          const int hi_ox = std::clamp(wi + g.pad - kx, lo, ox_end);
          std::fill(d, d + (lo - ox_begin), 0.0f);
          std::copy(srow + (lo - g.pad + kx), srow + (hi_ox - g.pad + kx), d + (lo - ox_begin));
          std::fill(d + (hi_ox - ox_begin), d + (ox_end - ox_begin), 0.0f);
        } else {
          for (int ox = ox_begin; ox < ox_end; ++ox) {
            const int ix = ox * g.stride - g.pad + kx;
            d[ox - ox_begin] = (ix >= 0 && ix < wi) ? srow[ix] : 0.0f;
          }
        }
      }
      q += ox_end - ox_begin;
    }
  }
}

// Scatter-add of a column block back into dx; each thread owns whole input
// channels.
void col2im_range(const float* col, ConvGeometry g, const ColumnSpace& cs, std::size_t q0,
                  std::size_t q1, Tensor& dx) {
  const int cin = dx.c(), hi = dx.h(), wi = dx.w(), k = g.kernel;
  const std::size_t ld = q1 - q0;
#pragma omp parallel for schedule(static)
  for (int ci = 0; ci < cin; ++ci) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const int r = (ci * k + ky) * k + kx;
        const float* src = col + static_cast<std::size_t>(r) * ld;
        std::size_t q = q0;
        while (q < q1) {
          const int s = static_cast<int>(q / cs.positions);
          const std::size_t p = q % cs.positions;
          const int oy = static_cast<int>(p / cs.wo);
          const int ox_begin = static_cast<int>(p % cs.wo);
          const int ox_end = static_cast<int>(std::min<std::size_t>(cs.wo, ox_begin + (q1 - q)));
          const float* sp = src + (q - q0);
          const int iy = oy * g.stride - g.pad + ky;
          if (iy >= 0 && iy < hi) {
            float* drow = dx.data() + dx.index(s, ci, iy, 0);
            for (int ox = ox_begin; ox < ox_end; ++ox) {
              const int ix = ox * g.stride - g.pad + kx;
              if (ix >= 0 && ix < wi) drow[ix] += sp[ox - ox_begin];
            }
          }
          q += ox_end - ox_begin;
        }
      }
    }
  }
}

// Copies dy columns [q0, q1) into a [channels x (q1 - q0)] matrix.
void gather_columns(const Tensor& t, const ColumnSpace& cs, std::size_t q0, std::size_t q1,
                    float* out) {
  const int ch = t.c();
  const std::size_t ld = q1 - q0;
#pragma omp parallel for schedule(static)
  for (int c = 0; c < ch; ++c) {
    std::size_t q = q0;
    while (q < q1) {
      const int s = static_cast<int>(q / cs.positions);
      const std::size_t p = q % cs.positions;
      const std::size_t run = std::min(cs.positions - p, q1 - q);
      const float* src = t.data() + t.index(s, c, 0, 0) + p;
      std::copy(src, src + run, out + static_cast<std::size_t>(c) * ld + (q - q0));
      q += run;
    }
  }
}

void scatter_columns(const float* in, const Tensor* bias, const ColumnSpace& cs, std::size_t q0,
                     std::size_t q1, Tensor& t) {
  const int ch = t.c();
  const std::size_t ld = q1 - q0;
#pragma omp parallel for schedule(static)
  for (int c = 0; c < ch; ++c) {
    const float b = bias ? bias->data()[c] : 0.0f;
    std::size_t q = q0;
    while (q < q1) {
      const int s = static_cast<int>(q / cs.positions);
      const std::size_t p = q % cs.positions;
      const std::size_t run = std::min(cs.positions - p, q1 - q);
      const float* src = in + static_cast<std::size_t>(c) * ld + (q - q0);
      float* dst = t.data() + t.index(s, c, 0, 0) + p;
      for (std::size_t i = 0; i < run; ++i) dst[i] = src[i] + b;
      q += run;
    }
  }
}

ColumnSpace column_space(int batch, int ho, int wo) {
  ColumnSpace cs;
  cs.ho = ho;
  cs.wo = wo;
  cs.positions = static_cast<std::size_t>(ho) * wo;
  cs.total = cs.positions * batch;
  return cs;
}

void check_conv_args(const Tensor& x, const Tensor& weight, ConvGeometry g) {
  if (weight.c() != x.c()) {
    throw DimensionError("conv2d: input has " + std::to_string(x.c()) +
                         " channels, weight expects " + std::to_string(weight.c()));
  }
  if (weight.h() != g.kernel || weight.w() != g.kernel) {
    throw DimensionError("conv2d: weight kernel " + weight.shape().str() + " vs geometry " +
                         std::to_string(g.kernel));
  }
  if (g.out_size(x.h()) <= 0 || g.out_size(x.w()) <= 0) {
    throw DimensionError("conv2d: input " + x.shape().str() + " too small for kernel");
  }
}

}  // namespace

void gemm(int m, int n, int k, const float* a, const float* b, float* c, bool accumulate) {
  if (!accumulate) std::fill(c, c + static_cast<std::size_t>(m) * n, 0.0f);
  if (m == 0 || n == 0 || k == 0) return;
  const int row_blocks = (m + kRowBlock - 1) / kRowBlock;
  const int col_blocks = (n + kColBlock - 1) / kColBlock;
#pragma omp parallel for collapse(2) schedule(static)
  for (int rb = 0; rb < row_blocks; ++rb) {
    for (int cb = 0; cb < col_blocks; ++cb) {
      const int i0 = rb * kRowBlock, i1 = std::min(m, i0 + kRowBlock);
      const int j0 = cb * kColBlock, j1 = std::min(n, j0 + kColBlock);
      for (int k0 = 0; k0 < k; k0 += kDepthBlock) {
        const int k1 = std::min(k, k0 + kDepthBlock);
        int i = i0;
        for (; i + kRowTile <= i1; i += kRowTile) {
          int j = j0;
          for (; j + kColTile <= j1; j += kColTile) {
            tile_4x32(a + static_cast<std::size_t>(i) * k, k, b + j, n,
                      c + static_cast<std::size_t>(i) * n + j, n, k0, k1);
          }
          if (j < j1) {
            edge_block(a + static_cast<std::size_t>(i) * k, k, b + j, n,
                       c + static_cast<std::size_t>(i) * n + j, n, kRowTile, j1 - j, k0, k1);
          }
        }
        if (i < i1) {
          edge_block(a + static_cast<std::size_t>(i) * k, k, b + j0, n,
                     c + static_cast<std::size_t>(i) * n + j0, n, i1 - i, j1 - j0, k0, k1);
        }
      }
    }
  }
}

void gemm_nt(int m, int n, int k, const float* a, const float* b, float* c) {
  constexpr int kLanes = 16;
  const int kv = k / kLanes * kLanes;
#pragma omp parallel for collapse(2) schedule(static)
  for (int i0 = 0; i0 < m; i0 += 2) {
    for (int j0 = 0; j0 < n; j0 += 4) {
      const int ie = std::min(m, i0 + 2), je = std::min(n, j0 + 4);
      if (ie - i0 == 2 && je - j0 == 4) {
        float acc[2][4][kLanes] = {};
        const float* a0 = a + static_cast<std::size_t>(i0) * k;
        const float* a1 = a0 + k;
        const float* b0 = b + static_cast<std::size_t>(j0) * k;
        for (int p = 0; p < kv; p += kLanes) {
          for (int jj = 0; jj < 4; ++jj) {
            const float* bj = b0 + static_cast<std::size_t>(jj) * k + p;
            for (int l = 0; l < kLanes; ++l) {
              acc[0][jj][l] += a0[p + l] * bj[l];
              acc[1][jj][l] += a1[p + l] * bj[l];
            }
          }
        }
        for (int ii = 0; ii < 2; ++ii) {
          const float* ai = a + static_cast<std::size_t>(i0 + ii) * k;
          for (int jj = 0; jj < 4; ++jj) {
            const float* bj = b0 + static_cast<std::size_t>(jj) * k;
            float s = 0.0f;
            for (int l = 0; l < kLanes; ++l) s += acc[ii][jj][l];
            for (int p = kv; p < k; ++p) s += ai[p] * bj[p];
            c[static_cast<std::size_t>(i0 + ii) * n + j0 + jj] += s;
          }
        }
      } else {
        for (int i = i0; i < ie; ++i) {
          for (int j = j0; j < je; ++j) {
            const float* ai = a + static_cast<std::size_t>(i) * k;
            const float* bj = b + static_cast<std::size_t>(j) * k;
            float lanes[kLanes] = {};
            for (int p = 0; p < kv; p += kLanes)
              for (int l = 0; l < kLanes; ++l) lanes[l] += ai[p + l] * bj[p + l];
            float s = 0.0f;
            for (int l = 0; l < kLanes; ++l) s += lanes[l];
            for (int p = kv; p < k; ++p) s += ai[p] * bj[p];
            c[static_cast<std::size_t>(i) * n + j] += s;
          }
        }
      }
    }
  }
}

void transpose(const float* src, int rows, int cols, float* dst) {
  constexpr int kB = 32;
#pragma omp parallel for schedule(static)
  for (int c0 = 0; c0 < cols; c0 += kB) {
    for (int r0 = 0; r0 < rows; r0 += kB) {
      const int r1 = std::min(rows, r0 + kB), c1 = std::min(cols, c0 + kB);
      for (int c = c0; c < c1; ++c)
        for (int r = r0; r < r1; ++r)
          dst[static_cast<std::size_t>(c) * rows + r] = src[static_cast<std::size_t>(r) * cols + c];
    }
  }
}

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor* bias, ConvGeometry g) {
  check_conv_args(x, weight, g);
  const int cout = weight.n();
  const int rows = x.c() * g.kernel * g.kernel;
  const ColumnSpace cs = column_space(x.n(), g.out_size(x.h()), g.out_size(x.w()));
  Tensor y(x.n(), cout, cs.ho, cs.wo);
  const std::size_t qb = column_block(rows);
  std::vector<float> col(rows * qb), out(cout * qb);
  for (std::size_t q0 = 0; q0 < cs.total; q0 += qb) {
    const std::size_t q1 = std::min(cs.total, q0 + qb);
    const int cols = static_cast<int>(q1 - q0);
    im2col_range(x, g, cs, q0, q1, col.data());
    gemm(cout, cols, rows, weight.data(), col.data(), out.data(), false);
    scatter_columns(out.data(), bias, cs, q0, q1, y);
  }
  return y;
}

Tensor conv2d_backward_input(const Tensor& dy, const Tensor& weight, const Shape& input_shape,
                             ConvGeometry g) {
  const int cout = weight.n(), cin = weight.c();
  if (dy.c() != cout || input_shape.c != cin) {
    throw DimensionError("conv2d_backward_input: channel mismatch");
  }
  const int rows = cin * g.kernel * g.kernel;
  const ColumnSpace cs = column_space(dy.n(), dy.h(), dy.w());
  Tensor dx(input_shape);
  std::vector<float> wt(static_cast<std::size_t>(rows) * cout);
  transpose(weight.data(), cout, rows, wt.data());
  const std::size_t qb = column_block(rows);
  std::vector<float> dymat(cout * qb), dcol(rows * qb);
  for (std::size_t q0 = 0; q0 < cs.total; q0 += qb) {
    const std::size_t q1 = std::min(cs.total, q0 + qb);
    const int cols = static_cast<int>(q1 - q0);
    gather_columns(dy, cs, q0, q1, dymat.data());
    gemm(rows, cols, cout, wt.data(), dymat.data(), dcol.data(), false);
    col2im_range(dcol.data(), g, cs, q0, q1, dx);
  }
  return dx;
}

void conv2d_backward_params(const Tensor& x, const Tensor& dy, ConvGeometry g, Tensor& dweight,
                            Tensor* dbias) {
  const int cout = dweight.n();
  if (dy.c() != cout || dweight.c() != x.c()) {
    throw DimensionError("conv2d_backward_params: channel mismatch");
  }
  const int rows = x.c() * g.kernel * g.kernel;
  const ColumnSpace cs = column_space(x.n(), dy.h(), dy.w());
  const std::size_t qb = column_block(rows);
  std::vector<float> col(rows * qb), colt(rows * qb), dymat(cout * qb);
  std::vector<double> bias_acc(dbias ? cout : 0, 0.0);
  for (std::size_t q0 = 0; q0 < cs.total; q0 += qb) {
    const std::size_t q1 = std::min(cs.total, q0 + qb);
    const int cols = static_cast<int>(q1 - q0);
    im2col_range(x, g, cs, q0, q1, col.data());
    gather_columns(dy, cs, q0, q1, dymat.data());
    transpose(col.data(), rows, cols, colt.data());
    gemm(cout, rows, cols, dymat.data(), colt.data(), dweight.data(), true);
    if (dbias) {
      for (int co = 0; co < cout; ++co) {
        const float* src = dymat.data() + static_cast<std::size_t>(co) * cols;
        for (int j = 0; j < cols; ++j) bias_acc[co] += src[j];
      }
    }
  }
  for (std::size_t co = 0; co < bias_acc.size(); ++co) {
    dbias->data()[co] += static_cast<float>(bias_acc[co]);
  }
}

Tensor group_norm(const Tensor& x, int groups, const Tensor& gamma, const Tensor& beta, float eps,
                  Tensor* xhat, std::vector<float>* inv_std) {
  const int n = x.n(), c = x.c();
  if (groups <= 0 || c % groups != 0) {
    throw DimensionError("group_norm: " + std::to_string(groups) + " groups do not divide " +
                         std::to_string(c) + " channels");
  }
  if (static_cast<int>(gamma.size()) != c || static_cast<int>(beta.size()) != c) {
    throw DimensionError("group_norm: affine parameter length mismatch");
  }
  const int cpg = c / groups;
  const std::size_t hw = static_cast<std::size_t>(x.h()) * x.w();
  const std::size_t count = cpg * hw;
  Tensor y(x.shape());
  if (xhat) *xhat = Tensor(x.shape());
  if (inv_std) inv_std->assign(static_cast<std::size_t>(n) * groups, 0.0f);
#pragma omp parallel for collapse(2) schedule(static)
  for (int s = 0; s < n; ++s) {
    for (int gi = 0; gi < groups; ++gi) {
      const std::size_t base = x.index(s, gi * cpg, 0, 0);
      const float* src = x.data() + base;
      double sum = 0.0;
      for (std::size_t i = 0; i < count; ++i) sum += src[i];
      const double mean = sum / static_cast<double>(count);
      double sq = 0.0;
      for (std::size_t i = 0; i < count; ++i) {
        const double d = src[i] - mean;
        sq += d * d;
      }
      const double var = sq / static_cast<double>(count);
      const float istd = static_cast<float>(1.0 / std::sqrt(var + eps));
      const float fmean = static_cast<float>(mean);
      if (inv_std) (*inv_std)[static_cast<std::size_t>(s) * groups + gi] = istd;
      for (int cc = 0; cc < cpg; ++cc) {
        const int ch = gi * cpg + cc;
        const float ga = gamma.data()[ch], be = beta.data()[ch];
        const std::size_t off = cc * hw;
        for (std::size_t i = 0; i < hw; ++i) {
          const float xh = (src[off + i] - fmean) * istd;
          if (xhat) xhat->data()[base + off + i] = xh;
          y.data()[base + off + i] = ga * xh + be;
        }
      }
    }
  }
  return y;
}

Tensor group_norm_backward(const Tensor& dy, const Tensor& xhat, const std::vector<float>& inv_std,
                           int groups, const Tensor& gamma, Tensor& dgamma, Tensor& dbeta) {
  require_same_shape(dy, xhat, "group_norm_backward");
  const int n = dy.n(), c = dy.c();
  const int cpg = c / groups;
  const std::size_t hw = static_cast<std::size_t>(dy.h()) * dy.w();
  const std::size_t count = cpg * hw;
  Tensor dx(dy.shape());
#pragma omp parallel for schedule(static)
  for (int ch = 0; ch < c; ++ch) {
    double dg = 0.0, db = 0.0;
    for (int s = 0; s < n; ++s) {
      const std::size_t base = dy.index(s, ch, 0, 0);
      for (std::size_t i = 0; i < hw; ++i) {
        dg += static_cast<double>(dy.data()[base + i]) * xhat.data()[base + i];
        db += dy.data()[base + i];
      }
    }
    dgamma.data()[ch] += static_cast<float>(dg);
    dbeta.data()[ch] += static_cast<float>(db);
  }
#pragma omp parallel for collapse(2) schedule(static)
  for (int s = 0; s < n; ++s) {
    for (int gi = 0; gi < groups; ++gi) {
      const std::size_t base = dy.index(s, gi * cpg, 0, 0);
      double sum_d = 0.0, sum_dx = 0.0;
      for (int cc = 0; cc < cpg; ++cc) {
        const float ga = gamma.data()[gi * cpg + cc];
        const std::size_t off = base + cc * hw;
        for (std::size_t i = 0; i < hw; ++i) {
          const double d = static_cast<double>(dy.data()[off + i]) * ga;
          sum_d += d;
          sum_dx += d * xhat.data()[off + i];
        }
      }
      const float istd = inv_std[static_cast<std::size_t>(s) * groups + gi];
      const float mean_d = static_cast<float>(sum_d / static_cast<double>(count));
      const float mean_dx = static_cast<float>(sum_dx / static_cast<double>(count));
      for (int cc = 0; cc < cpg; ++cc) {
        const float ga = gamma.data()[gi * cpg + cc];
        const std::size_t off = base + cc * hw;
        for (std::size_t i = 0; i < hw; ++i) {
          const float d = dy.data()[off + i] * ga;
          dx.data()[off + i] = istd * (d - mean_d - xhat.data()[off + i] * mean_dx);
        }
      }
    }
  }
  return dx;
}

Tensor max_pool(const Tensor& x, ConvGeometry g, std::vector<int>* argmax) {
  const int ho = g.out_size(x.h()), wo = g.out_size(x.w());
  Tensor y(x.n(), x.c(), ho, wo);
  if (argmax) argmax->assign(y.size(), -1);
#pragma omp parallel for collapse(2) schedule(static)
  for (int s = 0; s < x.n(); ++s) {
    for (int ch = 0; ch < x.c(); ++ch) {
      const std::size_t in_base = x.index(s, ch, 0, 0);
      for (int oy = 0; oy < ho; ++oy) {
        for (int ox = 0; ox < wo; ++ox) {
          float best = -std::numeric_limits<float>::infinity();
          int best_idx = -1;
          for (int ky = 0; ky < g.kernel; ++ky) {
            const int iy = oy * g.stride - g.pad + ky;
            if (iy < 0 || iy >= x.h()) continue;
            for (int kx = 0; kx < g.kernel; ++kx) {
              const int ix = ox * g.stride - g.pad + kx;
              if (ix < 0 || ix >= x.w()) continue;
              const int idx = static_cast<int>(in_base) + iy * x.w() + ix;
              if (x.data()[idx] > best) {
                best = x.data()[idx];
                best_idx = idx;
              }
            }
          }
          const std::size_t o = y.index(s, ch, oy, ox);
          y.data()[o] = best;
          if (argmax) (*argmax)[o] = best_idx;
        }
      }
    }
  }
  return y;
}

Tensor max_pool_backward(const Tensor& dy, const std::vector<int>& argmax, const Shape& input_shape) {
  Tensor dx(input_shape);
  // Windows overlap, so scatter per (sample, channel) plane to keep ownership.
  const std::size_t out_plane = static_cast<std::size_t>(dy.h()) * dy.w();
#pragma omp parallel for collapse(2) schedule(static)
  for (int s = 0; s < dy.n(); ++s) {
    for (int ch = 0; ch < dy.c(); ++ch) {
      const std::size_t o0 = dy.index(s, ch, 0, 0);
      for (std::size_t p = 0; p < out_plane; ++p) {
        const int idx = argmax[o0 + p];
        if (idx >= 0) dx.data()[idx] += dy.data()[o0 + p];
      }
    }
  }
  return dx;
}

Tensor global_avg_pool(const Tensor& x) {
  Tensor y(x.n(), x.c(), 1, 1);
  const std::size_t hw = static_cast<std::size_t>(x.h()) * x.w();
  for (int s = 0; s < x.n(); ++s) {
    for (int ch = 0; ch < x.c(); ++ch) {
      const float* src = x.data() + x.index(s, ch, 0, 0);
      double acc = 0.0;
      for (std::size_t i = 0; i < hw; ++i) acc += src[i];
      y.at(s, ch, 0, 0) = static_cast<float>(acc / static_cast<double>(hw));
    }
  }
  return y;
}

Tensor global_avg_pool_backward(const Tensor& dy, const Shape& input_shape) {
  Tensor dx(input_shape);
  const std::size_t hw = static_cast<std::size_t>(input_shape.h) * input_shape.w;
  const float scale = 1.0f / static_cast<float>(hw);
  for (int s = 0; s < input_shape.n; ++s) {
    for (int ch = 0; ch < input_shape.c; ++ch) {
      const float v = dy.at(s, ch, 0, 0) * scale;
      float* dst = dx.data() + dx.index(s, ch, 0, 0);
      std::fill(dst, dst + hw, v);
    }
  }
  return dx;
}

void relu_inplace(Tensor& x) {
  float* d = x.data();
  const std::size_t n = x.size();
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < n; ++i) d[i] = d[i] > 0.0f ? d[i] : 0.0f;
}

void relu_backward_inplace(Tensor& dy, const Tensor& y) {
  require_same_shape(dy, y, "relu_backward");
  float* d = dy.data();
  const float* o = y.data();
  const std::size_t n = dy.size();
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < n; ++i) d[i] = o[i] > 0.0f ? d[i] : 0.0f;
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  const int in = weight.c(), out = weight.n();
  const int xin = x.c() * x.h() * x.w();
  if (xin != in) {
    throw DimensionError("linear: input length " + std::to_string(xin) + " vs weight " +
                         std::to_string(in));
  }
  Tensor y(x.n(), out, 1, 1);
  for (int s = 0; s < x.n(); ++s) {
    const float* xs = x.data() + static_cast<std::size_t>(s) * in;
    for (int o = 0; o < out; ++o) {
      const float* wr = weight.data() + static_cast<std::size_t>(o) * in;
      float acc = bias.data()[o];
      for (int i = 0; i < in; ++i) acc += wr[i] * xs[i];
      y.data()[static_cast<std::size_t>(s) * out + o] = acc;
    }
  }
  return y;
}

Tensor linear_backward_input(const Tensor& dy, const Tensor& weight) {
  const int in = weight.c(), out = weight.n();
  Tensor dx(dy.n(), in, 1, 1);
  for (int s = 0; s < dy.n(); ++s) {
    float* dxs = dx.data() + static_cast<std::size_t>(s) * in;
    for (int o = 0; o < out; ++o) {
      const float d = dy.data()[static_cast<std::size_t>(s) * out + o];
      const float* wr = weight.data() + static_cast<std::size_t>(o) * in;
      for (int i = 0; i < in; ++i) dxs[i] += d * wr[i];
    }
  }
  return dx;
}

void linear_backward_params(const Tensor& x, const Tensor& dy, Tensor& dweight, Tensor& dbias) {
  const int in = dweight.c(), out = dweight.n();
  for (int o = 0; o < out; ++o) {
    float* dw = dweight.data() + static_cast<std::size_t>(o) * in;
    for (int s = 0; s < dy.n(); ++s) {
      const float d = dy.data()[static_cast<std::size_t>(s) * out + o];
      const float* xs = x.data() + static_cast<std::size_t>(s) * in;
      for (int i = 0; i < in; ++i) dw[i] += d * xs[i];
      dbias.data()[o] += d;
    }
  }
}

}  // namespace caminv::kernels
