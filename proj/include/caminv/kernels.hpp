#pragma once

// OpenMP-parallel compute kernels behind every layer. Each output element is
// produced by exactly one thread with a fixed accumulation order, so results
// are bitwise identical for any thread count. Serial reference versions of
// the same operations live in reference.hpp.

#include <vector>

#include "caminv/tensor.hpp"

namespace caminv::kernels {

struct ConvGeometry {
  int kernel = 3;
  int stride = 1;
  int pad = 1;

  int out_size(int in) const { return (in + 2 * pad - kernel) / stride + 1; }
};

// C[m x n] = A[m x k] * B[k x n] (+ C when accumulate). Row-major, dense.
void gemm(int m, int n, int k, const float* a, const float* b, float* c, bool accumulate);
// C[m x n] += A[m x k] * B[n x k]^T.
void gemm_nt(int m, int n, int k, const float* a, const float* b, float* c);
void transpose(const float* src, int rows, int cols, float* dst);

// Zero-padded cross-correlation. weight is [out, in, k, k]; bias may be null.
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor* bias, ConvGeometry g);
Tensor conv2d_backward_input(const Tensor& dy, const Tensor& weight, const Shape& input_shape,
                             ConvGeometry g);
// Accumulates into dweight (and dbias when non-null).
void conv2d_backward_params(const Tensor& x, const Tensor& dy, ConvGeometry g, Tensor& dweight,
                            Tensor* dbias);

// Per-sample group normalization. xhat / inv_std are filled for backward when
// non-null; inv_std is indexed [n * groups + g].
Tensor group_norm(const Tensor& x, int groups, const Tensor& gamma, const Tensor& beta, float eps,
                  Tensor* xhat, std::vector<float>* inv_std);
Tensor group_norm_backward(const Tensor& dy, const Tensor& xhat, const std::vector<float>& inv_std,
                           int groups, const Tensor& gamma, Tensor& dgamma, Tensor& dbeta);

// Max pooling with implicit -inf padding; argmax stores flat input indices.
Tensor max_pool(const Tensor& x, ConvGeometry g, std::vector<int>* argmax);
Tensor max_pool_backward(const Tensor& dy, const std::vector<int>& argmax, const Shape& input_shape);

Tensor global_avg_pool(const Tensor& x);
Tensor global_avg_pool_backward(const Tensor& dy, const Shape& input_shape);

void relu_inplace(Tensor& x);
// Zeroes dy where the forward output was not positive.
void relu_backward_inplace(Tensor& dy, const Tensor& y);

// x [n, in, 1, 1], weight [out, in, 1, 1], bias [out, 1, 1, 1].
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);
Tensor linear_backward_input(const Tensor& dy, const Tensor& weight);
void linear_backward_params(const Tensor& x, const Tensor& dy, Tensor& dweight, Tensor& dbias);

}  // namespace caminv::kernels
