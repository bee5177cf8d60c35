#pragma once

// Straightforward serial implementations of the kernels in kernels.hpp.
// Nested loops with double accumulation; used as oracles in tests and as the
// baseline in the kernel benchmark.

#include <vector>

#include "caminv/kernels.hpp"
#include "caminv/tensor.hpp"

namespace caminv::reference {

using kernels::ConvGeometry;

void matmul(int m, int n, int k, const float* a, const float* b, float* c);

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor* bias, ConvGeometry g);
Tensor conv2d_backward_input(const Tensor& dy, const Tensor& weight, const Shape& input_shape,
                             ConvGeometry g);
void conv2d_backward_params(const Tensor& x, const Tensor& dy, ConvGeometry g, Tensor& dweight,
                            Tensor* dbias);

Tensor group_norm(const Tensor& x, int groups, const Tensor& gamma, const Tensor& beta, float eps);

Tensor max_pool(const Tensor& x, ConvGeometry g);

}  // namespace caminv::reference
