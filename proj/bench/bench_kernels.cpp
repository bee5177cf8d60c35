// Times the OpenMP kernels against the serial reference implementations on
// the layer shapes that dominate a training step.

#include <omp.h>

#include <chrono>
#include <cstdio>
#include <functional>
#include <random>

#include "caminv/kernels.hpp"
#include "caminv/reference.hpp"

using namespace caminv;

namespace {

Tensor random_tensor(Shape s, std::mt19937_64& rng) {
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  Tensor t(s);
  for (auto& v : t.values()) v = u(rng);
  return t;
}

double seconds(const std::function<void()>& fn, int reps) {
  fn();
  const auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < reps; ++i) fn();
  const auto t1 = std::chrono::steady_clock::now();
  return std::chrono::duration<double>(t1 - t0).count() / reps;
}

struct ConvCase {
  const char* name;
  Shape input;
  int out_channels;
  kernels::ConvGeometry geom;
};

}  // namespace

int main(int argc, char** argv) {
  const bool with_reference = !(argc > 1 && std::string(argv[1]) == "--fast-only");
  std::mt19937_64 rng(7);
  std::printf("threads: %d\n", omp_get_max_threads());

  {
    const int m = 128, n = 4096, k = 576;
    Tensor a = random_tensor({1, 1, m, k}, rng), b = random_tensor({1, 1, k, n}, rng);
    Tensor c(Shape{1, 1, m, n});
    const double t = seconds([&] { kernels::gemm(m, n, k, a.data(), b.data(), c.data(), false); }, 5);
    std::printf("%-28s omp %9.3f ms  %7.2f GFLOP/s", "gemm 128x4096x576", t * 1e3,
                2.0 * m * n * k / t * 1e-9);
    if (with_reference) {
      const double r = seconds([&] { reference::matmul(m, n, k, a.data(), b.data(), c.data()); }, 1);
      std::printf("  serial %9.3f ms  speedup %6.1fx", r * 1e3, r / t);
    }
    std::printf("\n");
  }

  const ConvCase cases[] = {
      {"conv_hf 24->16 5x5 @64", {8, 24, 64, 64}, 16, {5, 1, 2}},
      {"stem 16->16 7x7/2 @64", {8, 16, 64, 64}, 16, {7, 2, 3}},
      {"stage1 32->32 3x3 @16", {8, 32, 16, 16}, 32, {3, 1, 1}},
      {"stage3 128->128 3x3 @4", {8, 128, 4, 4}, 128, {3, 1, 1}},
      {"full stage1 128 3x3 @56", {1, 128, 56, 56}, 128, {3, 1, 1}},
  };
  for (const auto& cc : cases) {
    Tensor x = random_tensor(cc.input, rng);
    Tensor w = random_tensor({cc.out_channels, cc.input.c, cc.geom.kernel, cc.geom.kernel}, rng);
    Tensor y;
    const double t = seconds([&] { y = kernels::conv2d(x, w, nullptr, cc.geom); }, 3);
    Tensor dw(w.shape());
    const double tbi = seconds([&] { kernels::conv2d_backward_input(y, w, x.shape(), cc.geom); }, 3);
    const double tbp = seconds([&] { kernels::conv2d_backward_params(x, y, cc.geom, dw, nullptr); }, 3);
    const double flops = 2.0 * y.size() * cc.input.c * cc.geom.kernel * cc.geom.kernel;
    std::printf("%-28s fwd %8.3f ms (%6.2f GFLOP/s)  bwd-in %8.3f ms  bwd-w %8.3f ms", cc.name,
                t * 1e3, flops / t * 1e-9, tbi * 1e3, tbp * 1e3);
    if (with_reference) {
      const double r = seconds([&] { reference::conv2d(x, w, nullptr, cc.geom); }, 1);
      std::printf("  serial fwd %9.3f ms  speedup %6.1fx", r * 1e3, r / t);
    }
    std::printf("\n");
  }

  {
    Tensor x = random_tensor({8, 128, 16, 16}, rng);
    Tensor gamma(Shape{128, 1, 1, 1}, 1.0f), beta(Shape{128, 1, 1, 1}, 0.0f);
    const double t = seconds([&] { kernels::group_norm(x, 32, gamma, beta, 1e-5f, nullptr, nullptr); }, 5);
    std::printf("%-28s omp %9.3f ms", "group_norm 8x128x16x16", t * 1e3);
    if (with_reference) {
      const double r = seconds([&] { reference::group_norm(x, 32, gamma, beta, 1e-5f); }, 1);
      std::printf("  serial %9.3f ms  speedup %6.1fx", r * 1e3, r / t);
    }
    std::printf("\n");
  }
  return 0;
}
