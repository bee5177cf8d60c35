#include <cmath>
#include <tuple>
#include <array>
#include <vector>
#include <omp.h>

#include "caminv/kernels.hpp"
#include "caminv/reference.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace caminv;
using caminv::testing::bitwise_equal;
using caminv::testing::max_rel_diff;
using caminv::testing::random_tensor;

namespace {

struct ConvCase {
  Shape x;
  int out;
  kernels::ConvGeometry g;
};

const ConvCase kCases[] = {
    {{2, 3, 9, 11}, 5, {3, 1, 1}},
    {{1, 24, 16, 16}, 8, {5, 1, 2}},
    {{2, 4, 15, 15}, 6, {7, 2, 3}},
    {{3, 8, 8, 8}, 16, {1, 2, 0}},
    {{1, 16, 7, 5}, 4, {3, 2, 1}},
};

}  // namespace

TEST_SUITE("kernels") {
  TEST_CASE("gemm matches the serial reference on ragged sizes") {
    for (auto [m, n, k] : std::vector<std::array<int, 3>>{{1, 1, 1}, {5, 37, 3}, {67, 129, 300}, {130, 33, 17}}) {
      const Tensor a = random_tensor({1, 1, m, k}, 1);
      const Tensor b = random_tensor({1, 1, k, n}, 2);
      Tensor c(Shape{1, 1, m, n}), r(Shape{1, 1, m, n});
      kernels::gemm(m, n, k, a.data(), b.data(), c.data(), false);
      reference::matmul(m, n, k, a.data(), b.data(), r.data());
      // float summation bound: |error| <= k * eps * sum |a||b|, against a double oracle
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) {
          double exact = 0.0, magnitude = 0.0;
          for (int q = 0; q < k; ++q) {
            exact += double(a.data()[i * k + q]) * b.data()[q * n + j];
            magnitude += std::abs(double(a.data()[i * k + q]) * b.data()[q * n + j]);
          }
          const double bound = k * 6e-8 * magnitude + 1e-30;
          REQUIRE(std::abs(c.data()[i * n + j] - exact) <= bound);
          REQUIRE(std::abs(r.data()[i * n + j] - exact) <= bound);
        }
      // accumulate adds onto the existing output
      kernels::gemm(m, n, k, a.data(), b.data(), c.data(), true);
      Tensor c1(Shape{1, 1, m, n});
      kernels::gemm(m, n, k, a.data(), b.data(), c1.data(), false);
      for (std::size_t i = 0; i < c1.size(); ++i)
        CHECK(std::abs(c.data()[i] - 2.0f * c1.data()[i]) <= 1e-6f * std::max(1.0f, std::abs(c.data()[i])) * k);
    }
  }

  TEST_CASE("transpose") {
    const Tensor a = random_tensor({1, 1, 37, 70}, 3);
    Tensor t(Shape{1, 1, 70, 37});
    kernels::transpose(a.data(), 37, 70, t.data());
    for (int i = 0; i < 37; ++i)
      for (int j = 0; j < 70; ++j) CHECK(t.data()[j * 37 + i] == a.data()[i * 70 + j]);
  }

  TEST_CASE("convolution forward and backward match nested-loop references") {
    int seed = 10;
    for (const auto& c : kCases) {
      const Tensor x = random_tensor(c.x, ++seed);
      const Tensor w = random_tensor({c.out, c.x.c, c.g.kernel, c.g.kernel}, ++seed);
      const Tensor b = random_tensor({c.out, 1, 1, 1}, ++seed);
      const Tensor y = kernels::conv2d(x, w, &b, c.g);
      const Tensor yr = reference::conv2d(x, w, &b, c.g);
      REQUIRE(y.shape() == yr.shape());
      CHECK(max_rel_diff(y, yr) < 1e-5);

      const Tensor dy = random_tensor(y.shape(), ++seed);
      const Tensor dx = kernels::conv2d_backward_input(dy, w, x.shape(), c.g);
      const Tensor dxr = reference::conv2d_backward_input(dy, w, x.shape(), c.g);
      CHECK(max_rel_diff(dx, dxr) < 1e-5);

      Tensor dw(w.shape()), db(b.shape()), dwr(w.shape()), dbr(b.shape());
      kernels::conv2d_backward_params(x, dy, c.g, dw, &db);
      reference::conv2d_backward_params(x, dy, c.g, dwr, &dbr);
      CHECK(max_rel_diff(dw, dwr) < 1e-5);
      CHECK(max_rel_diff(db, dbr) < 1e-5);
    }
  }

  TEST_CASE("convolution backward is the adjoint of forward") {
    // <conv(x), dy> == <x, conv^T(dy)>
    const kernels::ConvGeometry g{3, 2, 1};
    const Tensor x = random_tensor({2, 3, 10, 10}, 40);
    const Tensor w = random_tensor({4, 3, 3, 3}, 41);
    const Tensor y = kernels::conv2d(x, w, nullptr, g);
    const Tensor dy = random_tensor(y.shape(), 42);
    const Tensor dx = kernels::conv2d_backward_input(dy, w, x.shape(), g);
    double lhs = 0.0, rhs = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) lhs += double(y.data()[i]) * dy.data()[i];
    for (std::size_t i = 0; i < x.size(); ++i) rhs += double(x.data()[i]) * dx.data()[i];
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-5));
  }

  TEST_CASE("group norm matches a two-pass reference") {
    const Tensor x = random_tensor({3, 8, 5, 6}, 50, -3.0f, 5.0f);
    const Tensor gamma = random_tensor({8, 1, 1, 1}, 51, 0.5f, 1.5f);
    const Tensor beta = random_tensor({8, 1, 1, 1}, 52);
    Tensor xhat;
    std::vector<float> inv_std;
    const Tensor y = kernels::group_norm(x, 4, gamma, beta, 1e-5f, &xhat, &inv_std);
    CHECK(max_rel_diff(y, reference::group_norm(x, 4, gamma, beta, 1e-5f)) < 1e-5);
    CHECK(inv_std.size() == 12);
  }

  TEST_CASE("group norm backward matches finite differences") {
    const Tensor x = random_tensor({2, 4, 3, 3}, 60);
    const Tensor gamma = random_tensor({4, 1, 1, 1}, 61, 0.5f, 1.5f);
    const Tensor beta = random_tensor({4, 1, 1, 1}, 62);
    const Tensor dy = random_tensor(x.shape(), 63);
    Tensor xhat, dgamma(gamma.shape()), dbeta(beta.shape());
    std::vector<float> inv_std;
    kernels::group_norm(x, 2, gamma, beta, 1e-5f, &xhat, &inv_std);
    const Tensor dx = kernels::group_norm_backward(dy, xhat, inv_std, 2, gamma, dgamma, dbeta);
    auto objective = [&](const Tensor& xx) {
      const Tensor y = reference::group_norm(xx, 2, gamma, beta, 1e-5f);
      double s = 0.0;
      for (std::size_t i = 0; i < y.size(); ++i) s += double(y.data()[i]) * dy.data()[i];
      return s;
    };
    for (std::size_t i = 0; i < x.size(); i += 5) {
      Tensor xp = x, xm = x;
      xp.data()[i] += 1e-2f;
      xm.data()[i] -= 1e-2f;
      const double fd = (objective(xp) - objective(xm)) / 2e-2;
      CHECK(dx.data()[i] == doctest::Approx(fd).epsilon(2e-2).scale(1.0));
    }
  }

  TEST_CASE("max pool matches reference and routes gradients to the argmax") {
    const kernels::ConvGeometry g{3, 2, 1};
    const Tensor x = random_tensor({2, 3, 9, 8}, 70);
    std::vector<int> argmax;
    const Tensor y = kernels::max_pool(x, g, &argmax);
    CHECK(bitwise_equal(y, reference::max_pool(x, g)));
    const Tensor dy(y.shape(), 1.0f);
    const Tensor dx = kernels::max_pool_backward(dy, argmax, x.shape());
    double total = 0.0;
    for (std::size_t i = 0; i < dx.size(); ++i) total += dx.data()[i];
    CHECK(total == doctest::Approx(static_cast<double>(y.size())));
  }

  TEST_CASE("kernels are bitwise identical for any thread count") {
    const int saved = omp_get_max_threads();
    const kernels::ConvGeometry g{3, 1, 1};
    const Tensor x = random_tensor({4, 16, 12, 12}, 80);
    const Tensor w = random_tensor({32, 16, 3, 3}, 81);
    const Tensor gamma(Shape{32, 1, 1, 1}, 1.0f), beta(Shape{32, 1, 1, 1});
    auto run = [&] {
      Tensor y = kernels::conv2d(x, w, nullptr, g);
      Tensor dx = kernels::conv2d_backward_input(y, w, x.shape(), g);
      Tensor dw(w.shape());
      kernels::conv2d_backward_params(x, y, g, dw, nullptr);
      Tensor n = kernels::group_norm(y, 8, gamma, beta, 1e-5f, nullptr, nullptr);
      return std::tuple{y, dx, dw, n};
    };
    omp_set_num_threads(1);
    const auto a = run();
    omp_set_num_threads(4);
    const auto b = run();
    omp_set_num_threads(saved);
    CHECK(bitwise_equal(std::get<0>(a), std::get<0>(b)));
    CHECK(bitwise_equal(std::get<1>(a), std::get<1>(b)));
    CHECK(bitwise_equal(std::get<2>(a), std::get<2>(b)));
    CHECK(bitwise_equal(std::get<3>(a), std::get<3>(b)));
  }

  TEST_CASE("linear layer kernels") {
    const Tensor x = random_tensor({3, 5, 1, 1}, 90);
    const Tensor w = random_tensor({4, 5, 1, 1}, 91);
    const Tensor b = random_tensor({4, 1, 1, 1}, 92);
    const Tensor y = kernels::linear(x, w, b);
    for (int n = 0; n < 3; ++n) {
      for (int o = 0; o < 4; ++o) {
        double s = b.data()[o];
        for (int i = 0; i < 5; ++i) s += double(w.data()[o * 5 + i]) * x.data()[n * 5 + i];
        CHECK(y.data()[n * 4 + o] == doctest::Approx(s).epsilon(1e-6));
      }
    }
  }
}
