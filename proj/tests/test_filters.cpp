#include <algorithm>
#include <set>

#include "caminv/filters.hpp"
#include "caminv/reference.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace caminv;
using caminv::testing::max_rel_diff;
using caminv::testing::random_tensor;

TEST_SUITE("filters") {
  TEST_CASE("eight first-difference kernels") {
    const auto& bank = filters::eddf_kernels();
    REQUIRE(bank.kernels.size() == 8);
    std::set<std::pair<int, int>> plus_positions;
    for (const auto& k : bank.kernels) {
      int sum = 0, plus = 0, minus = 0;
      for (int y = 0; y < 3; ++y) {
        for (int x = 0; x < 3; ++x) {
          const float v = k[y][x];
          CHECK((v == -1.0f || v == 0.0f || v == 1.0f));
          sum += static_cast<int>(v);
          if (v == 1.0f) {
            ++plus;
            plus_positions.insert({y, x});
          }
          if (v == -1.0f) ++minus;
        }
      }
      CHECK(sum == 0);
      CHECK(plus == 1);
      CHECK(minus == 1);
      CHECK(k[1][1] == -1.0f);
    }
    CHECK(plus_positions.size() == 8);
  }

  TEST_CASE("constant image gives zero residuals everywhere") {
    const Tensor img(Shape{1, 3, 7, 9}, 0.42f);
    const Tensor r = filters::apply_eddf(img);
    CHECK(r.shape() == Shape{1, 24, 7, 9});
    for (std::size_t i = 0; i < r.size(); ++i) CHECK(r.data()[i] == 0.0f);
  }

  TEST_CASE("east kernel on a column ramp") {
    Tensor img(Shape{1, 3, 5, 6});
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < 5; ++y)
        for (int x = 0; x < 6; ++x) img.at(0, c, y, x) = static_cast<float>(x);
    const Tensor r = filters::apply_eddf(img);
    // kernel 0 is East, channel layout 8*c + k
    for (int c = 0; c < 3; ++c) CHECK(r.at(0, 8 * c, 2, 2) == 1.0f);
  }

  TEST_CASE("single bright pixel matches brute-force correlation with replicate padding") {
    Tensor img(Shape{1, 3, 6, 6});
    img.at(0, 1, 2, 3) = 1.0f;
    img.at(0, 0, 0, 0) = 0.5f;  // corner exercises the border rule
    const Tensor r = filters::apply_eddf(img);
    const auto& bank = filters::eddf_kernels();
    for (int c = 0; c < 3; ++c) {
      for (int k = 0; k < 8; ++k) {
        for (int y = 0; y < 6; ++y) {
          for (int x = 0; x < 6; ++x) {
            float s = 0.0f;
            for (int dy = -1; dy <= 1; ++dy)
              for (int dx = -1; dx <= 1; ++dx)
                s += bank.kernels[k][dy + 1][dx + 1] *
                     img.at(0, c, std::clamp(y + dy, 0, 5), std::clamp(x + dx, 0, 5));
            CHECK(r.at(0, 8 * c + k, y, x) == s);
          }
        }
      }
    }
  }

  TEST_CASE("EDDF is linear and rejects non-RGB input") {
    const Tensor a = random_tensor({1, 3, 8, 8}, 1);
    const Tensor b = random_tensor({1, 3, 8, 8}, 2);
    Tensor mix(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) mix.data()[i] = 2.0f * a.data()[i] - 0.5f * b.data()[i];
    const Tensor ra = filters::apply_eddf(a), rb = filters::apply_eddf(b), rm = filters::apply_eddf(mix);
    for (std::size_t i = 0; i < rm.size(); ++i) {
      CHECK(rm.data()[i] == doctest::Approx(2.0f * ra.data()[i] - 0.5f * rb.data()[i]).epsilon(1e-5));
    }
    CHECK_THROWS_AS(filters::apply_eddf(Tensor(Shape{1, 4, 8, 8})), DimensionError);
  }

  TEST_CASE("interior responses are translation covariant") {
    const Tensor a = random_tensor({1, 3, 10, 10}, 3);
    Tensor shifted(a.shape());
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < 10; ++y)
        for (int x = 1; x < 10; ++x) shifted.at(0, c, y, x) = a.at(0, c, y, x - 1);
    const Tensor ra = filters::apply_eddf(a), rs = filters::apply_eddf(shifted);
    for (int k = 0; k < 24; ++k)
      for (int y = 1; y < 9; ++y)
        for (int x = 2; x < 9; ++x) CHECK(rs.at(0, k, y, x) == ra.at(0, k, y, x - 1));
  }

  TEST_CASE("Conv_hf and Conv_aug shapes, zero weights, and naive oracle") {
    const Tensor res = random_tensor({1, 24, 12, 12}, 4);
    Rng rng(5);
    auto hf = filters::make_conv_hf(64);
    hf.init(rng);
    const Tensor m = filters::conv_hf(res, hf);
    CHECK(m.shape() == Shape{1, 64, 12, 12});
    CHECK(max_rel_diff(m, reference::conv2d(res, hf.weight.value, &hf.bias->value, hf.geometry())) < 1e-5);

    auto aug = filters::make_conv_aug();
    aug.init(rng);
    const Tensor ia = filters::conv_aug(res, aug);
    CHECK(ia.shape() == Shape{1, 3, 12, 12});
    CHECK(max_rel_diff(ia, reference::conv2d(res, aug.weight.value, &aug.bias->value, aug.geometry())) < 1e-5);

    hf.weight.value.fill(0.0f);
    hf.bias->value.fill(0.0f);
    const Tensor z = filters::conv_hf(res, hf);
    for (std::size_t i = 0; i < z.size(); ++i) CHECK(z.data()[i] == 0.0f);
    CHECK_THROWS_AS(filters::conv_hf(Tensor(Shape{1, 3, 12, 12}), hf), DimensionError);
    CHECK_THROWS_AS(filters::conv_aug(Tensor(Shape{1, 23, 12, 12}), aug), DimensionError);
  }

  TEST_CASE("recompose adds and clamps") {
    const Tensor img = random_tensor({1, 3, 4, 4}, 6, 0.0f, 1.0f);
    const Tensor zero(img.shape());
    const Tensor same = filters::recompose(img, zero);
    for (std::size_t i = 0; i < img.size(); ++i) CHECK(same.data()[i] == img.data()[i]);

    Tensor one(Shape{1, 3, 1, 1}, 1.0f), half(Shape{1, 3, 1, 1}, 0.5f);
    CHECK(filters::recompose(one, half).data()[0] == 1.0f);
    Tensor a(Shape{1, 3, 1, 1}, 0.2f), b(Shape{1, 3, 1, 1}, 0.3f);
    CHECK(filters::recompose(a, b).data()[0] == doctest::Approx(0.5f));
    CHECK_THROWS_AS(filters::recompose(img, Tensor(Shape{1, 3, 5, 4})), DimensionError);
  }
}
