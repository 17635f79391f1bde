#include "caeq/quantizer.hpp"

#include <cmath>
#include <random>

#include "doctest.h"
#include "test_support.hpp"

using namespace caeq;

TEST_CASE("qmax leaves the most negative level unused") {
  CHECK(qmax(2) == 1);
  CHECK(qmax(3) == 3);
  CHECK(qmax(4) == 7);
  CHECK(qmax(16) == 32767);
  CHECK_THROWS(qmax(1));
  CHECK_THROWS(qmax(17));
}

TEST_CASE("rounding is half away from zero") {
  CHECK(quantize_level(0.5, 1.0, 7) == 1);
  CHECK(quantize_level(-0.5, 1.0, 7) == -1);
  CHECK(quantize_level(2.5, 1.0, 7) == 3);
  CHECK(quantize_level(100.0, 1.0, 7) == 7);
  CHECK(quantize_level(-100.0, 1.0, 7) == -7);
  CHECK(quantize_level(3.0, 0.0, 7) == 0);
}

TEST_CASE("fit_group_scales") {
  SUBCASE("all-zero row gets scale 0") {
    CHECK(fit_group_scales(Matrix{{0, 0, 0}}, 4, kDefaultClipGrid) == std::vector<double>{0.0});
  }
  SUBCASE("single clip ratio is max|w| / qmax") {
    const std::vector<double> clip{1.0};
    const auto s = fit_group_scales(Matrix{{0.4, -2.1, 1.0}}, 4, clip);
    CHECK(s[0] == doctest::Approx(0.3).epsilon(1e-15));
  }
  SUBCASE("clip search picks the MSE minimizer") {
    // Errors by ratio, enumerated independently: 1.0 -> 0.18, 0.9 -> 0.126, 0.8 -> 0.18.
    const std::vector<double> clip{1.0, 0.9, 0.8};
    const auto s = fit_group_scales(Matrix{{0.9, -0.3, 0.6, 1.8}}, 3, clip);
    CHECK(s[0] == doctest::Approx(0.54).epsilon(1e-15));
  }
  SUBCASE("ties go to the larger ratio") {
    // Both ratios reproduce {1, -1} exactly at 2 bits.
    const std::vector<double> clip{0.5, 1.0};
    const auto s = fit_group_scales(Matrix{{1.0, -1.0}}, 2, clip);
    CHECK(s[0] == 1.0);
  }
  SUBCASE("rows are fitted independently") {
    const std::vector<double> clip{1.0};
    const auto s = fit_group_scales(Matrix{{7, 0}, {0, -14}}, 4, clip);
    CHECK(s == std::vector<double>{1.0, 2.0});
  }
}

TEST_CASE("quantize_column") {
  const auto a = quantize_column(std::vector<double>{0.9, -0.3, 0.6}, std::vector<double>{0.3, 0.3, 0.3}, 3);
  CHECK(a.levels == std::vector<std::int32_t>{3, -1, 2});
  CHECK(a.dequant[0] == doctest::Approx(0.9).epsilon(1e-15));
  CHECK(a.dequant[1] == doctest::Approx(-0.3).epsilon(1e-15));

  const auto b = quantize_column(std::vector<double>{1.0}, std::vector<double>{0.3}, 3);
  CHECK(b.levels[0] == 3);
  CHECK(b.dequant[0] == doctest::Approx(0.9).epsilon(1e-15));

  const auto c = quantize_column(std::vector<double>{0.0, 5.0}, std::vector<double>{0.0, 0.0}, 4);
  CHECK(c.levels == std::vector<std::int32_t>{0, 0});
  CHECK(c.dequant == std::vector<double>{0.0, 0.0});
}

TEST_CASE("grid properties on random groups") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const int bits = 2 + trial % 7;
    const int qm = qmax(bits);
    const Matrix g = caeq::testing::random_matrix(rng, 4, 8);
    const auto scales = fit_group_scales(g, bits, kDefaultClipGrid);
    const std::vector<double> unclipped{1.0};
    const auto full = fit_group_scales(g, bits, unclipped);
    for (std::size_t c = 0; c < g.cols(); ++c) {
      const auto col = g.col(c);
      const auto q = quantize_column(col, scales, bits);
      std::vector<double> neg(col.size());
      for (std::size_t r = 0; r < col.size(); ++r) neg[r] = -col[r];
      const auto qn = quantize_column(neg, scales, bits);
      const auto again = quantize_column(q.dequant, scales, bits);
      const auto qfull = quantize_column(col, full, bits);
      for (std::size_t r = 0; r < col.size(); ++r) {
        CHECK(std::abs(q.levels[r]) <= qm);
        CHECK(q.dequant[r] == q.levels[r] * scales[r]);
        CHECK(qn.levels[r] == -q.levels[r]);          // symmetry
        CHECK(again.levels[r] == q.levels[r]);        // on-grid idempotence
        if (std::abs(q.levels[r]) < qm) CHECK(std::abs(q.dequant[r] - col[r]) <= scales[r] / 2 + 1e-15);
        // Ratio 1.0 never clamps: every value is within half a step.
        CHECK(std::abs(qfull.dequant[r] - col[r]) <= full[r] / 2 * (1 + 1e-12));
      }
    }
  }
}

TEST_CASE("QuantGrid") {
  GridParams p{3, 4, {1.0}};
  QuantGrid grid(p, 2, 8);
  CHECK(grid.num_groups() == 2);
  CHECK(grid.group_of(5) == 1);
  CHECK_THROWS_AS(grid.quantize(0, std::vector<double>{1, 2}), StateError);
  grid.fit(0, Matrix{{3, 0, 0, 0}, {0, 0, 0, -6}});
  CHECK(grid.scales(0)[0] == 1.0);
  CHECK(grid.scales(0)[1] == 2.0);
  CHECK_THROWS_AS(grid.fit(0, Matrix(2, 4)), StateError);
  CHECK(grid.quantize(1, std::vector<double>{1.4, -3.1}).levels == std::vector<std::int32_t>{1, -2});

  SUBCASE("per-channel when group_size exceeds the width") {
    QuantGrid wide({4, 128, {1.0}}, 1, 16);
    CHECK(wide.num_groups() == 1);
    CHECK(wide.group_width() == 16);
  }
  SUBCASE("group size must divide the width") { CHECK_THROWS_AS(QuantGrid({4, 5, {1.0}}, 1, 8), ShapeError); }
  SUBCASE("column order remaps groups") {
    QuantGrid remap(p, 1, 8, {4, 0, 1, 2, 3, 5, 6, 7});
    CHECK(remap.group_of(0) == 1);
    CHECK(remap.group_of(1) == 0);
  }
  SUBCASE("parameter validation") {
    CHECK_THROWS(GridParams({1, 4, {1.0}}).validate());
    CHECK_THROWS(GridParams({4, 0, {1.0}}).validate());
    CHECK_THROWS(GridParams({4, 4, {}}).validate());
    CHECK_THROWS(GridParams({4, 4, {0.9}}).validate());
    CHECK_THROWS(GridParams({4, 4, {1.0, 1.2}}).validate());
  }
}
