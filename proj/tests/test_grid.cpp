#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "tcsk/grid.hpp"

using namespace tcsk;
using Catch::Approx;

namespace {

TorusGrid g64() { return TorusGrid(1, {64, 64}); }
TorusGrid g16_4() { return TorusGrid(2, {16, 16, 16, 16}); }

ScalarField cos_axis(const TorusGrid& g, int axis, int mode = 1) {
  return sample(g, [&](const std::array<double, 4>& x) {
    return std::cos(mode * x[axis]);
  });
}

} // namespace

TEST_CASE("grid constructor enforces shape", "[grid]") {
  REQUIRE_THROWS_AS(TorusGrid(3, {8, 8, 8, 8}), precondition_error);
  REQUIRE_THROWS_AS(TorusGrid(1, {12, 16}), precondition_error);
  REQUIRE_THROWS_AS(TorusGrid(1, {4, 4}), precondition_error);
  TorusGrid g(2, {8, 16, 32, 8});
  REQUIRE(g.points() == 8u * 16u * 32u * 8u);
  REQUIRE(g.volume() == Approx(std::pow(two_pi, 4)).epsilon(1e-14));
}

TEST_CASE("partial differentiates trig modes exactly", "[grid]") {
  auto g = g64();
  auto f = cos_axis(g, 0);
  auto fx = partial(f, 0, 1);
  auto want = sample(g, [](const std::array<double, 4>& x) { return -std::sin(x[0]); });
  REQUIRE(sup_norm(fx - want) < 1e-12);
  // y-derivative of an x-only field vanishes
  REQUIRE(sup_norm(partial(f, 1, 1)) < 1e-13);
  // second derivative
  REQUIRE(sup_norm(partial(f, 0, 2) + f) < 1e-11);
  // constants
  ScalarField c(g, 3.25);
  REQUIRE(sup_norm(partial(c, 0, 1)) < 1e-13);
}

TEST_CASE("partial matches a 4th-order finite-difference oracle", "[grid]") {
  // Independent oracle: classical 5-point FD second derivative on grid values.
  auto fd_second = [](const ScalarField& f, int axis) {
    const TorusGrid& g = f.grid;
    const double h = two_pi / g.size[axis];
    ScalarField out(g);
    // strides for neighbor lookup
    std::array<std::size_t, 4> stride{};
    std::size_t s = 1;
    for (int d = g.axes() - 1; d >= 0; --d) {
      stride[d] = s;
      s *= g.size[d];
    }
    std::array<int, 4> idx{};
    for (std::size_t flat = 0; flat < out.size(); ++flat) {
      auto at = [&](int shift) {
        std::array<int, 4> j = idx;
        j[axis] = ((j[axis] + shift) % g.size[axis] + g.size[axis]) % g.size[axis];
        std::size_t p = 0;
        for (int d = 0; d < g.axes(); ++d) p += j[d] * stride[d];
        return f[p];
      };
      out[flat] =
          (-at(2) + 16 * at(1) - 30 * at(0) + 16 * at(-1) - at(-2)) / (12 * h * h);
      for (int d = g.axes() - 1; d >= 0; --d) {
        if (++idx[d] < g.size[d]) break;
        idx[d] = 0;
      }
    }
    return out;
  };

  double err[2];
  int resolutions[2] = {64, 128};
  for (int r = 0; r < 2; ++r) {
    TorusGrid g(1, {resolutions[r], resolutions[r]});
    auto f = random_band_limited(g, 4, 1.0, 11);
    err[r] = sup_norm(partial(f, 0, 2) - fd_second(f, 0));
  }
  REQUIRE(err[0] > 1e-8);        // FD truncation is visible...
  REQUIRE(err[0] / err[1] > 12); // ...and decays at 4th order under refinement
}

TEST_CASE("complex_second diagonal oracle", "[grid]") {
  auto g = g64();
  auto f = cos_axis(g, 0);
  auto h = complex_second(f, 0, 0);
  // d/dz d/dzbar = (1/4)(dxx + dyy): cos(x) -> -(1/4) cos(x)
  double worst = 0;
  auto want = sample(g, [](const std::array<double, 4>& x) { return -0.25 * std::cos(x[0]); });
  for (std::size_t i = 0; i < h.size(); ++i)
    worst = std::max(worst, std::abs(h[i] - cplx(want[i], 0.0)));
  REQUIRE(worst < 1e-12);

  ScalarField c(g, 1.0);
  REQUIRE(sup_norm(complex_second(c, 0, 0)) < 1e-14);
}

TEST_CASE("complex_second cross entry oracle and Hermitian symmetry", "[grid]") {
  auto g = g16_4();
  auto f = sample(g, [](const std::array<double, 4>& x) {
    return std::cos(x[0]) * std::cos(x[2]);
  });
  auto h01 = complex_second(f, 0, 1);
  // d/dz1 d/dzbar2 [cos x1 cos x2] = (1/4) sin x1 sin x2, purely real
  auto want = sample(g, [](const std::array<double, 4>& x) {
    return 0.25 * std::sin(x[0]) * std::sin(x[2]);
  });
  double worst = 0;
  for (std::size_t i = 0; i < h01.size(); ++i)
    worst = std::max(worst, std::abs(h01[i] - cplx(want[i], 0.0)));
  REQUIRE(worst < 1e-12);

  auto u = random_band_limited(g, 2, 0.7, 3);
  auto a = complex_second(u, 0, 1);
  auto b = complex_second(u, 1, 0);
  double defect = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    defect = std::max(defect, std::abs(a[i] - std::conj(b[i])));
  REQUIRE(defect < 1e-12);
}

TEST_CASE("third derivative entry oracle", "[grid]") {
  auto g = g64();
  auto f = cos_axis(g, 0);
  auto t = third_entry(spectrum(f), 0, 0, 0);
  // (1/8) dxxx cos x = (1/8) sin x
  auto want = sample(g, [](const std::array<double, 4>& x) { return 0.125 * std::sin(x[0]); });
  double worst = 0;
  for (std::size_t i = 0; i < t.size(); ++i)
    worst = std::max(worst, std::abs(t[i] - cplx(want[i], 0.0)));
  REQUIRE(worst < 1e-12);
}

TEST_CASE("quadrature values", "[grid]") {
  auto g = g64();
  ScalarField one(g, 1.0);
  REQUIRE(integrate(one) == Approx(two_pi * two_pi).epsilon(1e-14));
  REQUIRE(std::abs(integrate(cos_axis(g, 0))) < 1e-12);
  auto c = cos_axis(g, 0);
  REQUIRE(integrate(c * c) == Approx(0.5 * two_pi * two_pi).epsilon(1e-13));

  auto g4 = g16_4();
  ScalarField one4(g4, 1.0);
  REQUIRE(integrate(one4) == Approx(std::pow(two_pi, 4)).epsilon(1e-13));

  ScalarField other(TorusGrid(1, {32, 32}), 1.0);
  REQUIRE_THROWS_AS(integrate(one, other), grid_mismatch_error);
}

TEST_CASE("summation by parts is exact", "[grid]") {
  auto g = g64();
  auto a = random_band_limited(g, 9, 1.0, 5);
  auto b = random_band_limited(g, 9, 1.0, 6);
  const double lhs = integrate(a, partial(b, 0, 1)) + integrate(partial(a, 0, 1), b);
  REQUIRE(std::abs(lhs) < 1e-12);
}

TEST_CASE("project_mean_zero", "[grid]") {
  auto g = g64();
  auto f = random_band_limited(g, 3, 1.0, 7);
  ScalarField shifted = f;
  for (auto& x : shifted.v) x += 4.2;
  auto p = project_mean_zero(shifted);
  REQUIRE(std::abs(mean(p)) < 1e-13);
  REQUIRE(sup_norm(p - f) < 1e-12);
  // weighted flavor
  auto w = sample(g, [](const std::array<double, 4>& x) { return 1.0 + 0.5 * std::cos(x[0]); });
  auto q = project_mean_zero(shifted, w);
  REQUIRE(std::abs(integrate(q, w)) < 1e-10);
  // fixed point
  auto qq = project_mean_zero(q, w);
  REQUIRE(sup_norm(qq - q) < 1e-13);
}

TEST_CASE("dealias implements the 2/3 rule", "[grid]") {
  auto g = g64(); // cutoff |k| <= 21
  auto low = random_band_limited(g, 21, 1.0, 9);
  REQUIRE(sup_norm(dealias(low) - low) < 1e-12);
  auto high = cos_axis(g, 0, 22);
  REQUIRE(sup_norm(dealias(high)) < 1e-12);
  auto f = random_band_limited(g, 30, 1.0, 10);
  auto once = dealias(f);
  REQUIRE(sup_norm(dealias(once) - once) < 1e-13);
}

TEST_CASE("random_band_limited is deterministic, band-limited, normalized", "[grid]") {
  auto g = g64();
  auto f1 = random_band_limited(g, 3, 0.4, 42);
  auto f2 = random_band_limited(g, 3, 0.4, 42);
  REQUIRE(f1.v == f2.v); // bit-identical
  auto f3 = random_band_limited(g, 3, 0.4, 43);
  REQUIRE(sup_norm(f1 - f3) > 1e-3);
  REQUIRE(std::abs(sup_norm(f1) - 0.4) < 1e-12);
  REQUIRE(std::abs(mean(f1)) < 1e-13);

  // no content above the band: spectrum bins with any |k_d| > 3 vanish
  auto s = spectrum(f1);
  double leak = 0;
  detail::for_each_mode(g, [&](std::size_t flat, const std::array<int, 4>& k) {
    if (std::abs(k[0]) > 3 || std::abs(k[1]) > 3) leak = std::max(leak, std::abs(s.c[flat]));
  });
  REQUIRE(leak < 1e-9);

  REQUIRE_THROWS_AS(random_band_limited(g, 32, 0.4, 1), precondition_error);
  REQUIRE_THROWS_AS(random_band_limited(g, 0, 0.4, 1), precondition_error);
}
