#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "tcsk/solver.hpp"

#include "helpers.hpp"

using namespace tcsk;
using Catch::Approx;

namespace {

TorusGrid g1() { return TorusGrid(1, {64, 64}); }

/** Exact n=1 J-equation solution: 1 + phi_{,1 1bar} = chi_11 / chibar, solved
 *  by spectral division (independent of the Newton path). */
ScalarField j_equation_oracle(const TwistForm& chi) {
  const TorusGrid& g = chi.grid;
  ScalarField chi11(g);
  for (std::size_t i = 0; i < chi11.size(); ++i) chi11[i] = chi.samples.d0[i];
  const double cb = chi_bar(chi);
  Spectrum s = spectrum(chi11);
  detail::for_each_mode(g, [&](std::size_t i, const std::array<int, 4>& k) {
    const double q = 0.25 * (double(k[0]) * k[0] + double(k[1]) * k[1]);
    if (q == 0.0) {
      s.c[i] = 0.0;
      return;
    }
    s.c[i] = (s.c[i] / cb) / (-q);
  });
  return project_mean_zero(inverse_r(s));
}

} // namespace

TEST_CASE("flat data solves instantly", "[solver]") {
  auto g = g1();
  auto chi = identity_twist(g);
  NewtonReport rep;
  auto st = newton_solve(ScalarField(g), chi, 0.7, {}, &rep);
  REQUIRE(rep.iterations == 0);
  REQUIRE(sup_norm(st.phi) < 1e-12);

  auto run = continue_path(chi);
  REQUIRE(run.completed);
  REQUIRE(run.steps.size() == 21);
  REQUIRE(run.last_accepted_t == 1.0);
  for (const auto& s : run.steps) {
    REQUIRE(s.residual_sup < 1e-10);
    REQUIRE(sup_norm(s.phi) < 1e-10);
    REQUIRE(s.step_halvings == 0);
  }
}

TEST_CASE("n=1 j-equation matches the linear oracle", "[solver]") {
  auto g = g1();
  auto psi = sample(g, [](const std::array<double, 4>& x) {
    return 0.3 * std::cos(x[0]);
  });
  auto chi = make_twist_form(g, cmat_identity(1), psi);
  auto st = solve_j_equation(chi);
  auto oracle = j_equation_oracle(chi);
  REQUIRE(sup_norm(st.phi - oracle) < 1e-9);
  // in n=1 the J-equation solution is psi itself, mean-normalized
  REQUIRE(sup_norm(st.phi - project_mean_zero(psi)) < 1e-9);
  REQUIRE(sup_norm(residual_twisted(st, chi, 0.0)) < 1e-9);

  // a generic band-limited twist potential
  auto psi2 = random_band_limited(g, 3, 0.25, 81);
  auto chi2 = make_twist_form(g, cmat_identity(1), psi2);
  REQUIRE(chi2.positive);
  auto st2 = solve_j_equation(chi2);
  REQUIRE(sup_norm(st2.phi - j_equation_oracle(chi2)) < 1e-9);

  cmat indef = cmat_identity(1);
  indef(0, 0) = -1.0;
  REQUIRE_THROWS_AS(solve_j_equation(make_twist_form(g, indef)), precondition_error);
}

TEST_CASE("uniqueness: distinct initial guesses meet", "[solver]") {
  auto g = g1();
  auto chi = make_twist_form(g, cmat_identity(1), random_band_limited(g, 2, 0.25, 82));
  auto a = newton_solve(ScalarField(g), chi, 0.5);
  auto b = newton_solve(tcsk_test::safe_phi(g, 3, 0.2, 83), chi, 0.5);
  REQUIRE(sup_norm(a.phi - b.phi) < 1e-7);
}

TEST_CASE("normalization invariance of the initial guess", "[solver]") {
  auto g = g1();
  auto chi = make_twist_form(g, cmat_identity(1), random_band_limited(g, 2, 0.25, 84));
  auto init = tcsk_test::safe_phi(g, 2, 0.15, 85);
  auto a = newton_solve(init, chi, 0.3);
  auto b = newton_solve(init + ScalarField(g, 5.0), chi, 0.3);
  REQUIRE(sup_norm(a.phi - b.phi) < 1e-13);
}

TEST_CASE("quadratic tail of the Newton iteration", "[solver]") {
  auto g = g1();
  auto psi = sample(g, [](const std::array<double, 4>& x) {
    return 0.3 * std::cos(x[0]) + 0.2 * std::cos(2.0 * x[1]);
  });
  auto chi = make_twist_form(g, cmat_identity(1), psi);
  NewtonReport rep;
  auto st = newton_solve(ScalarField(g), chi, 0.5, {}, &rep);
  REQUIRE(rep.residual_sup <= 1e-9);
  REQUIRE(rep.residual_history.size() >= 3);
  for (std::size_t k = 0; k + 1 < rep.residual_history.size(); ++k) {
    const double r0 = rep.residual_history[k], r1 = rep.residual_history[k + 1];
    if (r0 <= 1e-2)
      REQUIRE(r1 <= std::max(std::pow(r0, 1.7), 2e-9));
  }
}

TEST_CASE("continuation completes and lands on the flat metric", "[solver]") {
  auto g = g1();
  auto psi = sample(g, [](const std::array<double, 4>& x) {
    return 0.3 * std::cos(x[0]) + 0.2 * std::cos(2.0 * x[1]);
  });
  auto chi = make_twist_form(g, cmat_identity(1), psi);
  auto run = continue_path(chi, std::vector<double>{0.0, 0.25, 0.5, 0.75, 1.0});
  REQUIRE(run.completed);
  REQUIRE(run.last_accepted_t == 1.0);
  const auto& last = run.steps.back();
  REQUIRE(sup_norm(last.phi) < 1e-6);
  auto st = assemble(g, last.phi);
  REQUIRE(sup_norm(st.scalar) < 1e-8);
  for (const auto& s : run.steps) {
    REQUIRE(s.residual_sup <= 1e-9);
    REQUIRE(std::abs(mean(s.phi)) < 1e-12);
    REQUIRE(s.solution_energy <= s.predictor_energy + 1e-10);
  }
  // strictly increasing accepted t values
  for (std::size_t i = 0; i + 1 < run.steps.size(); ++i)
    REQUIRE(run.steps[i].t < run.steps[i + 1].t);
}

TEST_CASE("schedule validation", "[solver]") {
  auto g = g1();
  auto chi = identity_twist(g);
  REQUIRE_THROWS_AS(continue_path(chi, std::vector<double>{0.5, 1.0}),
                    precondition_error);
  REQUIRE_THROWS_AS(continue_path(chi, std::vector<double>{0.0, 0.4, 0.4}),
                    precondition_error);
  REQUIRE_THROWS_AS(continue_path(chi, std::vector<double>{0.0, 1.5}),
                    precondition_error);
}

TEST_CASE("failure paths raise typed errors", "[solver]") {
  auto g = g1();
  auto chi = make_twist_form(g, cmat_identity(1), random_band_limited(g, 2, 0.25, 86));
  NewtonSettings tight;
  tight.max_newton = 1;
  // barely-inside-the-cone start at t = 1: one iteration cannot reach 1e-9
  auto edge = sample(g, [](const std::array<double, 4>& x) {
    return 3.8 * std::cos(x[0]);
  });
  REQUIRE_THROWS_AS(newton_solve(edge, chi, 1.0, tight), error);

  NewtonSettings starved;
  starved.max_krylov = 1;
  REQUIRE_THROWS_AS(newton_solve(ScalarField(g), chi, 0.0, starved), krylov_error);
}
