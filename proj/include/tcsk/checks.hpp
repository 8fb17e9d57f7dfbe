#pragma once

// Acceptance suite: ten self-contained checks with pinned tolerances and
// runtime budgets, shared by the `check` subcommand and the standalone
// acceptance runner. Each check reports its first failing condition; a check
// also fails when it overruns its budget or throws.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <string>
#include <vector>

#include "flows.hpp"
#include "functionals.hpp"
#include "geodesic.hpp"
#include "grid.hpp"
#include "kahler.hpp"
#include "linop.hpp"
#include "solver.hpp"

namespace tcsk {

struct CheckResult {
  int id = 0;
  std::string name;
  bool passed = false;
  double seconds = 0.0;
  std::string detail;  // first failure, or key measured numbers on success
};

namespace detail {

inline std::string fmt(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", x);
  return buf;
}

struct Checker {
  bool ok = true;
  std::string first_failure;
  std::string note;

  void expect(bool cond, const std::string& what) {
    if (!cond && ok) {
      ok = false;
      first_failure = what;
    }
  }
  void annotate(const std::string& s) {
    if (!note.empty()) note += "; ";
    note += s;
  }
};

template <class Body>
CheckResult timed_check(int id, const std::string& name, double budget_seconds,
                        Body&& body) {
  CheckResult r;
  r.id = id;
  r.name = name;
  Checker c;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    body(c);
  } catch (const std::exception& e) {
    c.expect(false, std::string("unexpected exception: ") + e.what());
  }
  r.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  c.expect(r.seconds <= budget_seconds, "runtime " + fmt(r.seconds) +
                                            "s exceeds the " + fmt(budget_seconds) +
                                            "s budget");
  r.passed = c.ok;
  r.detail = c.ok ? c.note : c.first_failure;
  return r;
}

/** Random band-limited field, amplitude halved until the induced metric keeps
 *  a comfortable positivity margin. */
inline ScalarField safe_random(const TorusGrid& g, int band, double amplitude,
                               std::uint64_t seed) {
  for (int k = 0; k < 40; ++k) {
    ScalarField f = random_band_limited(g, band, amplitude, seed);
    if (try_assemble(g, f).min_eigenvalue > 0.25) return f;
    amplitude *= 0.5;
  }
  throw precondition_error("safe_random: could not stay in the positivity cone");
}

inline ScalarField cos_axis(const TorusGrid& g, double amp, int axis, int mode = 1) {
  return sample(g, [amp, axis, mode](const std::array<double, 4>& x) {
    return amp * std::cos(mode * x[axis]);
  });
}

} // namespace detail

// ---------------------------------------------------------------------------
// 1. Flat background is a fixed point of the whole continuation.

inline CheckResult check_flat_fixed_point() {
  return detail::timed_check(
      1, "flat background stays a fixed point across the continuation", 5.0,
      [](detail::Checker& c) {
        const TorusGrid g(1, {64, 64});
        const TwistForm chi = identity_twist(g);
        const ContinuationRun run = continue_path(chi, default_schedule());
        c.expect(run.completed, "continuation did not complete: " + run.failure_reason);
        c.expect(run.steps.size() == 21,
                 "expected 21 accepted steps, got " + std::to_string(run.steps.size()));
        double worst_r = 0.0, worst_phi = 0.0;
        for (const auto& s : run.steps) {
          worst_r = std::max(worst_r, s.residual_sup);
          worst_phi = std::max(worst_phi, sup_norm(s.phi));
        }
        c.expect(worst_r < 1e-10, "residual sup " + detail::fmt(worst_r) + " >= 1e-10");
        c.expect(worst_phi < 1e-10, "|phi| sup " + detail::fmt(worst_phi) + " >= 1e-10");
        c.annotate("max residual " + detail::fmt(worst_r) + ", max |phi| " +
                   detail::fmt(worst_phi));
      });
}

// ---------------------------------------------------------------------------
// 2. A cohomologous twist is forced back to the flat metric at the endpoint.

inline CheckResult check_forced_flat_endpoint() {
  return detail::timed_check(
      2, "continuation forced to the flat endpoint recovers it", 60.0,
      [](detail::Checker& c) {
        const TorusGrid g(1, {64, 64});
        const ScalarField psi = sample(g, [](const std::array<double, 4>& x) {
          return 0.3 * std::cos(x[0]) + 0.2 * std::cos(2.0 * x[1]);
        });
        const TwistForm chi = make_twist_form(g, cmat_identity(1), psi);
        const ContinuationRun run = continue_path(chi, default_schedule());
        c.expect(run.completed, "continuation did not complete: " + run.failure_reason);
        if (!run.completed) return;
        const ScalarField& phi1 = run.steps.back().phi;
        const double phi_sup = sup_norm(phi1);
        const KahlerState st = assemble(g, phi1);
        const double scal_sup = sup_norm(st.scalar);
        c.expect(phi_sup < 1e-6, "|phi(1)| sup " + detail::fmt(phi_sup) + " >= 1e-6");
        c.expect(scal_sup < 1e-8,
                 "|scalar curvature| sup " + detail::fmt(scal_sup) + " >= 1e-8");
        c.annotate("|phi(1)| " + detail::fmt(phi_sup) + ", |R| " +
                   detail::fmt(scal_sup));
      });
}

// ---------------------------------------------------------------------------
// 3. Analytic energy gradients match central differences.

inline CheckResult check_energy_gradients() {
  return detail::timed_check(
      3, "energy gradients match central differences", 120.0,
      [](detail::Checker& c) {
        constexpr int nodes = 64;  // fixed rule so differences stay smooth in h
        double worst_value = 0.0, worst_order = 10.0;

        auto probe = [&](const TorusGrid& g, const TwistForm& chi,
                         const ScalarField& phi, const ScalarField& u,
                         const std::string& label) {
          const KahlerState st = assemble(g, phi);
          const double dj = integrate(u * residual_jmu(st, chi, 1), st.det_g);
          ScalarField neg_scalar = st.scalar;
          for (auto& x : neg_scalar.v) x = -x;
          const double dk = integrate(u * neg_scalar, st.det_g);

          auto check_one = [&](auto&& f, double analytic, const std::string& nm) {
            auto cd = [&](double h) {
              return (f(phi + h * u) - f(phi - h * u)) / (2.0 * h);
            };
            const double scale = std::max(1.0, std::abs(analytic));
            const double e4 = std::abs(cd(1e-4) - analytic) / scale;
            const double e3 = std::abs(cd(1e-3) - analytic) / scale;
            const double e35 = std::abs(cd(5e-4) - analytic) / scale;
            worst_value = std::max(worst_value, e4);
            c.expect(e4 <= 1e-6, label + " " + nm + ": relative error " +
                                     detail::fmt(e4) + " > 1e-6 at h = 1e-4");
            // quadratic cases sit on the roundoff floor; otherwise demand
            // second-order decay between h = 1e-3 and 5e-4
            if (e35 > 1e-11) {
              const double order = std::log2(e3 / e35);
              worst_order = std::min(worst_order, order);
              c.expect(order >= 1.9, label + " " + nm + ": convergence order " +
                                         detail::fmt(order) + " < 1.9");
            }
          };
          check_one([&](const ScalarField& p) { return j_chi(p, chi, nodes); }, dj,
                    "twist energy");
          check_one([&](const ScalarField& p) { return k_energy(p, nodes); }, dk,
                    "scalar-curvature energy");
        };

        const TorusGrid g1(1, {64, 64});
        const ScalarField psi1 = detail::cos_axis(g1, 0.1, 0) + detail::cos_axis(g1, 0.1, 1);
        const TwistForm chi1 = make_twist_form(g1, cmat_identity(1), psi1);
        for (int s = 0; s < 10; ++s) {
          const ScalarField phi = detail::safe_random(g1, 3, 0.25, 300 + s);
          const ScalarField u = random_band_limited(g1, 3, 1.0, 800 + s);
          probe(g1, chi1, phi, u, "n=1 seed " + std::to_string(s));
        }

        const TorusGrid g2(2, {16, 16, 16, 16});
        const ScalarField psi2 = detail::cos_axis(g2, 0.1, 0) + detail::cos_axis(g2, 0.1, 2);
        const TwistForm chi2 = make_twist_form(g2, cmat_identity(2), psi2);
        for (int s = 0; s < 3; ++s) {
          const ScalarField phi = detail::safe_random(g2, 2, 0.2, 400 + s);
          const ScalarField u = random_band_limited(g2, 2, 1.0, 850 + s);
          probe(g2, chi2, phi, u, "n=2 seed " + std::to_string(s));
        }

        c.annotate("worst value error " + detail::fmt(worst_value) +
                   ", worst order " + detail::fmt(worst_order));
      });
}

// ---------------------------------------------------------------------------
// 4. The linearized operator is the derivative of the residual.

inline CheckResult check_residual_linearization() {
  return detail::timed_check(
      4, "residual linearization matches central differences", 30.0,
      [](detail::Checker& c) {
        const TorusGrid g(1, {64, 64});
        const TwistForm chi =
            make_twist_form(g, cmat_identity(1), detail::cos_axis(g, 0.1, 0));
        double worst_order = 10.0;
        for (const double t : {0.0, 0.3, 0.7, 1.0}) {
          for (int s = 0; s < 5; ++s) {
            const ScalarField phi = detail::safe_random(g, 3, 0.25, 500 + s);
            const ScalarField u = random_band_limited(g, 3, 0.4, 600 + s);
            const LinearizedOperator op = make_linearized(assemble(g, phi), chi, t);
            const ScalarField lu = apply(op, u);
            auto err = [&](double h) {
              const ScalarField fp =
                  residual_twisted(assemble(g, phi + h * u), chi, t);
              const ScalarField fm =
                  residual_twisted(assemble(g, phi - h * u), chi, t);
              return sup_norm((1.0 / (2.0 * h)) * (fp - fm) - lu);
            };
            const double order = std::log10(err(1e-2) / err(1e-3));
            worst_order = std::min(worst_order, order);
            c.expect(order >= 1.9, "t = " + detail::fmt(t) + " seed " +
                                       std::to_string(s) + ": order " +
                                       detail::fmt(order) + " < 1.9");
          }
        }
        c.annotate("worst order " + detail::fmt(worst_order));
      });
}

// ---------------------------------------------------------------------------
// 5. Coercivity constant of the flat-state linearization at t = 1/2.

inline CheckResult check_coercivity_constant() {
  return detail::timed_check(
      5, "coercivity constant of the flat-state linearization", 5.0,
      [](detail::Checker& c) {
        const TorusGrid g(1, {64, 64});
        const KahlerState st = assemble(g, ScalarField(g));
        const LinearizedOperator op = make_linearized(st, identity_twist(g), 0.5);
        const double inf = coercivity_probe(op, 6);
        c.expect(std::abs(inf - 0.625) <= 1e-6,
                 "probed infimum " + detail::fmt(inf) + " differs from 0.625 by " +
                     detail::fmt(std::abs(inf - 0.625)));
        c.annotate("probed infimum " + detail::fmt(inf));
      });
}

// ---------------------------------------------------------------------------
// 6. Gradient flows reach the Newton states and decrease their energies.

inline CheckResult check_flow_newton_agreement() {
  return detail::timed_check(
      6, "gradient flows agree with Newton and decrease energy", 120.0,
      [](detail::Checker& c) {
        const TorusGrid g(1, {64, 64});
        const TwistForm chi =
            make_twist_form(g, cmat_identity(1), detail::cos_axis(g, 0.3, 0));

        auto monotone = [&](const FlowRun& run, bool twisted, const std::string& nm) {
          for (std::size_t i = 0; i + 1 < run.samples.size(); ++i) {
            const double a = twisted ? run.samples[i].twisted : run.samples[i].j_chi;
            const double b =
                twisted ? run.samples[i + 1].twisted : run.samples[i + 1].j_chi;
            if (!(b < a)) {
              c.expect(false, nm + ": energy rose from " + detail::fmt(a) + " to " +
                                  detail::fmt(b) + " at sample " + std::to_string(i));
              return;
            }
          }
        };

        const FlowRun jf =
            run_flow(detail::cos_axis(g, 0.1, 1), FlowKind::j_flow, chi);
        c.expect(jf.converged,
                 std::string("first flow did not converge: ") + to_string(jf.stop));
        c.expect(jf.samples.back().residual_sup <= 1e-8,
                 "first flow residual " + detail::fmt(jf.samples.back().residual_sup));
        const KahlerState jst = solve_j_equation(chi);
        const double jdiff = sup_norm(jf.phi - jst.phi);
        c.expect(jdiff <= 1e-6, "flow/Newton gap " + detail::fmt(jdiff) + " > 1e-6");
        monotone(jf, false, "first flow");

        const ScalarField start =
            detail::cos_axis(g, 0.2, 1) +
            sample(g, [](const std::array<double, 4>& x) {
              return 0.1 * std::cos(x[0] + x[1]);
            });
        const FlowRun cal = run_flow(start, FlowKind::twisted_calabi, chi, 0.5);
        c.expect(cal.converged,
                 std::string("second flow did not converge: ") + to_string(cal.stop));
        c.expect(cal.samples.back().residual_sup <= 1e-8,
                 "second flow residual " +
                     detail::fmt(cal.samples.back().residual_sup));
        const KahlerState nst = newton_solve(ScalarField(g), chi, 0.5);
        const double cdiff = sup_norm(cal.phi - nst.phi);
        c.expect(cdiff <= 1e-6, "flow/Newton gap " + detail::fmt(cdiff) + " > 1e-6");
        monotone(cal, true, "second flow");

        c.annotate("flow/Newton gaps " + detail::fmt(jdiff) + " and " +
                   detail::fmt(cdiff));
      });
}

// ---------------------------------------------------------------------------
// 7. Approximate geodesics: exact constant solution, energy convexity, and the
//    discrete acceleration identity (exact in one dimension, second order in
//    the slice spacing in two).

inline CheckResult check_geodesic_convexity() {
  return detail::timed_check(
      7, "approximate geodesics: convexity and acceleration identity", 300.0,
      [](detail::Checker& c) {
        const double eps = 1e-2;
        const TorusGrid g(1, {64, 64});
        const TwistForm chi = identity_twist(g);

        // spatially constant reference solution
        const GeodesicPath flat =
            solve_geodesic(ScalarField(g), ScalarField(g), eps, 17);
        double parab = 0.0;
        for (std::size_t i = 0; i < flat.slices.size(); ++i) {
          const double tau = double(i) * flat.dtau();
          const ScalarField ref(g, eps * tau * (tau - 1.0) / 2.0);
          parab = std::max(parab, sup_norm(flat.slices[i] - ref));
        }
        c.expect(parab <= 1e-10,
                 "constant case deviates from the parabola by " + detail::fmt(parab));

        // main path 0 -> 0.3 cos x
        const GeodesicPath path =
            solve_geodesic(ScalarField(g), detail::cos_axis(g, 0.3, 0), eps, 17);
        c.expect(path.residual_sup <= 1e-8,
                 "path residual " + detail::fmt(path.residual_sup));
        auto min_of = [](const std::vector<double>& v) {
          double m = v.front();
          for (double x : v) m = std::min(m, x);
          return m;
        };
        const double min_j = min_of(convexity_profile(
            path, [&](const ScalarField& s) { return j_chi(s, chi, 64); }));
        const double min_e = min_of(convexity_profile(path, [&](const ScalarField& s) {
          return twisted_energy(s, chi, 0.5, 64);
        }));
        c.expect(min_j >= -5.0 * eps,
                 "twist energy second difference " + detail::fmt(min_j));
        c.expect(min_e >= -5.0 * eps,
                 "twisted energy second difference " + detail::fmt(min_e));

        // acceleration identity. In one complex dimension the discrete identity
        // is exact (the twist density is independent of the potential), so the
        // gap must sit at roundoff for every slice count.
        const double gap17 = second_derivative_identity_check(path, chi);
        const GeodesicPath path33 =
            solve_geodesic(ScalarField(g), detail::cos_axis(g, 0.3, 0), eps, 33);
        const double gap33 = second_derivative_identity_check(path33, chi);
        c.expect(gap17 <= 1e-9, "identity gap " + detail::fmt(gap17) + " at 17 slices");
        c.expect(gap33 <= 1e-9, "identity gap " + detail::fmt(gap33) + " at 33 slices");

        // in two dimensions the identity converges at second order: the gap
        // shrinks about fourfold when the slice count doubles
        const TorusGrid g2(2, {16, 16, 16, 16});
        const ScalarField end2 =
            detail::cos_axis(g2, 0.2, 0) +
            sample(g2, [](const std::array<double, 4>& x) {
              return 0.15 * std::cos(x[2] + x[3]);
            });
        const ScalarField psi2 =
            detail::cos_axis(g2, 0.1, 1) + detail::cos_axis(g2, 0.1, 2);
        const TwistForm chi2 = make_twist_form(g2, cmat_identity(2), psi2);
        const GeodesicPath p9 = solve_geodesic(ScalarField(g2), end2, eps, 9);
        const GeodesicPath p17 = solve_geodesic(ScalarField(g2), end2, eps, 17);
        const double gap9 = second_derivative_identity_check(p9, chi2);
        const double gap17b = second_derivative_identity_check(p17, chi2);
        const double ratio = gap9 / gap17b;
        c.expect(gap9 <= 1e-3, "coarse identity gap " + detail::fmt(gap9));
        c.expect(ratio > 3.2 && ratio < 4.8,
                 "refinement ratio " + detail::fmt(ratio) + " not near 4");
        c.annotate("n=1 gaps " + detail::fmt(gap17) + "/" + detail::fmt(gap33) +
                   ", n=2 ratio " + detail::fmt(ratio));
      });
}

// ---------------------------------------------------------------------------
// 8. Energy inequality chain in two complex dimensions.

inline CheckResult check_energy_chain() {
  return detail::timed_check(
      8, "energy inequality chain in two complex dimensions", 60.0,
      [](detail::Checker& c) {
        const TorusGrid g(2, {16, 16, 16, 16});
        const TwistForm chi = identity_twist(g);
        constexpr int nodes = 32;  // integrands are polynomial: rule is exact
        double worst = 0.0;
        for (int s = 0; s < 20; ++s) {
          const ScalarField phi = detail::safe_random(g, 2, 0.15, 8000 + s);
          const double j2 = j_mu(phi, chi, 2, nodes);
          const double j1 = j_chi(phi, chi, nodes);
          const double aj = aubin_I_J(phi, nodes).second;
          worst = std::min({worst, j2 - j1, j1 - aj / 3.0});
          c.expect(j2 - j1 >= -1e-9, "seed " + std::to_string(s) +
                                         ": squared-twist bound violated by " +
                                         detail::fmt(j1 - j2));
          c.expect(j1 - aj / 3.0 >= -1e-9, "seed " + std::to_string(s) +
                                               ": one-third bound violated by " +
                                               detail::fmt(aj / 3.0 - j1));
        }
        c.annotate("worst margin " + detail::fmt(worst));
      });
}

// ---------------------------------------------------------------------------
// 9. Structural identities of the discretization.

inline CheckResult check_structural_identities() {
  return detail::timed_check(
      9, "structural identities of the discretization", 60.0,
      [](detail::Checker& c) {
        // cohomological invariance of the volume and of the twist pairing
        auto invariances = [&](const TorusGrid& g, const TwistForm& chi,
                               const ScalarField& phi, const std::string& label) {
          const KahlerState st = assemble(g, phi);
          const KahlerState st0 = assemble(g, ScalarField(g));
          const double vol_drift =
              std::abs(integrate(st.det_g) - g.volume()) / g.volume();
          const double tr = integrate(trace_form(st, chi), st.det_g);
          const double tr0 = integrate(trace_form(st0, chi), st0.det_g);
          const double tr_drift = std::abs(tr - tr0) / std::max(1.0, std::abs(tr0));
          c.expect(vol_drift < 1e-9, label + ": volume drift " + detail::fmt(vol_drift));
          c.expect(tr_drift < 1e-9,
                   label + ": twist pairing drift " + detail::fmt(tr_drift));
          for (const double t : {0.0, 0.5, 1.0}) {
            const double m =
                std::abs(integrate(residual_twisted(st, chi, t), st.det_g)) /
                g.volume();
            c.expect(m < 1e-9, label + ": residual mean " + detail::fmt(m) +
                                   " at t = " + detail::fmt(t));
          }
        };
        const TorusGrid g1(1, {64, 64});
        const TwistForm chi1 =
            make_twist_form(g1, cmat_identity(1), detail::cos_axis(g1, 0.2, 0));
        const ScalarField phi1 = detail::safe_random(g1, 3, 0.3, 901);
        invariances(g1, chi1, phi1, "n=1");

        const TorusGrid g2(2, {16, 16, 16, 16});
        const TwistForm chi2 =
            make_twist_form(g2, cmat_identity(2), detail::cos_axis(g2, 0.15, 1));
        invariances(g2, chi2, detail::safe_random(g2, 2, 0.2, 902), "n=2");

        // scalar-curvature energy equals the entropy on the flat torus
        const double ke = k_energy(phi1);
        const double en = entropy(phi1);
        const double ke_gap = std::abs(ke - en) / std::max(1.0, std::abs(en));
        c.expect(ke_gap < 1e-7, "energy/entropy gap " + detail::fmt(ke_gap));

        // twist energy is independent of the integration path
        const ScalarField mid = 0.5 * phi1 + detail::cos_axis(g1, 0.2, 1);
        const double direct = j_chi(phi1, chi1);
        const double two_leg = j_chi(mid, chi1) +
                               segment_quadrature(mid, phi1, j_chi_density(chi1),
                                                  gauss_legendre(64));
        const double path_gap =
            std::abs(direct - two_leg) / std::max(1.0, std::abs(direct));
        c.expect(path_gap < 1e-8, "path dependence " + detail::fmt(path_gap));
        c.annotate("energy/entropy gap " + detail::fmt(ke_gap) +
                   ", path dependence " + detail::fmt(path_gap));
      });
}

// ---------------------------------------------------------------------------
// 10. The stationary state at t = 1/2 does not depend on the initial guess.

inline CheckResult check_uniqueness() {
  return detail::timed_check(
      10, "stationary states are unique after normalization", 30.0,
      [](detail::Checker& c) {
        const TorusGrid g(1, {64, 64});
        const ScalarField psi =
            detail::cos_axis(g, 0.2, 0) +
            sample(g, [](const std::array<double, 4>& x) {
              return 0.1 * std::cos(x[0] + x[1]);
            });
        const TwistForm chi = make_twist_form(g, cmat_identity(1), psi);
        const KahlerState a = newton_solve(ScalarField(g), chi, 0.5);
        const ScalarField init2 =
            detail::cos_axis(g, 0.3, 1) - detail::cos_axis(g, 0.2, 0);
        const KahlerState b = newton_solve(init2, chi, 0.5);
        const double gap = sup_norm(project_mean_zero(a.phi - b.phi));
        c.expect(gap <= 1e-7, "states differ by " + detail::fmt(gap));
        c.annotate("state gap " + detail::fmt(gap));
      });
}

// ---------------------------------------------------------------------------

inline std::vector<CheckResult> run_acceptance_checks(std::ostream* progress = nullptr) {
  std::vector<CheckResult> out;
  auto push = [&](CheckResult r) {
    if (progress) {
      (*progress) << (r.passed ? "[PASS] " : "[FAIL] ") << r.id << ": " << r.name
                  << " (" << detail::fmt(r.seconds) << "s)"
                  << (r.detail.empty() ? "" : " -- " + r.detail) << "\n"
                  << std::flush;
    }
    out.push_back(std::move(r));
  };
  push(check_flat_fixed_point());
  push(check_forced_flat_endpoint());
  push(check_energy_gradients());
  push(check_residual_linearization());
  push(check_coercivity_constant());
  push(check_flow_newton_agreement());
  push(check_geodesic_convexity());
  push(check_energy_chain());
  push(check_structural_identities());
  push(check_uniqueness());
  return out;
}

/** Render the pass/fail table; returns true when every check passed. */
inline bool print_check_table(std::ostream& os,
                              const std::vector<CheckResult>& results) {
  bool all = true;
  os << "---- acceptance checks ----\n";
  for (const auto& r : results) {
    all = all && r.passed;
    os << (r.passed ? "[PASS] " : "[FAIL] ") << r.id << ": " << r.name << " ("
       << detail::fmt(r.seconds) << "s)"
       << (r.detail.empty() ? "" : " -- " + r.detail) << "\n";
  }
  os << (all ? "all checks passed" : "CHECKS FAILED") << "\n";
  return all;
}

} // namespace tcsk
