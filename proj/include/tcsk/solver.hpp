#pragma once

// Newton-Krylov solver for the twisted continuity-path residual at fixed t,
// and predictor-corrector continuation across a t-schedule. The Newton step
// solves L u = -F on mean-zero fields via preconditioned MINRES applied to
// the det-g-weighted symmetrization  u -> project( det g * (L u) ), with the
// flat-symbol SPD preconditioner  P(k) = t q^2 + (1-t) lambda_min(mean chi) q,
// q = |k|^2/4, inverted mode-wise.

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "krylov.hpp"
#include "linop.hpp"

namespace tcsk {

struct NewtonSettings {
  double tol_outer = 1e-9;   // residual sup-norm target
  int max_newton = 30;
  double damping = 0.5;      // backtracking factor
  int max_backtrack = 8;
  double forcing = 1e-3;     // krylov_tol = forcing * min(1, |F|)
  int max_krylov = 400;
  bool secant_predictor = false;

  void validate() const {
    if (tol_outer <= 0 || max_newton <= 0 || max_backtrack <= 0 ||
        forcing <= 0 || max_krylov <= 0)
      throw precondition_error("NewtonSettings: all limits must be positive");
    if (!(damping > 0.0 && damping < 1.0))
      throw precondition_error("NewtonSettings: damping must lie in (0,1)");
  }
};

struct NewtonReport {
  int iterations = 0;
  double residual_sup = 0.0;
  int krylov_iterations = 0;          // total inner iterations
  std::vector<double> residual_history;
};

namespace detail {

/** Mean of the twist form's pointwise matrices (class representative). */
inline cmat mean_matrix(const TwistForm& chi) {
  cmat m;
  m.n = chi.grid.n;
  const double inv = 1.0 / static_cast<double>(chi.grid.points());
  for (std::size_t i = 0; i < chi.grid.points(); ++i) {
    const cmat s = chi.samples.at(i);
    for (int r = 0; r < m.n; ++r)
      for (int c = 0; c < m.n; ++c) m(r, c) += s(r, c) * inv;
  }
  return m;
}

/** Flat-symbol preconditioner apply: divide each mode by P(k). */
inline ScalarField precondition_flat(const ScalarField& r, double t, double lam) {
  Spectrum s = spectrum(r);
  for_each_mode(s.grid, [&](std::size_t i, const std::array<int, 4>& k) {
    double q = 0.0;
    for (int d = 0; d < 2 * s.grid.n; ++d) q += 0.25 * double(k[d]) * double(k[d]);
    const double p = t * q * q + (1.0 - t) * lam * q;
    s.c[i] /= (p > 0.0 ? p : 1.0);
  });
  return inverse_r(s);
}

} // namespace detail

/** One Newton linear solve: returns the mean-zero step u with L u ~ -F. */
inline ScalarField newton_step(const LinearizedOperator& op, const ScalarField& f,
                               const NewtonSettings& settings, int* iterations) {
  const TorusGrid& grid = op.state.grid;
  const double lam = std::max(cmat_min_eigenvalue(detail::mean_matrix(op.chi)), 1e-8);

  // weighted symmetrization: A u = project( det g * (-L u) ), b = project(det g * F)
  auto a_op = [&](const ScalarField& u) {
    ScalarField lu = apply(op, u);
    for (std::size_t i = 0; i < lu.size(); ++i) lu[i] *= -op.state.det_g[i];
    return project_mean_zero(lu);
  };
  auto m_op = [&](const ScalarField& r) {
    return project_mean_zero(detail::precondition_flat(r, op.t, lam));
  };
  ScalarField b(grid);
  for (std::size_t i = 0; i < b.size(); ++i) b[i] = op.state.det_g[i] * f[i];
  b = project_mean_zero(b);

  ScalarField u(grid);
  const double rtol = settings.forcing * std::min(1.0, sup_norm(f));
  auto res = minres(a_op, m_op, b, u, settings.max_krylov, rtol);
  if (iterations) *iterations += res.iterations;
  if (!res.converged && res.relative_residual > 0.1)
    throw krylov_error("newton_step: MINRES stalled at relative residual " +
                       std::to_string(res.relative_residual));
  return project_mean_zero(u);
}

/** Solve F(phi, t) = 0 from phi_init; solution is mean-zero against det g0. */
inline KahlerState newton_solve(const ScalarField& phi_init, const TwistForm& chi,
                                double t, const NewtonSettings& settings = {},
                                NewtonReport* report = nullptr) {
  settings.validate();
  if (!(t >= 0.0 && t <= 1.0))
    throw precondition_error("newton_solve: t must lie in [0,1]");
  require_same_grid(phi_init.grid, chi.grid, "newton_solve");

  ScalarField phi = project_mean_zero(phi_init);
  KahlerState st = assemble(phi.grid, phi);
  ScalarField f = residual_twisted(st, chi, t);
  double fnorm = sup_norm(f);
  NewtonReport rep;
  rep.residual_history.push_back(fnorm);

  while (fnorm > settings.tol_outer) {
    if (rep.iterations >= settings.max_newton)
      throw max_iterations_error("newton_solve: residual " + std::to_string(fnorm) +
                                 " after " + std::to_string(rep.iterations) +
                                 " iterations at t = " + std::to_string(t));
    const auto op = make_linearized(st, chi, t);
    const ScalarField u = newton_step(op, f, settings, &rep.krylov_iterations);

    double lambda = 1.0;
    bool accepted = false;
    std::string last_failure;
    for (int bt = 0; bt <= settings.max_backtrack; ++bt) {
      const ScalarField trial = project_mean_zero(phi + lambda * u);
      KahlerState st_trial = try_assemble(phi.grid, trial);
      if (st_trial.valid) {
        const ScalarField f_trial = residual_twisted(st_trial, chi, t);
        const double fn_trial = sup_norm(f_trial);
        if (fn_trial < fnorm) {
          phi = trial;
          st = std::move(st_trial);
          f = f_trial;
          fnorm = fn_trial;
          accepted = true;
          break;
        }
        last_failure = "no residual decrease";
      } else {
        last_failure = "invalid metric (min eigenvalue " +
                       std::to_string(st_trial.min_eigenvalue) + ")";
      }
      lambda *= settings.damping;
    }
    ++rep.iterations;
    if (!accepted) {
      if (last_failure.rfind("invalid metric", 0) == 0)
        throw invalid_metric_error("newton_solve: damping failed at iteration " +
                                   std::to_string(rep.iterations) + ": " + last_failure);
      throw max_iterations_error("newton_solve: damping failed at iteration " +
                                 std::to_string(rep.iterations) + ": " + last_failure);
    }
    rep.residual_history.push_back(fnorm);
  }
  rep.residual_sup = fnorm;
  if (report) *report = rep;
  return st;
}

/** t = 0 special case: the J-equation tr_phi chi = chibar. */
inline KahlerState solve_j_equation(const TwistForm& chi,
                                    const NewtonSettings& settings = {}) {
  if (!chi.positive)
    throw precondition_error("solve_j_equation: twist form is not positive");
  return newton_solve(ScalarField(chi.grid), chi, 0.0, settings);
}

// ---------------------------------------------------------------------------
// Continuation

struct ContinuationStep {
  double t = 0.0;
  ScalarField phi;
  int newton_iterations = 0;
  double residual_sup = 0.0;
  int step_halvings = 0;
  double predictor_energy = 0.0;  // twisted energy at the predictor
  double solution_energy = 0.0;   // twisted energy at the accepted state
};

struct ContinuationRun {
  std::vector<ContinuationStep> steps;
  bool completed = false;
  double last_accepted_t = 0.0;  // empirical R(chi) estimate
  std::string failure_reason;
};

/** Default schedule t = 0, 0.05, ..., 1.0. */
inline std::vector<double> default_schedule() {
  std::vector<double> s;
  for (int i = 0; i <= 20; ++i) s.push_back(0.05 * i);
  s.back() = 1.0;
  return s;
}

inline void validate_schedule(const std::vector<double>& schedule) {
  if (schedule.empty() || schedule.front() != 0.0)
    throw precondition_error("continue_path: schedule must start at t = 0");
  for (std::size_t i = 0; i + 1 < schedule.size(); ++i)
    if (!(schedule[i] < schedule[i + 1]))
      throw precondition_error("continue_path: schedule must be strictly increasing");
  if (schedule.back() > 1.0)
    throw precondition_error("continue_path: schedule must stay within [0,1]");
}

inline ContinuationRun continue_path(const TwistForm& chi,
                                     const std::vector<double>& schedule,
                                     const NewtonSettings& settings = {}) {
  validate_schedule(schedule);
  if (!chi.positive)
    throw precondition_error("continue_path: twist form is not positive");
  constexpr double min_dt = 0.05 / 16.0;
  constexpr int max_halvings = 4;

  ContinuationRun run;
  const TorusGrid& grid = chi.grid;

  auto accept = [&](double t, const KahlerState& st, const NewtonReport& rep,
                    int halvings, const ScalarField& predictor) {
    ContinuationStep step;
    step.t = t;
    step.phi = st.phi;
    step.newton_iterations = rep.iterations;
    step.residual_sup = rep.residual_sup;
    step.step_halvings = halvings;
    step.predictor_energy = twisted_energy(predictor, chi, t);
    step.solution_energy = twisted_energy(st.phi, chi, t);
    run.steps.push_back(std::move(step));
    run.last_accepted_t = t;
  };

  // t = 0 anchor
  ScalarField phi_prev(grid);
  double t_prev = 0.0;
  bool have_prev = false; // a (t, phi) pair before the current one
  ScalarField phi_cur;
  {
    NewtonReport rep;
    ScalarField zero(grid);
    KahlerState st;
    try {
      st = newton_solve(zero, chi, 0.0, settings, &rep);
    } catch (const error& e) {
      run.failure_reason = std::string("t = 0: ") + e.what();
      return run;
    }
    phi_cur = st.phi;
    accept(0.0, st, rep, 0, zero);
  }
  double t_cur = 0.0;

  for (std::size_t i = 1; i < schedule.size(); ++i) {
    const double t_target = schedule[i];
    int halvings = 0;
    double t_next = t_target;
    while (t_cur < t_target) {
      ScalarField predictor = phi_cur;
      if (settings.secant_predictor && have_prev && t_cur > t_prev) {
        const double gain = (t_next - t_cur) / (t_cur - t_prev);
        predictor = phi_cur + gain * (phi_cur - phi_prev);
        if (!try_assemble(grid, project_mean_zero(predictor)).valid)
          predictor = phi_cur; // fall back when extrapolation leaves the cone
      }
      try {
        NewtonReport rep;
        KahlerState st = newton_solve(predictor, chi, t_next, settings, &rep);
        accept(t_next, st, rep, halvings, project_mean_zero(predictor));
        phi_prev = phi_cur;
        t_prev = t_cur;
        have_prev = true;
        phi_cur = st.phi;
        t_cur = t_next;
        t_next = t_target;
      } catch (const error& e) {
        ++halvings;
        t_next = t_cur + 0.5 * (t_next - t_cur);
        if (halvings > max_halvings || (t_next - t_cur) < min_dt) {
          run.failure_reason = "stalled at t = " + std::to_string(t_cur) +
                               " targeting " + std::to_string(t_target) + ": " +
                               e.what();
          return run;
        }
      }
    }
  }
  run.completed = true;
  return run;
}

inline ContinuationRun continue_path(const TwistForm& chi,
                                     const NewtonSettings& settings = {}) {
  return continue_path(chi, default_schedule(), settings);
}

} // namespace tcsk
