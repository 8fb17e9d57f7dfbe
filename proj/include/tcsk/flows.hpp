#pragma once

// Gradient-flow time steppers: the J-flow (velocity chibar - tr_phi chi) and
// the twisted Calabi flow (velocity t R - (1-t)(tr_phi chi - chibar)).  Both
// are descent flows for the corresponding energies, and the stepper enforces
// that structure: a step is accepted only if it strictly decreases the energy,
// measured by path quadrature between the two states rather than by absolute
// re-evaluation, so the recorded energy column is monotone by construction.

#include <algorithm>
#include <array>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "tcsk/errors.hpp"
#include "tcsk/functionals.hpp"
#include "tcsk/grid.hpp"
#include "tcsk/kahler.hpp"

namespace tcsk {

enum class FlowKind { j_flow, twisted_calabi };

inline const char* to_string(FlowKind k) {
  return k == FlowKind::j_flow ? "j-flow" : "twisted-calabi";
}

enum class FlowStop { converged, step_underflow, max_steps };

inline const char* to_string(FlowStop s) {
  switch (s) {
    case FlowStop::converged: return "converged";
    case FlowStop::step_underflow: return "step-underflow";
    default: return "max-steps";
  }
}

struct FlowSettings {
  double dt_init = 0.1;
  double dt_min = 1e-8;
  double dt_max = 2.0;
  double tol = 1e-8;       // terminal residual sup-norm
  int max_steps = 20000;   // accepted steps
  double growth = 1.2;     // dt multiplier after a quiet stretch
  int growth_window = 10;  // accepted steps between growth events
  int energy_nodes = 8;    // per-step segment quadrature

  void validate() const {
    if (!(dt_init > 0.0) || !(dt_min > 0.0) || !(dt_max >= dt_init))
      throw precondition_error("FlowSettings: need 0 < dt_min, 0 < dt_init <= dt_max");
    if (!(tol > 0.0)) throw precondition_error("FlowSettings: tol must be positive");
    if (max_steps < 0) throw precondition_error("FlowSettings: max_steps must be >= 0");
    if (!(growth >= 1.0) || growth_window < 1)
      throw precondition_error("FlowSettings: growth >= 1 and growth_window >= 1");
    if (energy_nodes < 2)
      throw precondition_error("FlowSettings: energy_nodes must be >= 2");
  }
};

/** One accepted state on the trajectory.  `dt` is the step that produced it
 *  (0 for the initial sample); `dissipation` is the squared velocity norm
 *  int v^2 det g at the state, the expected decay rate of the energy. */
struct FlowSample {
  double time = 0.0;
  double dt = 0.0;
  double residual_sup = 0.0;
  double j_chi = 0.0;
  double k_energy = 0.0;
  double twisted = 0.0;
  double dissipation = 0.0;
};

struct FlowRun {
  FlowKind kind = FlowKind::j_flow;
  double t = 0.0;  // path parameter driving the velocity (0 for the J-flow)
  std::vector<FlowSample> samples;
  ScalarField phi;  // terminal potential
  FlowStop stop = FlowStop::max_steps;
  bool converged = false;
};

namespace detail {

inline double flow_time_parameter(FlowKind kind, double t) {
  if (kind == FlowKind::j_flow) return 0.0;
  if (!(t >= 0.0 && t <= 1.0))
    throw precondition_error("twisted Calabi flow needs t in [0,1]");
  return t;
}

/** Mode-wise semi-implicit update phi(k) += dt v(k) / (1 + dt s(k)) where
 *  s(k) is the flat symbol of the stiff part: t q^2 for the twisted Calabi
 *  flow (its leading term is a squared Laplacian), chibar q for the J-flow.
 *  Stationary states are exact fixed points for every dt. */
inline ScalarField damped_update(const ScalarField& phi, const ScalarField& v,
                                 FlowKind kind, double t, double chibar,
                                 double dt) {
  Spectrum sp = spectrum(phi);
  Spectrum sv = spectrum(v);
  for_each_mode(phi.grid, [&](std::size_t i, const std::array<int, 4>& k) {
    double q = 0.0;
    for (std::size_t d = 0; d < 2 * phi.grid.n; ++d)
      q += 0.25 * double(k[d]) * double(k[d]);
    const double symbol =
        kind == FlowKind::twisted_calabi ? t * q * q : chibar * q;
    sp.c[i] += dt * sv.c[i] / (1.0 + dt * symbol);
  });
  return project_mean_zero(inverse_r(sp));
}

} // namespace detail

/** Single flow step from a valid state.  Throws invalid_metric_error when the
 *  update leaves the positivity cone; callers react by halving dt. */
inline KahlerState step(const KahlerState& state, const TwistForm& chi,
                        FlowKind kind, double t, double dt) {
  if (!(dt > 0.0)) throw precondition_error("flow step: dt must be positive");
  require_valid(state, "flow step");
  const double tt = detail::flow_time_parameter(kind, t);
  const ScalarField v = residual_twisted(state, chi, tt);
  return assemble(state.grid,
                  detail::damped_update(state.phi, v, kind, tt, chi_bar(chi), dt));
}

/** Run a flow to the residual tolerance with energy-decrease acceptance.
 *  Underflow and step-count exhaustion are reported in the returned run, not
 *  thrown, so the trajectory survives for inspection. */
inline FlowRun run_flow(const ScalarField& phi_init, FlowKind kind,
                        const TwistForm& chi, double t = 0.0,
                        const FlowSettings& settings = {}) {
  settings.validate();
  if (!chi.positive)
    throw precondition_error("run_flow: twist form must be positive");
  const double tt = detail::flow_time_parameter(kind, t);
  const double cb = chi_bar(chi);
  const auto rule = gauss_legendre(settings.energy_nodes);
  const auto dj = j_chi_density(chi);
  const auto dk = k_energy_density();

  FlowRun run;
  run.kind = kind;
  run.t = tt;
  run.phi = project_mean_zero(phi_init);
  KahlerState st = assemble(phi_init.grid, run.phi);

  double j = j_chi(run.phi, chi);
  double k = k_energy(run.phi);
  double tw = (1.0 - tt) * j + tt * k;
  ScalarField v = residual_twisted(st, chi, tt);
  double r = sup_norm(v);
  run.samples.push_back({0.0, 0.0, r, j, k, tw, integrate(v * v, st.det_g)});

  double dt = settings.dt_init;
  double time = 0.0;
  int accepted = 0;
  int since_growth = 0;
  while (true) {
    if (r <= settings.tol) {
      run.stop = FlowStop::converged;
      run.converged = true;
      break;
    }
    if (accepted >= settings.max_steps) {
      run.stop = FlowStop::max_steps;
      break;
    }
    if (dt < settings.dt_min) {
      run.stop = FlowStop::step_underflow;
      break;
    }

    ScalarField phi_trial = detail::damped_update(run.phi, v, kind, tt, cb, dt);
    KahlerState st_trial = try_assemble(phi_trial.grid, phi_trial);
    bool accept = st_trial.valid;
    double delta_j = 0.0, delta_k = 0.0, delta_tw = 0.0;
    if (accept) {
      delta_j = segment_quadrature(run.phi, phi_trial, dj, rule);
      delta_k = segment_quadrature(run.phi, phi_trial, dk, rule);
      delta_tw = (1.0 - tt) * delta_j + tt * delta_k;
      const double delta_e = kind == FlowKind::j_flow ? delta_j : delta_tw;
      accept = delta_e < 0.0;
    }
    if (!accept) {
      dt *= 0.5;
      since_growth = 0;
      continue;
    }

    run.phi = std::move(phi_trial);
    st = std::move(st_trial);
    j += delta_j;
    k += delta_k;
    tw += delta_tw;
    time += dt;
    v = residual_twisted(st, chi, tt);
    r = sup_norm(v);
    run.samples.push_back({time, dt, r, j, k, tw, integrate(v * v, st.det_g)});
    ++accepted;
    if (++since_growth >= settings.growth_window) {
      dt = std::min(dt * settings.growth, settings.dt_max);
      since_growth = 0;
    }
  }
  return run;
}

} // namespace tcsk
