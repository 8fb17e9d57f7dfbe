#pragma once

// Linearization of the twisted continuity-path residual at a state (phi, t):
//   L u = -t Delta_phi(dealias(Delta_phi u)) - <i ddbar u, t Ric - (1-t) chi>_phi
// built so that L is the exact derivative of the discrete residual map (the
// dealias placement mirrors the one inside the Ricci assembly), plus the
// inner-product structure and the self-adjointness/coercivity probes.

#include <cmath>
#include <limits>
#include <vector>

#include "functionals.hpp"
#include "kahler.hpp"

namespace tcsk {

struct LinearizedOperator {
  KahlerState state;
  TwistForm chi;
  double t = 0.0;
  HermitianMatrixField coeff;  // t Ric - (1-t) chi, sampled pointwise
};

inline LinearizedOperator make_linearized(const KahlerState& st, const TwistForm& chi,
                                          double t) {
  if (!(t >= 0.0 && t <= 1.0))
    throw precondition_error("make_linearized: t must lie in [0,1]");
  require_valid(st, "make_linearized");
  require_same_grid(st.grid, chi.grid, "make_linearized");
  LinearizedOperator op{st, chi, t, HermitianMatrixField(st.grid)};
  for (std::size_t i = 0; i < st.grid.points(); ++i) {
    op.coeff.d0[i] = t * st.ricci.d0[i] - (1.0 - t) * chi.samples.d0[i];
    if (st.grid.n == 2) {
      op.coeff.d1[i] = t * st.ricci.d1[i] - (1.0 - t) * chi.samples.d1[i];
      op.coeff.off[i] = t * st.ricci.off[i] - (1.0 - t) * chi.samples.off[i];
    }
  }
  return op;
}

namespace detail {

/** <i ddbar u, eta>_phi = g^{a dbar} g^{c bbar} u_{,a bbar} eta_{c dbar}
 *  = Re tr(Ginv U Ginv E), pointwise. */
inline ScalarField hessian_pairing(const KahlerState& st,
                                   const HermitianMatrixField& hu,
                                   const HermitianMatrixField& eta) {
  ScalarField out(st.grid);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const cmat gi = st.g_inv.at(i);
    const cmat m = cmat_mul(cmat_mul(gi, hu.at(i)), cmat_mul(gi, eta.at(i)));
    out[i] = cmat_trace(m);
  }
  return out;
}

} // namespace detail

/** L u; exact Frechet derivative of phi -> residual_twisted(assemble(phi), chi, t). */
inline ScalarField apply(const LinearizedOperator& op, const ScalarField& u) {
  require_same_grid(op.state.grid, u.grid, "apply");
  const ScalarField lap = metric_laplacian(op.state, u);
  const ScalarField bilap = metric_laplacian(op.state, dealias(lap));
  const HermitianMatrixField hu = hessian_field(spectrum(u));
  const ScalarField mixed = detail::hessian_pairing(op.state, hu, op.coeff);
  ScalarField out(op.state.grid);
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = -op.t * bilap[i] - mixed[i];
  return out;
}

/** omega_phi^n-weighted inner product int u v det g dV. */
inline double pairing(const KahlerState& st, const ScalarField& u, const ScalarField& v) {
  require_valid(st, "pairing");
  return integrate(u * v, st.det_g);
}

// ---------------------------------------------------------------------------
// Probes

/** Deterministic probe basis: cos/sin of the lowest per-axis modes, followed
 *  by seeded random band-limited fields. */
inline std::vector<ScalarField> probe_basis(const TorusGrid& g, int fourier_modes,
                                            int samples, std::uint64_t seed) {
  std::vector<ScalarField> out;
  for (int axis = 0; axis < 2 * g.n; ++axis)
    for (int m = 1; m <= fourier_modes; ++m) {
      out.push_back(sample(g, [axis, m](const std::array<double, 4>& x) {
        return std::cos(m * x[axis]);
      }));
      out.push_back(sample(g, [axis, m](const std::array<double, 4>& x) {
        return std::sin(m * x[axis]);
      }));
    }
  for (int i = 0; i < samples; ++i)
    out.push_back(random_band_limited(g, 3, 1.0, seed + static_cast<std::uint64_t>(i)));
  return out;
}

/** sup over probe pairs of |<Lu,v> - <u,Lv>| / (|u| |v|); diagnostic away from
 *  solutions, small near them (the first-order term carries grad of the
 *  residual combination t R - (1-t) tr chi). */
inline double self_adjoint_defect(const LinearizedOperator& op, int samples = 4,
                                  std::uint64_t seed = 1234) {
  const auto probes = probe_basis(op.state.grid, 2, samples, seed);
  std::vector<ScalarField> applied;
  std::vector<double> norm;
  applied.reserve(probes.size());
  for (const auto& u : probes) {
    applied.push_back(apply(op, u));
    norm.push_back(std::sqrt(pairing(op.state, u, u)));
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < probes.size(); ++i)
    for (std::size_t j = i + 1; j < probes.size(); ++j) {
      const double a = pairing(op.state, applied[i], probes[j]);
      const double b = pairing(op.state, probes[i], applied[j]);
      worst = std::max(worst, std::abs(a - b) / (norm[i] * norm[j]));
    }
  return worst;
}

/** inf over mean-zero probes of -<u, Lu> / int |grad u|^2_phi det g dV.
 *  At the flat solution with chi = identity the infimum over per-axis modes is
 *  t q + (1-t) at q = 1/4, i.e. (1-t) + t/4. */
inline double coercivity_probe(const LinearizedOperator& op, int samples = 4,
                               std::uint64_t seed = 1234) {
  const auto& st = op.state;
  auto probes = probe_basis(st.grid, 2, samples, seed);
  double inf = std::numeric_limits<double>::infinity();
  for (auto& u : probes) {
    u = project_mean_zero(u, st.det_g);
    const double num = -pairing(st, u, apply(op, u));
    const double den = integrate(grad_norm2(st, grad_z(st.grid, u)), st.det_g);
    if (den > 1e-14) inf = std::min(inf, num / den);
  }
  return inf;
}

// ---------------------------------------------------------------------------
// Integration-by-parts identity of the coercivity argument

/** Relative defect of
 *    int u Lu = int ( -t |u_{,abar bbar}|^2 - (1-t) chi(grad u, grad u)
 *               + Re[ u g^{d cbar} S_{,d} u_{,cbar} ] ) det g dV,
 *  with S = t R - (1-t) tr_phi chi. Discretization-level identity. */
inline double ibp_identity_defect(const LinearizedOperator& op, const ScalarField& u) {
  const auto& st = op.state;
  const double lhs = pairing(st, u, apply(op, u));

  const ScalarField norm2 = hessian02_norm2(st, covariant_hessian_02(st, u));
  const auto du = grad_z(st.grid, u);
  const ScalarField quad = form_gradient_quadratic(st, op.chi, du);

  ScalarField s_field(st.grid);
  const ScalarField tr = trace_form(st, op.chi);
  for (std::size_t i = 0; i < s_field.size(); ++i)
    s_field[i] = op.t * st.scalar[i] - (1.0 - op.t) * tr[i];
  const CField pair = gradient_pair(st, grad_z(st.grid, s_field), du);

  ScalarField rhs_density(st.grid);
  for (std::size_t i = 0; i < rhs_density.size(); ++i)
    rhs_density[i] = -op.t * norm2[i] - (1.0 - op.t) * quad[i] +
                     u[i] * pair[i].real();
  const double rhs = integrate(rhs_density, st.det_g);
  return std::abs(lhs - rhs) / std::max(1.0, std::abs(lhs));
}

} // namespace tcsk
