#pragma once

// Kahler potential calculus on the flat torus: metric assembly with pointwise
// positivity control, curvature, metric traces and Laplacians, covariant
// Hessians, and the pointwise residuals of the twisted continuity path
//   t (R_phi - Rbar) = (1 - t) (tr_phi chi - chibar).
// Background: g0 = identity, Ricci(omega_0) = 0, Rbar = 0.

#include <cmath>
#include <cstddef>

#include "errors.hpp"
#include "grid.hpp"
#include "hermitian.hpp"

namespace tcsk {

/** Positivity threshold: states with min eigenvalue <= delta_pos are invalid. */
inline constexpr double delta_pos = 1e-8;

// ---------------------------------------------------------------------------
// Twist form chi = constant Hermitian part + complex Hessian of a potential

struct TwistForm {
  TorusGrid grid;
  cmat constant;                 // Hermitian class representative
  ScalarField psi;               // potential contribution i ddbar psi
  HermitianMatrixField samples;  // cached pointwise matrices
  double min_eigenvalue = 0.0;
  bool positive = false;
};

inline bool is_hermitian(const cmat& m, double tol = 1e-12) {
  for (int i = 0; i < m.n; ++i) {
    if (std::abs(m(i, i).imag()) > tol) return false;
    for (int j = i + 1; j < m.n; ++j)
      if (std::abs(m(i, j) - std::conj(m(j, i))) > tol) return false;
  }
  return true;
}

inline TwistForm make_twist_form(const TorusGrid& g, const cmat& constant,
                                 const ScalarField& psi) {
  if (constant.n != g.n)
    throw precondition_error("make_twist_form: constant part has wrong size");
  if (!is_hermitian(constant))
    throw precondition_error("make_twist_form: constant part not Hermitian");
  require_same_grid(g, psi.grid, "make_twist_form");

  TwistForm f{g, constant, psi, hessian_field(spectrum(psi)), 0.0, false};
  for (std::size_t i = 0; i < g.points(); ++i) {
    f.samples.d0[i] += constant(0, 0).real();
    if (g.n == 2) {
      f.samples.d1[i] += constant(1, 1).real();
      f.samples.off[i] += constant(0, 1);
    }
  }
  double min_eig = cmat_min_eigenvalue(f.samples.at(0));
  for (std::size_t i = 1; i < g.points(); ++i)
    min_eig = std::min(min_eig, cmat_min_eigenvalue(f.samples.at(i)));
  f.min_eigenvalue = min_eig;
  f.positive = min_eig > 0.0;
  return f;
}

inline TwistForm make_twist_form(const TorusGrid& g, const cmat& constant) {
  return make_twist_form(g, constant, ScalarField(g));
}

/** chi = omega_0. */
inline TwistForm identity_twist(const TorusGrid& g) {
  return make_twist_form(g, cmat_identity(g.n));
}

/** Class constant chibar: volume average of tr_{g0} chi. */
inline double chi_bar(const TwistForm& chi) {
  double acc = 0.0;
  for (std::size_t i = 0; i < chi.grid.points(); ++i)
    acc += cmat_trace(chi.samples.at(i));
  return acc / static_cast<double>(chi.grid.points());
}

inline ScalarField det_field(const HermitianMatrixField& m) {
  ScalarField out(m.grid);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = cmat_det(m.at(i));
  return out;
}

// ---------------------------------------------------------------------------
// Kahler state

struct KahlerState {
  TorusGrid grid;
  ScalarField phi;
  HermitianMatrixField g;      // identity + complex Hessian of phi
  HermitianMatrixField g_inv;  // pointwise closed-form inverse (valid states)
  HermitianMatrixField ricci;  // -Hess(dealias(log det g))
  ScalarField det_g;
  ScalarField log_det;
  ScalarField scalar;          // R_phi = tr(g_inv ricci)
  double min_eigenvalue = 0.0;
  bool valid = false;
};

/** Assemble without throwing; inspect .valid before using curvature fields. */
inline KahlerState try_assemble(const TorusGrid& grid, const ScalarField& phi) {
  require_same_grid(grid, phi.grid, "assemble");
  KahlerState st;
  st.grid = grid;
  st.phi = phi;
  st.g = hessian_field(spectrum(phi));
  for (std::size_t i = 0; i < grid.points(); ++i) {
    st.g.d0[i] += 1.0;
    if (grid.n == 2) st.g.d1[i] += 1.0;
  }
  double min_eig = cmat_min_eigenvalue(st.g.at(0));
  for (std::size_t i = 1; i < grid.points(); ++i)
    min_eig = std::min(min_eig, cmat_min_eigenvalue(st.g.at(i)));
  st.min_eigenvalue = min_eig;
  st.det_g = det_field(st.g);
  if (min_eig <= delta_pos) return st; // invalid: no curvature data

  st.valid = true;
  st.g_inv = HermitianMatrixField(grid);
  for (std::size_t i = 0; i < grid.points(); ++i)
    st.g_inv.set(i, cmat_inverse(st.g.at(i)));
  st.log_det = st.det_g;
  for (auto& x : st.log_det.v) x = std::log(x);
  // products feed the solver residual: dealias before re-differentiating
  HermitianMatrixField hess_log = hessian_field(spectrum(dealias(st.log_det)));
  st.ricci = HermitianMatrixField(grid);
  for (std::size_t i = 0; i < grid.points(); ++i) {
    st.ricci.d0[i] = -hess_log.d0[i];
    if (grid.n == 2) {
      st.ricci.d1[i] = -hess_log.d1[i];
      st.ricci.off[i] = -hess_log.off[i];
    }
  }
  st.scalar = trace_product(st.g_inv, st.ricci);
  return st;
}

/** Assemble and reject potentials outside the positivity cone. */
inline KahlerState assemble(const TorusGrid& grid, const ScalarField& phi) {
  KahlerState st = try_assemble(grid, phi);
  if (!st.valid)
    throw invalid_metric_error("assemble: min eigenvalue " +
                               std::to_string(st.min_eigenvalue) +
                               " <= delta_pos");
  return st;
}

inline void require_valid(const KahlerState& st, const char* where) {
  if (!st.valid)
    throw invalid_metric_error(std::string(where) + ": state is invalid");
}

/** R_phi, the full trace of the Ricci matrix. */
inline const ScalarField& scalar_curvature(const KahlerState& st) {
  require_valid(st, "scalar_curvature");
  return st.scalar;
}

/** tr_phi chi = g^{a bbar} chi_{a bbar}, pointwise. */
inline ScalarField trace_form(const KahlerState& st, const TwistForm& chi) {
  require_valid(st, "trace_form");
  require_same_grid(st.grid, chi.grid, "trace_form");
  return trace_product(st.g_inv, chi.samples);
}

/** Delta_phi u = g^{a bbar} u_{,a bbar}. Mean-zero against omega_phi^n. */
inline ScalarField metric_laplacian(const KahlerState& st, const ScalarField& u) {
  require_valid(st, "metric_laplacian");
  require_same_grid(st.grid, u.grid, "metric_laplacian");
  return trace_product(st.g_inv, hessian_field(spectrum(u)));
}

// ---------------------------------------------------------------------------
// Covariant (0,2) Hessian u_{,abar bbar} and friends

/** Symmetric complex 2-tensor field; entries (0,0), (0,1), (1,1). */
struct Hessian02 {
  TorusGrid grid;
  std::array<CField, 3> e;

  const CField& entry(int a, int b) const { return e[a + b]; }
};

/** u_{,abar bbar} = conj(u_{,ab} - Gamma^c_{ab} u_{,c}), Gamma = g^{-1} dg. */
inline Hessian02 covariant_hessian_02(const KahlerState& st, const ScalarField& u) {
  require_valid(st, "covariant_hessian_02");
  require_same_grid(st.grid, u.grid, "covariant_hessian_02");
  const TorusGrid& g = st.grid;
  const int n = g.n;
  const Spectrum su = spectrum(u);
  const Spectrum sphi = spectrum(st.phi);

  std::array<CField, 2> uz;
  for (int c = 0; c < n; ++c) uz[c] = dz(su, c);

  // phi_{,a b dbar}, symmetric in (a,b); Gamma^c_{ab} = g^{c dbar} phi_{,ab dbar}
  std::array<std::array<CField, 2>, 3> third{};
  for (int a = 0; a < n; ++a)
    for (int b = a; b < n; ++b)
      for (int d = 0; d < n; ++d) third[a + b][d] = third_entry(sphi, a, b, d);

  Hessian02 out{g, {}};
  for (int a = 0; a < n; ++a)
    for (int b = a; b < n; ++b) {
      CField entry = zz_entry(su, a, b);
      for (std::size_t i = 0; i < entry.size(); ++i) {
        const cmat ginv = st.g_inv.at(i);
        for (int c = 0; c < n; ++c) {
          cplx gamma = 0.0;
          for (int d = 0; d < n; ++d)
            gamma += std::conj(ginv(c, d)) * third[a + b][d][i];
          entry[i] -= gamma * uz[c][i];
        }
        entry[i] = std::conj(entry[i]);
      }
      out.e[a + b] = std::move(entry);
    }
  return out;
}

/** |T|^2_phi for a (0,2) tensor: contraction with g^{-1} in both slots. */
inline ScalarField hessian02_norm2(const KahlerState& st, const Hessian02& t) {
  require_valid(st, "hessian02_norm2");
  const int n = st.grid.n;
  ScalarField out(st.grid);
  for (std::size_t i = 0; i < out.size(); ++i) {
    cmat tm;
    tm.n = n;
    tm(0, 0) = t.e[0][i];
    if (n == 2) {
      tm(0, 1) = t.e[1][i];
      tm(1, 0) = t.e[1][i];
      tm(1, 1) = t.e[2][i];
    }
    // A = [g^{a bbar}] = conj(g_inv); |T|^2 = Re sum conj(T) .* (A T A^T)
    cmat a = st.g_inv.at(i);
    for (auto& x : a.a) x = std::conj(x);
    cmat at;
    at.n = n;
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < n; ++c) at(r, c) = a(c, r);
    const cmat m = cmat_mul(cmat_mul(a, tm), at);
    double acc = 0.0;
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < n; ++c) acc += (std::conj(tm(r, c)) * m(r, c)).real();
    out[i] = acc;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Metric pairings of gradients

/** Components u_{,a} = d/dz_a u. */
inline std::array<CField, 2> grad_z(const TorusGrid& g, const ScalarField& u) {
  const Spectrum s = spectrum(u);
  std::array<CField, 2> out;
  for (int a = 0; a < g.n; ++a) out[a] = dz(s, a);
  return out;
}

namespace detail {

inline void ginv_apply(const cmat& ginv, const cplx* v, cplx* w) {
  for (int i = 0; i < ginv.n; ++i) {
    cplx acc = 0.0;
    for (int j = 0; j < ginv.n; ++j) acc += ginv(i, j) * v[j];
    w[i] = acc;
  }
}

} // namespace detail

/** |grad u|^2_phi = g^{a bbar} u_{,a} u_{,bbar} >= 0. */
inline ScalarField grad_norm2(const KahlerState& st, const std::array<CField, 2>& du) {
  require_valid(st, "grad_norm2");
  const int n = st.grid.n;
  ScalarField out(st.grid);
  for (std::size_t i = 0; i < out.size(); ++i) {
    cplx v[2] = {du[0][i], n == 2 ? du[1][i] : cplx(0.0)};
    cplx w[2];
    detail::ginv_apply(st.g_inv.at(i), v, w);
    double acc = 0.0;
    for (int a = 0; a < n; ++a) acc += (std::conj(v[a]) * w[a]).real();
    out[i] = acc;
  }
  return out;
}

/** chi(grad u, grad u)_phi = chi_{a bbar} (g^{-1} du)^dagger-pairing, >= 0 for chi > 0. */
inline ScalarField form_gradient_quadratic(const KahlerState& st, const TwistForm& chi,
                                           const std::array<CField, 2>& du) {
  require_valid(st, "form_gradient_quadratic");
  require_same_grid(st.grid, chi.grid, "form_gradient_quadratic");
  const int n = st.grid.n;
  ScalarField out(st.grid);
  for (std::size_t i = 0; i < out.size(); ++i) {
    cplx v[2] = {du[0][i], n == 2 ? du[1][i] : cplx(0.0)};
    cplx w[2];
    detail::ginv_apply(st.g_inv.at(i), v, w);
    const cmat x = chi.samples.at(i);
    cplx acc = 0.0;
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b) acc += std::conj(w[a]) * x(a, b) * w[b];
    out[i] = acc.real();
  }
  return out;
}

/** g^{d cbar} s_{,d} u_{,cbar} as a complex field (first-order pairing). */
inline CField gradient_pair(const KahlerState& st, const std::array<CField, 2>& ds,
                            const std::array<CField, 2>& du) {
  require_valid(st, "gradient_pair");
  const int n = st.grid.n;
  CField out(st.grid);
  for (std::size_t i = 0; i < out.size(); ++i) {
    cplx v[2] = {du[0][i], n == 2 ? du[1][i] : cplx(0.0)};
    cplx w[2];
    detail::ginv_apply(st.g_inv.at(i), v, w);
    cplx acc = 0.0;
    for (int d = 0; d < n; ++d) acc += ds[d][i] * std::conj(w[d]);
    out[i] = acc;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Continuity-path residuals

/** F(phi,t) = t (R_phi - Rbar) - (1-t)(tr_phi chi - chibar), Rbar = 0. */
inline ScalarField residual_twisted(const KahlerState& st, const TwistForm& chi,
                                    double t) {
  if (!(t >= 0.0 && t <= 1.0))
    throw precondition_error("residual_twisted: t must lie in [0,1]");
  require_valid(st, "residual_twisted");
  require_same_grid(st.grid, chi.grid, "residual_twisted");
  const double cb = chi_bar(chi);
  ScalarField tr = trace_form(st, chi);
  ScalarField out(st.grid);
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = t * st.scalar[i] - (1.0 - t) * (tr[i] - cb);
  return out;
}

/** Density mu_k ^ om_phi^{[n-k]} / om_phi^{[n]} with mu_k = chi^k (n <= 2):
 *  k=1 -> tr_phi chi; k=n=2 -> 2 det chi / det g. */
inline ScalarField jmu_density(const KahlerState& st, const TwistForm& chi, int k) {
  require_valid(st, "jmu_density");
  require_same_grid(st.grid, chi.grid, "jmu_density");
  if (k < 1 || k > st.grid.n)
    throw precondition_error("jmu_density: k must lie in 1..n");
  if (k == 1) return trace_form(st, chi);
  ScalarField out(st.grid);
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = 2.0 * cmat_det(chi.samples.at(i)) / st.det_g[i];
  return out;
}

/** Class constant c_k: volume average of the k-density at the background. */
inline double jmu_constant(const TwistForm& chi, int k) {
  if (k < 1 || k > chi.grid.n)
    throw precondition_error("jmu_constant: k must lie in 1..n");
  if (k == 1) return chi_bar(chi);
  double acc = 0.0;
  for (std::size_t i = 0; i < chi.grid.points(); ++i)
    acc += 2.0 * cmat_det(chi.samples.at(i));
  return acc / static_cast<double>(chi.grid.points());
}

/** residual of the J_{mu_k} critical-point equation: density - c_k. */
inline ScalarField residual_jmu(const KahlerState& st, const TwistForm& chi, int k) {
  ScalarField out = jmu_density(st, chi, k);
  const double ck = jmu_constant(chi, k);
  for (auto& x : out.v) x -= ck;
  return out;
}

} // namespace tcsk
