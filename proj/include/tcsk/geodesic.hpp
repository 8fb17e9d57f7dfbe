#pragma once

// Regularized geodesics in the space of Kahler potentials: solve the
// boundary-value problem
//
//     (phidotdot - |grad phidot|^2_phi) det g_phi = eps        (det g0 = 1)
//
// on tau in [0,1] with fixed endpoint potentials, by damped Newton on the
// space-time system (central differences in tau, spectral geometry in space).
// |grad u|^2_phi here is the complex pairing g^{a bbar} u_{,a} u_{,bbar},
// which equals half the real gradient norm.  eps > 0 keeps the operator
// monotone, so the discrete solution is unique and Newton from the linear
// interpolant is reliable.  Convexity certificates along the path carry O(eps)
// slack by construction.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "tcsk/errors.hpp"
#include "tcsk/functionals.hpp"
#include "tcsk/grid.hpp"
#include "tcsk/kahler.hpp"
#include "tcsk/krylov.hpp"

namespace tcsk {

struct GeodesicSettings {
  double tol = 1e-8;  // residual sup-norm over interior slices
  int max_newton = 30;
  int max_backtrack = 8;
  int max_krylov = 300;
  int restart = 60;
  double forcing = 1e-3;

  void validate() const {
    if (!(tol > 0.0)) throw precondition_error("GeodesicSettings: tol must be positive");
    if (max_newton < 1 || max_backtrack < 0)
      throw precondition_error("GeodesicSettings: iteration limits out of range");
    if (max_krylov < 1 || restart < 2)
      throw precondition_error("GeodesicSettings: Krylov limits out of range");
    if (!(forcing > 0.0) || !(forcing < 1.0))
      throw precondition_error("GeodesicSettings: forcing must lie in (0,1)");
  }
};

struct GeodesicPath {
  double eps = 0.0;
  std::vector<ScalarField> slices;  // n_t potentials, endpoints included
  double residual_sup = 0.0;
  int newton_iterations = 0;

  double dtau() const { return 1.0 / double(slices.size() - 1); }
};

namespace detail {

/** Hermitian quadratic form h(e, e) at e = g^{-1} grad u, pointwise. */
inline ScalarField hessian_quadratic(const KahlerState& st,
                                     const HermitianMatrixField& h,
                                     const std::array<CField, 2>& du) {
  const int n = st.grid.n;
  ScalarField out(st.grid);
  for (std::size_t i = 0; i < out.size(); ++i) {
    cplx v[2] = {du[0][i], n == 2 ? du[1][i] : cplx(0.0)};
    cplx w[2];
    ginv_apply(st.g_inv.at(i), v, w);
    const cmat x = h.at(i);
    cplx acc = 0.0;
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b) acc += std::conj(w[a]) * x(a, b) * w[b];
    out[i] = acc.real();
  }
  return out;
}

/** Per-iterate geometry of the interior slices. */
struct GeodesicWork {
  std::vector<KahlerState> st;
  std::vector<ScalarField> w;                  // D_tau phi
  std::vector<std::array<CField, 2>> gw;       // grad_z of w
  std::vector<ScalarField> r;                  // slice residuals
  double fnorm = 0.0;
  bool valid = false;
};

inline GeodesicWork build_geodesic_work(const std::vector<ScalarField>& slices,
                                        double eps, double dtau) {
  const TorusGrid& g = slices.front().grid;
  const std::size_t m = slices.size() - 2;
  GeodesicWork work;
  work.st.reserve(m);
  work.w.reserve(m);
  work.gw.reserve(m);
  work.r.reserve(m);
  for (std::size_t i = 1; i + 1 < slices.size(); ++i) {
    KahlerState st = try_assemble(g, slices[i]);
    if (!st.valid) return work;  // valid stays false
    ScalarField w = (0.5 / dtau) * (slices[i + 1] - slices[i - 1]);
    auto gw = grad_z(g, w);
    const ScalarField gn = grad_norm2(st, gw);
    ScalarField r(g);
    const double idt2 = 1.0 / (dtau * dtau);
    for (std::size_t p = 0; p < r.size(); ++p) {
      const double ddtt =
          (slices[i + 1][p] - 2.0 * slices[i][p] + slices[i - 1][p]) * idt2;
      r[p] = ddtt - gn[p] - eps / st.det_g[p];
    }
    work.fnorm = std::max(work.fnorm, sup_norm(r));
    work.st.push_back(std::move(st));
    work.w.push_back(std::move(w));
    work.gw.push_back(std::move(gw));
    work.r.push_back(std::move(r));
  }
  work.valid = true;
  return work;
}

/** Directional derivative of the stacked slice residuals at the iterate
 *  described by `work`.  The time part couples neighbor slices; the spatial
 *  part acts through the slice's own metric: for each interior slice
 *
 *    dR[v] = D_tautau v - 2 Re< grad D_tau v, grad w >_phi
 *          + Hess(v)(e, e) + (eps / det g) Delta_phi v,   e = g^{-1} grad w,
 *
 *  with w = D_tau phi frozen from the iterate. */
inline std::vector<double> geodesic_jvp(const GeodesicWork& work, const TorusGrid& g,
                                        double dtau, double eps,
                                        const std::vector<double>& v) {
  const std::size_t m = work.st.size();
  const std::size_t space = g.points();
  const double idt2 = 1.0 / (dtau * dtau);
  std::vector<Spectrum> specs;
  specs.reserve(m);
  ScalarField vi(g);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < space; ++p) vi[p] = v[i * space + p];
    specs.push_back(spectrum(vi));
  }
  std::vector<double> out(m * space);
  for (std::size_t i = 0; i < m; ++i) {
    const KahlerState& st = work.st[i];
    const auto h = hessian_field(specs[i]);
    const ScalarField lap = trace_product(st.g_inv, h);
    const ScalarField quad = hessian_quadratic(st, h, work.gw[i]);

    Spectrum dv{g, std::vector<cplx>(specs[i].c.size())};
    for (std::size_t p = 0; p < dv.c.size(); ++p) {
      cplx acc = 0.0;
      if (i + 1 < m) acc += specs[i + 1].c[p];
      if (i > 0) acc -= specs[i - 1].c[p];
      dv.c[p] = acc * (0.5 / dtau);
    }
    std::array<CField, 2> gdv;
    for (int a = 0; a < g.n; ++a) gdv[a] = dz(dv, a);
    const CField pair = gradient_pair(st, gdv, work.gw[i]);

    for (std::size_t p = 0; p < space; ++p) {
      double ddtt = -2.0 * v[i * space + p];
      if (i + 1 < m) ddtt += v[(i + 1) * space + p];
      if (i > 0) ddtt += v[(i - 1) * space + p];
      out[i * space + p] = ddtt * idt2 - 2.0 * pair[p].real() + quad[p] +
                           eps / st.det_g[p] * lap[p];
    }
  }
  return out;
}

/** Exact inverse of the D_tautau block (Dirichlet ends) by the Thomas
 *  algorithm, one constant-coefficient tridiagonal system per spatial point.
 *  This is the stiff 1/dtau^2-scale part of the linearization. */
struct TimeLaplacePreconditioner {
  std::size_t m = 0;
  std::size_t space = 0;
  double dtau2 = 0.0;
  std::vector<double> pivots;

  TimeLaplacePreconditioner(std::size_t slices_m, std::size_t space_points,
                            double dtau)
      : m(slices_m), space(space_points), dtau2(dtau * dtau), pivots(slices_m) {
    pivots[0] = -2.0;
    for (std::size_t i = 1; i < m; ++i) pivots[i] = -2.0 - 1.0 / pivots[i - 1];
  }

  std::vector<double> operator()(const std::vector<double>& rhs) const {
    std::vector<double> z(m), out(rhs.size());
    for (std::size_t p = 0; p < space; ++p) {
      z[0] = dtau2 * rhs[p];
      for (std::size_t i = 1; i < m; ++i)
        z[i] = dtau2 * rhs[i * space + p] - z[i - 1] / pivots[i - 1];
      out[(m - 1) * space + p] = z[m - 1] / pivots[m - 1];
      for (std::size_t i = m - 1; i-- > 0;)
        out[i * space + p] = (z[i] - out[(i + 1) * space + p]) / pivots[i];
    }
    return out;
  }
};

} // namespace detail

/** Solve the eps-geodesic boundary-value problem.  n_t must be odd and >= 9;
 *  the returned path includes both endpoints and satisfies the slice residual
 *  bound `settings.tol` in sup-norm. */
inline GeodesicPath solve_geodesic(const ScalarField& phi0, const ScalarField& phi1,
                                   double eps, int n_t = 17,
                                   const GeodesicSettings& settings = {}) {
  settings.validate();
  require_same_grid(phi0.grid, phi1.grid, "solve_geodesic");
  if (!(eps > 0.0)) throw precondition_error("solve_geodesic: eps must be positive");
  if (n_t < 9 || n_t % 2 == 0)
    throw precondition_error("solve_geodesic: n_t must be odd and >= 9");
  const TorusGrid& g = phi0.grid;
  assemble(g, phi0);  // endpoint validity
  assemble(g, phi1);

  const double dtau = 1.0 / double(n_t - 1);
  const std::size_t m = std::size_t(n_t) - 2;
  const std::size_t space = g.points();

  GeodesicPath path;
  path.eps = eps;
  path.slices.reserve(n_t);
  for (int i = 0; i < n_t; ++i) {
    const double tau = double(i) * dtau;
    path.slices.push_back((1.0 - tau) * phi0 + tau * phi1);
  }

  auto work = detail::build_geodesic_work(path.slices, eps, dtau);
  if (!work.valid)
    throw invalid_metric_error("solve_geodesic: interior slice left the cone");

  const detail::TimeLaplacePreconditioner minv(m, space, dtau);

  auto jvp = [&](const std::vector<double>& v) {
    return detail::geodesic_jvp(work, g, dtau, eps, v);
  };

  int iterations = 0;
  while (work.fnorm > settings.tol) {
    if (iterations >= settings.max_newton)
      throw max_iterations_error("solve_geodesic: no convergence after " +
                                 std::to_string(iterations) + " iterations");
    std::vector<double> b(m * space);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t p = 0; p < space; ++p) b[i * space + p] = -work.r[i][p];

    std::vector<double> delta(m * space, 0.0);
    const double rtol = settings.forcing * std::min(1.0, work.fnorm);
    auto res = gmres(jvp, minv, b, delta, settings.restart, settings.max_krylov, rtol);
    if (!res.converged && res.relative_residual > 0.1)
      throw krylov_error("solve_geodesic: GMRES stalled at relative residual " +
                         std::to_string(res.relative_residual));

    double lambda = 1.0;
    bool accepted = false;
    bool last_invalid = false;
    for (int bt = 0; bt <= settings.max_backtrack; ++bt) {
      std::vector<ScalarField> trial = path.slices;
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < space; ++p)
          trial[i + 1][p] += lambda * delta[i * space + p];
      auto trial_work = detail::build_geodesic_work(trial, eps, dtau);
      last_invalid = !trial_work.valid;
      if (trial_work.valid && trial_work.fnorm < work.fnorm) {
        path.slices = std::move(trial);
        work = std::move(trial_work);
        accepted = true;
        break;
      }
      lambda *= 0.5;
    }
    if (!accepted) {
      if (last_invalid)
        throw invalid_metric_error("solve_geodesic: damping hit invalid slices");
      throw max_iterations_error("solve_geodesic: damping failed to reduce the residual");
    }
    ++iterations;
  }
  path.residual_sup = work.fnorm;
  path.newton_iterations = iterations;
  return path;
}

/** Centered second differences in tau of a functional along the path, one
 *  value per interior slice. */
inline std::vector<double> convexity_profile(
    const GeodesicPath& path, const std::function<double(const ScalarField&)>& f) {
  if (path.slices.size() < 3)
    throw precondition_error("convexity_profile: path needs at least 3 slices");
  std::vector<double> vals;
  vals.reserve(path.slices.size());
  for (const auto& s : path.slices) vals.push_back(f(s));
  const double idt2 = 1.0 / (path.dtau() * path.dtau());
  std::vector<double> out;
  out.reserve(vals.size() - 2);
  for (std::size_t i = 1; i + 1 < vals.size(); ++i)
    out.push_back((vals[i + 1] - 2.0 * vals[i] + vals[i - 1]) * idt2);
  return out;
}

/** Against-the-books check of the second t-derivative of the (unnormalized)
 *  twist energy Jtilde = J_chi + chibar * AubinMabuchi along the path:
 *
 *    d^2 Jtilde / dtau^2 = int (phidotdot - |grad phidot|^2) tr_phi chi  w^n
 *                        + int chi(e, e) w^n,   e = g^{-1} grad phidot,
 *
 *  both sides discretized with the same central differences.  Returns the
 *  worst relative gap over interior slices; it decays like dtau^2. */
inline double second_derivative_identity_check(const GeodesicPath& path,
                                               const TwistForm& chi) {
  if (path.slices.size() < 3)
    throw precondition_error("identity check: path needs at least 3 slices");
  const TorusGrid& g = path.slices.front().grid;
  require_same_grid(g, chi.grid, "second_derivative_identity_check");
  const double cb = chi_bar(chi);
  const double dtau = path.dtau();
  const double idt2 = 1.0 / (dtau * dtau);

  // Fixed-node path quadrature: the integrands are polynomials of degree <= n
  // in the path parameter, so 8 nodes are exact and the second difference
  // (which amplifies value noise by 1/dtau^2) stays at the roundoff floor.
  std::vector<double> vals;
  vals.reserve(path.slices.size());
  for (const auto& s : path.slices)
    vals.push_back(j_chi(s, chi, 8) + cb * aubin_mabuchi(s, 8));

  double worst = 0.0;
  for (std::size_t i = 1; i + 1 < path.slices.size(); ++i) {
    const double lhs = (vals[i + 1] - 2.0 * vals[i] + vals[i - 1]) * idt2;
    const KahlerState st = assemble(g, path.slices[i]);
    const ScalarField w = (0.5 / dtau) * (path.slices[i + 1] - path.slices[i - 1]);
    const auto gw = grad_z(g, w);
    const ScalarField gn = grad_norm2(st, gw);
    const ScalarField sigma = trace_form(st, chi);
    ScalarField accel(g);
    for (std::size_t p = 0; p < accel.size(); ++p)
      accel[p] = (path.slices[i + 1][p] - 2.0 * path.slices[i][p] +
                  path.slices[i - 1][p]) * idt2 - gn[p];
    const double rhs = integrate(accel * sigma, st.det_g) +
                       integrate(form_gradient_quadratic(st, chi, gw), st.det_g);
    worst = std::max(worst, std::abs(lhs - rhs) / std::max(1.0, std::abs(lhs)));
  }
  return worst;
}

} // namespace tcsk
