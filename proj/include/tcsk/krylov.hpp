#pragma once

// Krylov solvers: preconditioned MINRES on scalar fields (symmetric, possibly
// indefinite systems) and restarted GMRES on flat vectors (nonsymmetric
// space-time systems). Both take operator callbacks and never form matrices.

#include <cmath>
#include <vector>

#include "grid.hpp"

namespace tcsk {

struct KrylovResult {
  int iterations = 0;
  double relative_residual = 0.0;
  bool converged = false;
};

/** Preconditioned MINRES for symmetric A with SPD preconditioner M.
 *  Solves A x = b; minv must apply M^{-1}. x is overwritten (start from 0). */
template <class OpA, class OpM>
KrylovResult minres(const OpA& A, const OpM& minv, const ScalarField& b,
                    ScalarField& x, int max_iter, double rtol) {
  const TorusGrid grid = b.grid;
  x = ScalarField(grid);
  ScalarField r = b;
  ScalarField z = minv(r);
  const double beta1 = std::sqrt(std::max(dot(r, z), 0.0));
  if (beta1 == 0.0) return {0, 0.0, true};

  ScalarField q = (1.0 / beta1) * r;   // Lanczos vector (residual space)
  ScalarField zq = (1.0 / beta1) * z;  // M^{-1} q
  ScalarField q_old(grid), d(grid), d_old(grid);
  double beta = 0.0, eta = beta1;
  double c = 1.0, c_old = 1.0, s = 0.0, s_old = 0.0;

  KrylovResult res;
  for (int k = 1; k <= max_iter; ++k) {
    res.iterations = k;
    ScalarField w = A(zq);
    const double alpha = dot(zq, w);
    w = w - alpha * q - beta * q_old;
    ScalarField zw = minv(w);
    const double beta_next = std::sqrt(std::max(dot(w, zw), 0.0));

    const double delta = c * alpha - c_old * s * beta;
    const double rho1 = std::sqrt(delta * delta + beta_next * beta_next);
    const double rho2 = s * alpha + c_old * c * beta;
    const double rho3 = s_old * beta;
    if (rho1 == 0.0) break; // singular leading block: keep best iterate

    ScalarField d_new = (1.0 / rho1) * (zq - rho3 * d_old - rho2 * d);
    const double c_next = delta / rho1, s_next = beta_next / rho1;
    x = x + (c_next * eta) * d_new;
    eta = -s_next * eta;

    d_old = d;
    d = std::move(d_new);
    c_old = c;
    c = c_next;
    s_old = s;
    s = s_next;

    res.relative_residual = std::abs(eta) / beta1;
    if (res.relative_residual <= rtol) {
      res.converged = true;
      break;
    }
    if (beta_next < 1e-300) { // invariant subspace exhausted
      res.converged = res.relative_residual <= rtol;
      break;
    }
    q_old = q;
    q = (1.0 / beta_next) * w;
    zq = (1.0 / beta_next) * zw;
    beta = beta_next;
  }
  return res;
}

namespace detail {

inline double vdot(const std::vector<double>& a, const std::vector<double>& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

inline void vaxpy(std::vector<double>& y, double a, const std::vector<double>& x) {
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += a * x[i];
}

} // namespace detail

/** Restarted right-preconditioned GMRES on flat vectors.
 *  Solves A x = b with x = M^{-1} y; minv applies the preconditioner. */
template <class OpA, class OpM>
KrylovResult gmres(const OpA& A, const OpM& minv, const std::vector<double>& b,
                   std::vector<double>& x, int restart, int max_iter, double rtol) {
  const std::size_t n = b.size();
  x.assign(n, 0.0);
  const double bnorm = std::sqrt(detail::vdot(b, b));
  KrylovResult res;
  if (bnorm == 0.0) {
    res.converged = true;
    return res;
  }

  std::vector<double> r = b; // x = 0 initially; updated across restarts
  int total = 0;
  while (total < max_iter) {
    double rnorm = std::sqrt(detail::vdot(r, r));
    res.relative_residual = rnorm / bnorm;
    if (res.relative_residual <= rtol) {
      res.converged = true;
      return res;
    }
    const int m = std::min(restart, max_iter - total);
    std::vector<std::vector<double>> v;
    v.reserve(m + 1);
    std::vector<double> v0 = r;
    for (auto& e : v0) e /= rnorm;
    v.push_back(std::move(v0));

    std::vector<std::vector<double>> h(m + 1, std::vector<double>(m, 0.0));
    std::vector<double> cs(m, 0.0), sn(m, 0.0), g(m + 1, 0.0);
    g[0] = rnorm;
    int cols = 0;

    for (int j = 0; j < m; ++j) {
      ++total;
      std::vector<double> w = A(minv(v[j]));
      for (int i = 0; i <= j; ++i) { // modified Gram-Schmidt
        h[i][j] = detail::vdot(w, v[i]);
        detail::vaxpy(w, -h[i][j], v[i]);
      }
      const double sub = std::sqrt(detail::vdot(w, w)); // fresh subdiagonal
      h[j + 1][j] = sub;
      for (int i = 0; i < j; ++i) { // apply stored rotations
        const double t = cs[i] * h[i][j] + sn[i] * h[i + 1][j];
        h[i + 1][j] = -sn[i] * h[i][j] + cs[i] * h[i + 1][j];
        h[i][j] = t;
      }
      const double denom = std::hypot(h[j][j], h[j + 1][j]);
      if (denom == 0.0) {
        cols = j;
        break;
      }
      cs[j] = h[j][j] / denom;
      sn[j] = h[j + 1][j] / denom;
      h[j][j] = denom;
      h[j + 1][j] = 0.0;
      g[j + 1] = -sn[j] * g[j];
      g[j] = cs[j] * g[j];
      cols = j + 1;

      res.iterations = total;
      res.relative_residual = std::abs(g[j + 1]) / bnorm;
      if (res.relative_residual <= rtol || sub == 0.0) break;
      if (j + 1 < m) {
        std::vector<double> vn = w;
        for (auto& e : vn) e /= sub;
        v.push_back(std::move(vn));
      }
    }

    // back substitution and update
    std::vector<double> y(cols, 0.0);
    for (int i = cols - 1; i >= 0; --i) {
      double acc = g[i];
      for (int k = i + 1; k < cols; ++k) acc -= h[i][k] * y[k];
      y[i] = acc / h[i][i];
    }
    std::vector<double> dy(n, 0.0);
    for (int i = 0; i < cols; ++i) detail::vaxpy(dy, y[i], v[i]);
    std::vector<double> dx = minv(dy);
    detail::vaxpy(x, 1.0, dx);

    // true residual for the restart
    std::vector<double> ax = A(x);
    r = b;
    detail::vaxpy(r, -1.0, ax);
    res.relative_residual = std::sqrt(detail::vdot(r, r)) / bnorm;
    if (res.relative_residual <= rtol) {
      res.converged = true;
      return res;
    }
    if (cols < m) break; // breakdown: subspace exhausted without convergence
  }
  return res;
}

} // namespace tcsk
