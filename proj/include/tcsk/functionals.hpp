#pragma once

// Energy functionals over the space of Kahler potentials, all defined through
// their first-variation formulas and evaluated by Gauss-Legendre quadrature
// along the linear path s -> s*phi (path independence is a tested invariant):
//   dJ_chi    [u] =  int u (tr_phi chi - chibar) det g dV
//   dE        [u] = -int u (R_phi - Rbar)        det g dV
//   dAM       [u] =  int u                       det g dV
//   dJ_mu(k)  [u] =  int u (m_k - c_k)           det g dV
// plus the direct integrals entropy, aubin I/J.

#include <cmath>
#include <functional>
#include <vector>

#include "kahler.hpp"

namespace tcsk {

// ---------------------------------------------------------------------------
// Gauss-Legendre quadrature on [0,1]

struct PathRule {
  std::vector<double> node;
  std::vector<double> weight;
};

/** m-point Gauss-Legendre rule on [0,1]; nodes by Newton on P_m. */
inline PathRule gauss_legendre(int m) {
  if (m < 1) throw precondition_error("gauss_legendre: need at least one node");
  PathRule r;
  r.node.resize(m);
  r.weight.resize(m);
  for (int i = 0; i < m; ++i) {
    // Chebyshev-like initial guess for the i-th root of P_m on [-1,1]
    double x = std::cos(M_PI * (i + 0.75) / (m + 0.5));
    double dp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p0 = 1.0, p1 = x;
      for (int j = 2; j <= m; ++j) {
        const double p2 = ((2 * j - 1) * x * p1 - (j - 1) * p0) / j;
        p0 = p1;
        p1 = p2;
      }
      dp = m * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-15) break;
    }
    r.node[m - 1 - i] = 0.5 * (x + 1.0);
    r.weight[m - 1 - i] = 1.0 / ((1.0 - x * x) * dp * dp); // = w/2 on [0,1]
  }
  return r;
}

// ---------------------------------------------------------------------------
// Class constants

struct ClassConstants {
  int n = 1;
  double chi_bar = 0.0;
  double r_bar = 0.0;
  std::array<double, 2> c_k{};  // c_1, c_2 (c_2 only for n = 2)

  /** Path constant C_t = (1-t) chibar - t Rbar. */
  double c_t(double t) const { return (1.0 - t) * chi_bar - t * r_bar; }
};

inline ClassConstants class_constants(const TwistForm& chi) {
  if (!chi.positive)
    throw precondition_error("class_constants: twist form is not positive");
  ClassConstants c;
  c.n = chi.grid.n;
  c.chi_bar = chi_bar(chi);
  auto flat = assemble(chi.grid, ScalarField(chi.grid));
  c.r_bar = integrate(flat.scalar, flat.det_g) / chi.grid.volume();
  c.c_k[0] = jmu_constant(chi, 1);
  if (c.n == 2) c.c_k[1] = jmu_constant(chi, 2);
  return c;
}

// ---------------------------------------------------------------------------
// Path quadrature engine

/** Gradient density of a functional w.r.t. the measure det g dV. */
using GradientDensity = std::function<ScalarField(const KahlerState&)>;

/** int_0^1 ds int (b-a) grad(a + s(b-a)) det g dV along the straight segment. */
inline double segment_quadrature(const ScalarField& a, const ScalarField& b,
                                 const GradientDensity& grad, const PathRule& rule) {
  require_same_grid(a.grid, b.grid, "segment_quadrature");
  const ScalarField dir = b + (-1.0) * a;
  double acc = 0.0;
  for (std::size_t q = 0; q < rule.node.size(); ++q) {
    const ScalarField phi_s = a + rule.node[q] * dir;
    const KahlerState st = assemble(a.grid, phi_s); // throws if path leaves cone
    acc += rule.weight[q] * integrate(dir * grad(st), st.det_g);
  }
  return acc;
}

namespace detail {

/** Doubles the node count from 16 until two refinements agree to rel_tol. */
inline double refine_path_quadrature(const std::function<double(int)>& eval,
                                     int* nodes_used = nullptr,
                                     double rel_tol = 1e-9, int max_nodes = 256) {
  int m = 16;
  double prev = eval(m);
  while (2 * m <= max_nodes) {
    m *= 2;
    const double next = eval(m);
    const bool settled = std::abs(next - prev) <= rel_tol * std::max(1.0, std::abs(next));
    prev = next;
    if (settled) break;
  }
  if (nodes_used) *nodes_used = m;
  return prev;
}

/** Energy from zero to phi; nodes > 0 fixes the rule, nodes = 0 adapts. */
inline double path_energy(const ScalarField& phi, const GradientDensity& grad,
                          int nodes, int* nodes_used = nullptr) {
  const ScalarField zero(phi.grid);
  if (nodes > 0) {
    if (nodes_used) *nodes_used = nodes;
    return segment_quadrature(zero, phi, grad, gauss_legendre(nodes));
  }
  return refine_path_quadrature(
      [&](int m) { return segment_quadrature(zero, phi, grad, gauss_legendre(m)); },
      nodes_used);
}

} // namespace detail

// ---------------------------------------------------------------------------
// Gradient densities

inline GradientDensity j_chi_density(const TwistForm& chi) {
  return [chi](const KahlerState& st) { return residual_jmu(st, chi, 1); };
}

inline GradientDensity k_energy_density() {
  return [](const KahlerState& st) { return (-1.0) * st.scalar; };
}

inline GradientDensity aubin_mabuchi_density() {
  return [](const KahlerState& st) { return ScalarField(st.grid, 1.0); };
}

inline GradientDensity j_mu_density(const TwistForm& chi, int k) {
  return [chi, k](const KahlerState& st) { return residual_jmu(st, chi, k); };
}

// ---------------------------------------------------------------------------
// Functionals

/** J_chi: gradient tr_phi chi - chibar; J_chi(0) = 0. */
inline double j_chi(const ScalarField& phi, const TwistForm& chi, int nodes = 0) {
  return detail::path_energy(phi, j_chi_density(chi), nodes);
}

/** K-energy: gradient -(R_phi - Rbar); equals entropy on the flat torus. */
inline double k_energy(const ScalarField& phi, int nodes = 0) {
  return detail::path_energy(phi, k_energy_density(), nodes);
}

/** Aubin-Mabuchi path functional: gradient 1 (volume pairing). */
inline double aubin_mabuchi(const ScalarField& phi, int nodes = 0) {
  return detail::path_energy(phi, aubin_mabuchi_density(), nodes);
}

/** J_{mu_k}: gradient m_k - c_k; k = 1 coincides with J_chi. */
inline double j_mu(const ScalarField& phi, const TwistForm& chi, int k, int nodes = 0) {
  return detail::path_energy(phi, j_mu_density(chi, k), nodes);
}

/** Twisted K-energy E_{chi,t} = (1-t) J_chi + t E, exact affine combination. */
inline double twisted_energy(const ScalarField& phi, const TwistForm& chi, double t,
                             int nodes = 0) {
  if (!(t >= 0.0 && t <= 1.0))
    throw precondition_error("twisted_energy: t must lie in [0,1]");
  return (1.0 - t) * j_chi(phi, chi, nodes) + t * k_energy(phi, nodes);
}

/** Entropy int log(det g_phi) det g_phi dV >= 0 (Jensen at equal volumes). */
inline double entropy(const ScalarField& phi) {
  const KahlerState st = assemble(phi.grid, phi);
  return integrate(st.log_det, st.det_g);
}

inline double entropy(const KahlerState& st) {
  require_valid(st, "entropy");
  return integrate(st.log_det, st.det_g);
}

/** Aubin pair: I the path quadrature of the J-integrand, J the endpoint form
 *  J(phi) = int phi (det g0 - det g_phi) dV >= 0. Both vanish on constants. */
inline std::pair<double, double> aubin_I_J(const ScalarField& phi, int nodes = 0) {
  const KahlerState st = assemble(phi.grid, phi);
  ScalarField defect(phi.grid, 1.0);
  defect = defect + (-1.0) * st.det_g;
  const double aubin_j = integrate(phi * defect);
  const GradientDensity grad = [](const KahlerState& s) {
    ScalarField d(s.grid);
    for (std::size_t i = 0; i < d.size(); ++i)
      d[i] = (1.0 - s.det_g[i]) / s.det_g[i];
    return d;
  };
  const double aubin_i = detail::path_energy(phi, grad, nodes);
  return {aubin_i, aubin_j};
}

// ---------------------------------------------------------------------------
// Bundled report

struct EnergyReport {
  double j_chi = 0.0;
  double entropy = 0.0;
  double k_energy = 0.0;
  double twisted = 0.0;
  double aubin_I = 0.0;
  double aubin_J = 0.0;
  std::array<double, 2> j_mu{};  // k = 1..n
  double t = 0.0;
  int quadrature_nodes = 0;  // largest rule used
  int segments = 1;
};

inline EnergyReport energy_report(const ScalarField& phi, const TwistForm& chi,
                                  double t, int nodes = 0) {
  if (!(t >= 0.0 && t <= 1.0))
    throw precondition_error("energy_report: t must lie in [0,1]");
  EnergyReport r;
  r.t = t;
  int used = 0, max_used = 0;
  r.j_chi = detail::path_energy(phi, j_chi_density(chi), nodes, &used);
  max_used = std::max(max_used, used);
  r.k_energy = detail::path_energy(phi, k_energy_density(), nodes, &used);
  max_used = std::max(max_used, used);
  r.twisted = (1.0 - t) * r.j_chi + t * r.k_energy;
  r.entropy = entropy(phi);
  auto ij = aubin_I_J(phi, nodes);
  r.aubin_I = ij.first;
  r.aubin_J = ij.second;
  r.j_mu[0] = r.j_chi;
  if (phi.grid.n == 2) {
    r.j_mu[1] = detail::path_energy(phi, j_mu_density(chi, 2), nodes, &used);
    max_used = std::max(max_used, used);
  }
  r.quadrature_nodes = max_used;
  return r;
}

} // namespace tcsk
