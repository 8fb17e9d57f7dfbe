#pragma once

// Pointwise Hermitian n x n matrices (n <= 2) and Hermitian matrix fields:
// metric tensors g_{a bbar}, Ricci forms, twist forms. Closed-form inverses
// and eigenvalues only; no general linear algebra needed at these sizes.

#include <array>
#include <cmath>
#include <complex>

#include "grid.hpp"

namespace tcsk {

/** Dense complex matrix of runtime size n in {1,2}, row-major. */
struct cmat {
  int n = 1;
  std::array<cplx, 4> a{};

  cplx& operator()(int i, int j) { return a[i * n + j]; }
  cplx operator()(int i, int j) const { return a[i * n + j]; }
};

inline cmat cmat_identity(int n) {
  cmat m;
  m.n = n;
  for (int i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

inline cmat cmat_mul(const cmat& x, const cmat& y) {
  cmat z;
  z.n = x.n;
  for (int i = 0; i < x.n; ++i)
    for (int j = 0; j < x.n; ++j) {
      cplx acc = 0.0;
      for (int l = 0; l < x.n; ++l) acc += x(i, l) * y(l, j);
      z(i, j) = acc;
    }
  return z;
}

/** tr(x y) = sum_ij x_ij y_ji; real for Hermitian x, y. */
inline cplx cmat_trace_product(const cmat& x, const cmat& y) {
  cplx acc = 0.0;
  for (int i = 0; i < x.n; ++i)
    for (int j = 0; j < x.n; ++j) acc += x(i, j) * y(j, i);
  return acc;
}

inline double cmat_det(const cmat& m) {
  if (m.n == 1) return m(0, 0).real();
  return m(0, 0).real() * m(1, 1).real() - std::norm(m(0, 1));
}

inline double cmat_trace(const cmat& m) {
  double t = 0.0;
  for (int i = 0; i < m.n; ++i) t += m(i, i).real();
  return t;
}

/** Smallest eigenvalue of a Hermitian matrix, closed form. */
inline double cmat_min_eigenvalue(const cmat& m) {
  if (m.n == 1) return m(0, 0).real();
  const double half_tr = 0.5 * (m(0, 0).real() + m(1, 1).real());
  const double half_gap = 0.5 * (m(0, 0).real() - m(1, 1).real());
  return half_tr - std::sqrt(half_gap * half_gap + std::norm(m(0, 1)));
}

/** Inverse of a Hermitian matrix with positive determinant. */
inline cmat cmat_inverse(const cmat& m) {
  cmat inv;
  inv.n = m.n;
  const double det = cmat_det(m);
  if (m.n == 1) {
    inv(0, 0) = 1.0 / det;
    return inv;
  }
  inv(0, 0) = m(1, 1) / det;
  inv(1, 1) = m(0, 0) / det;
  inv(0, 1) = -m(0, 1) / det;
  inv(1, 0) = -m(1, 0) / det;
  return inv;
}

/** Hermitian matrix field: real diagonals, one complex off-diagonal (n=2). */
struct HermitianMatrixField {
  TorusGrid grid;
  ScalarField d0, d1;
  CField off;

  HermitianMatrixField() = default;
  explicit HermitianMatrixField(const TorusGrid& g) : grid(g), d0(g) {
    if (g.n == 2) {
      d1 = ScalarField(g);
      off = CField(g);
    }
  }

  cmat at(std::size_t i) const {
    cmat m;
    m.n = grid.n;
    m(0, 0) = d0[i];
    if (grid.n == 2) {
      m(1, 1) = d1[i];
      m(0, 1) = off[i];
      m(1, 0) = std::conj(off[i]);
    }
    return m;
  }

  void set(std::size_t i, const cmat& m) {
    d0[i] = m(0, 0).real();
    if (grid.n == 2) {
      d1[i] = m(1, 1).real();
      off[i] = m(0, 1);
    }
  }
};

/** Complex Hessian of a potential as a Hermitian matrix field. */
inline HermitianMatrixField hessian_field(const Spectrum& s) {
  HermitianMatrixField h(s.grid);
  {
    CField e = hessian_entry(s, 0, 0);
    for (std::size_t i = 0; i < e.size(); ++i) h.d0[i] = e[i].real();
  }
  if (s.grid.n == 2) {
    CField e = hessian_entry(s, 1, 1);
    for (std::size_t i = 0; i < e.size(); ++i) h.d1[i] = e[i].real();
    h.off = hessian_entry(s, 0, 1);
  }
  return h;
}

/** Pointwise Re tr(x_field y_field); real by Hermitian symmetry. */
inline ScalarField trace_product(const HermitianMatrixField& x,
                                 const HermitianMatrixField& y) {
  require_same_grid(x.grid, y.grid, "trace_product");
  ScalarField out(x.grid);
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = cmat_trace_product(x.at(i), y.at(i)).real();
  return out;
}

} // namespace tcsk
