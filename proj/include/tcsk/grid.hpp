#pragma once

// Spectral substrate: real scalar fields on the flat torus [0,2pi)^{2n} with
// FFT-exact differentiation, trapezoid (= spectral) quadrature, 2/3-rule
// dealiasing and seeded band-limited random fields. n complex dimensions are
// laid out as 2n real axes (x_1, y_1, ..., x_n, y_n), z_a = x_a + i y_a.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <numeric>
#include <vector>

#include <fftw3.h>

#include "errors.hpp"

namespace tcsk {

using cplx = std::complex<double>;
inline constexpr double two_pi = 6.283185307179586476925286766559;

/** Uniform periodic grid. Value type; cheap to copy and compare. */
struct TorusGrid {
  int n = 1;                     // complex dimension, 1 or 2
  std::array<int, 4> size{};     // per-real-axis sample counts, axes() entries used

  TorusGrid() = default;
  TorusGrid(int n_, std::array<int, 4> size_) : n(n_), size(size_) {
    if (n != 1 && n != 2)
      throw precondition_error("TorusGrid: n must be 1 or 2");
    for (int d = 0; d < axes(); ++d) {
      const int s = size[d];
      if (s < 8 || (s & (s - 1)) != 0)
        throw precondition_error("TorusGrid: sizes must be powers of two >= 8");
    }
  }

  int axes() const { return 2 * n; }
  std::size_t points() const {
    std::size_t p = 1;
    for (int d = 0; d < axes(); ++d) p *= static_cast<std::size_t>(size[d]);
    return p;
  }
  /** Lebesgue volume of one cell; quadrature weight of every sample. */
  double cell_volume() const {
    double v = 1.0;
    for (int d = 0; d < axes(); ++d) v *= two_pi / size[d];
    return v;
  }
  /** Total coordinate volume (2pi)^{2n}. */
  double volume() const { return cell_volume() * static_cast<double>(points()); }
  /** Coordinate of sample j on a real axis. */
  double coord(int axis, int j) const { return two_pi * j / size[axis]; }
  /** Signed integer wavenumber of FFT bin j on a real axis. */
  int wavenumber(int axis, int j) const {
    return j <= size[axis] / 2 ? j : j - size[axis];
  }

  bool operator==(const TorusGrid& o) const { return n == o.n && size == o.size; }
  bool operator!=(const TorusGrid& o) const { return !(*this == o); }
};

/** Real scalar field sampled on a TorusGrid (row-major, last axis fastest). */
struct ScalarField {
  TorusGrid grid;
  std::vector<double> v;

  ScalarField() = default;
  explicit ScalarField(const TorusGrid& g, double fill = 0.0)
      : grid(g), v(g.points(), fill) {}

  std::size_t size() const { return v.size(); }
  double& operator[](std::size_t i) { return v[i]; }
  double operator[](std::size_t i) const { return v[i]; }
};

/** Complex scalar field; carries off-diagonal Hessian entries and the like. */
struct CField {
  TorusGrid grid;
  std::vector<cplx> v;

  CField() = default;
  explicit CField(const TorusGrid& g, cplx fill = {})
      : grid(g), v(g.points(), fill) {}

  std::size_t size() const { return v.size(); }
  cplx& operator[](std::size_t i) { return v[i]; }
  cplx operator[](std::size_t i) const { return v[i]; }
};

/** Fourier coefficients of a field, unnormalized forward transform. */
struct Spectrum {
  TorusGrid grid;
  std::vector<cplx> c;
};

inline void require_same_grid(const TorusGrid& a, const TorusGrid& b,
                              const char* where) {
  if (a != b) throw grid_mismatch_error(std::string(where) + ": grid mismatch");
}

// ---------------------------------------------------------------------------
// FFT plumbing. Plans are cached per (dims, direction); FFTW_ESTIMATE keeps
// planning deterministic, FFTW_UNALIGNED lets plans run on std::vector storage.

namespace detail {

class FftPlans {
 public:
  static FftPlans& instance() {
    static FftPlans p;
    return p;
  }

  void execute(const TorusGrid& g, int sign, std::vector<cplx>& buf) {
    fftw_plan plan = nullptr;
    {
      std::lock_guard<std::mutex> lock(mu_);
      const Key key{g.n, g.size, sign};
      auto it = cache_.find(key);
      if (it == cache_.end()) {
        std::vector<cplx> scratch(g.points());
        auto* p = reinterpret_cast<fftw_complex*>(scratch.data());
        plan = fftw_plan_dft(g.axes(), dims(g).data(), p, p, sign,
                             FFTW_ESTIMATE | FFTW_UNALIGNED);
        if (!plan) throw error("fftw_plan_dft failed");
        cache_.emplace(key, plan);
      } else {
        plan = it->second;
      }
    }
    auto* b = reinterpret_cast<fftw_complex*>(buf.data());
    fftw_execute_dft(plan, b, b);
  }

 private:
  struct Key {
    int n;
    std::array<int, 4> size;
    int sign;
    bool operator<(const Key& o) const {
      return std::tie(n, size, sign) < std::tie(o.n, o.size, o.sign);
    }
  };

  static std::array<int, 4> dims(const TorusGrid& g) {
    std::array<int, 4> d{};
    for (int i = 0; i < g.axes(); ++i) d[i] = g.size[i];
    return d;
  }

  std::mutex mu_;
  std::map<Key, fftw_plan> cache_;
};

/** Visit every FFT bin with its flat index and signed wavenumber vector. */
template <typename Fn>
void for_each_mode(const TorusGrid& g, Fn&& fn) {
  const int na = g.axes();
  std::array<int, 4> idx{};
  std::array<int, 4> k{};
  for (int d = 0; d < na; ++d) k[d] = 0;
  const std::size_t total = g.points();
  for (std::size_t flat = 0; flat < total; ++flat) {
    fn(flat, k);
    for (int d = na - 1; d >= 0; --d) {
      if (++idx[d] < g.size[d]) {
        k[d] = g.wavenumber(d, idx[d]);
        break;
      }
      idx[d] = 0;
      k[d] = 0;
    }
  }
}

inline bool at_nyquist(const TorusGrid& g, const std::array<int, 4>& k, int axis) {
  return k[axis] == g.size[axis] / 2;
}

} // namespace detail

/** Unnormalized forward transform of a real field. */
inline Spectrum spectrum(const ScalarField& f) {
  Spectrum s{f.grid, std::vector<cplx>(f.v.begin(), f.v.end())};
  detail::FftPlans::instance().execute(f.grid, FFTW_FORWARD, s.c);
  return s;
}

/** Inverse transform (normalized), complex result. */
inline CField inverse_c(Spectrum s) {
  detail::FftPlans::instance().execute(s.grid, FFTW_BACKWARD, s.c);
  const double scale = 1.0 / static_cast<double>(s.grid.points());
  CField out(s.grid);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = s.c[i] * scale;
  return out;
}

/** Inverse transform (normalized), real part only. */
inline ScalarField inverse_r(Spectrum s) {
  detail::FftPlans::instance().execute(s.grid, FFTW_BACKWARD, s.c);
  const double scale = 1.0 / static_cast<double>(s.grid.points());
  ScalarField out(s.grid);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = s.c[i].real() * scale;
  return out;
}

/** Multiply a spectrum in place by symbol(k). */
template <typename Fn>
Spectrum apply_symbol(Spectrum s, Fn&& symbol) {
  detail::for_each_mode(s.grid, [&](std::size_t flat, const std::array<int, 4>& k) {
    s.c[flat] *= symbol(k);
  });
  return s;
}

// ---------------------------------------------------------------------------
// Differentiation

/** d^order f / d x_axis^order of the band-limited interpolant (exact).
 *  The Nyquist bin is zeroed for odd orders (no consistent real derivative). */
inline ScalarField partial(const ScalarField& f, int axis, int order) {
  if (axis < 0 || axis >= f.grid.axes())
    throw precondition_error("partial: axis out of range");
  if (order < 1 || order > 4) throw precondition_error("partial: order in 1..4");
  Spectrum s = spectrum(f);
  const bool odd = (order % 2) != 0;
  detail::for_each_mode(f.grid, [&](std::size_t flat, const std::array<int, 4>& k) {
    if (odd && detail::at_nyquist(f.grid, k, axis)) {
      s.c[flat] = 0.0;
      return;
    }
    cplx m = 1.0;
    const cplx ik(0.0, static_cast<double>(k[axis]));
    for (int p = 0; p < order; ++p) m *= ik;
    s.c[flat] *= m;
  });
  return inverse_r(std::move(s));
}

namespace detail {

/** Symbol of d/dz_a: (1/2)(d/dx - i d/dy) acting on e^{i k.x}. */
inline cplx dz_symbol(const TorusGrid& g, const std::array<int, 4>& k, int a) {
  if (at_nyquist(g, k, 2 * a) || at_nyquist(g, k, 2 * a + 1)) return 0.0;
  return 0.5 * cplx(static_cast<double>(k[2 * a + 1]), static_cast<double>(k[2 * a]));
}

/** Symbol of d/dzbar_a: (1/2)(d/dx + i d/dy). */
inline cplx dzbar_symbol(const TorusGrid& g, const std::array<int, 4>& k, int a) {
  if (at_nyquist(g, k, 2 * a) || at_nyquist(g, k, 2 * a + 1)) return 0.0;
  return 0.5 * cplx(-static_cast<double>(k[2 * a + 1]), static_cast<double>(k[2 * a]));
}

/** Hessian entry symbol for d/dz_a d/dzbar_b. Diagonal entries are the pure
 *  even multiplier -(kx^2+ky^2)/4 and keep their Nyquist content. */
inline cplx hessian_symbol(const TorusGrid& g, const std::array<int, 4>& k, int a, int b) {
  if (a == b) {
    const double kx = k[2 * a], ky = k[2 * a + 1];
    return -0.25 * (kx * kx + ky * ky);
  }
  return dz_symbol(g, k, a) * dzbar_symbol(g, k, b);
}

} // namespace detail

/** Mixed complex second derivative f_{,a bbar} from a precomputed spectrum. */
inline CField hessian_entry(const Spectrum& s, int a, int b) {
  const TorusGrid& g = s.grid;
  if (a < 0 || a >= g.n || b < 0 || b >= g.n)
    throw precondition_error("hessian_entry: index out of range");
  Spectrum t = s;
  detail::for_each_mode(g, [&](std::size_t flat, const std::array<int, 4>& k) {
    t.c[flat] *= detail::hessian_symbol(g, k, a, b);
  });
  return inverse_c(std::move(t));
}

/** f_{,a bbar} = d/dz_a d/dzbar_b f. Hermitian: entry(b,a) == conj(entry(a,b)). */
inline CField complex_second(const ScalarField& f, int a, int b) {
  return hessian_entry(spectrum(f), a, b);
}

/** Holomorphic second derivative d/dz_a d/dz_b from a precomputed spectrum. */
inline CField zz_entry(const Spectrum& s, int a, int b) {
  Spectrum t = s;
  detail::for_each_mode(s.grid, [&](std::size_t flat, const std::array<int, 4>& k) {
    t.c[flat] *= detail::dz_symbol(s.grid, k, a) * detail::dz_symbol(s.grid, k, b);
  });
  return inverse_c(std::move(t));
}

/** Third derivative d/dz_a d/dz_b d/dzbar_c from a precomputed spectrum. */
inline CField third_entry(const Spectrum& s, int a, int b, int c) {
  const TorusGrid& g = s.grid;
  Spectrum t = s;
  detail::for_each_mode(g, [&](std::size_t flat, const std::array<int, 4>& k) {
    t.c[flat] *= detail::dz_symbol(g, k, a) * detail::dz_symbol(g, k, b) *
                 detail::dzbar_symbol(g, k, c);
  });
  return inverse_c(std::move(t));
}

/** First complex derivative d/dz_a. */
inline CField dz(const Spectrum& s, int a) {
  Spectrum t = s;
  detail::for_each_mode(s.grid, [&](std::size_t flat, const std::array<int, 4>& k) {
    t.c[flat] *= detail::dz_symbol(s.grid, k, a);
  });
  return inverse_c(std::move(t));
}

// ---------------------------------------------------------------------------
// Quadrature and projections

/** Trapezoid quadrature of f * weight; spectrally accurate on smooth fields. */
inline double integrate(const ScalarField& f, const ScalarField& weight) {
  require_same_grid(f.grid, weight.grid, "integrate");
  double acc = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) acc += f[i] * weight[i];
  return acc * f.grid.cell_volume();
}

inline double integrate(const ScalarField& f) {
  double acc = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) acc += f[i];
  return acc * f.grid.cell_volume();
}

/** Weighted mean of f. */
inline double mean(const ScalarField& f, const ScalarField& weight) {
  return integrate(f, weight) / integrate(weight);
}

inline double mean(const ScalarField& f) {
  return integrate(f) / f.grid.volume();
}

/** Subtract the weighted mean; fixed point on already-mean-zero fields. */
inline ScalarField project_mean_zero(const ScalarField& f, const ScalarField& weight) {
  const double m = mean(f, weight);
  ScalarField out = f;
  for (auto& x : out.v) x -= m;
  return out;
}

inline ScalarField project_mean_zero(const ScalarField& f) {
  const double m = mean(f);
  ScalarField out = f;
  for (auto& x : out.v) x -= m;
  return out;
}

// ---------------------------------------------------------------------------
// Dealiasing

/** 2/3-rule: zero every bin with |k_d| > size_d/3 on any axis. Idempotent. */
inline ScalarField dealias(const ScalarField& f) {
  Spectrum s = spectrum(f);
  const TorusGrid& g = f.grid;
  std::array<int, 4> cut{};
  for (int d = 0; d < g.axes(); ++d) cut[d] = g.size[d] / 3;
  detail::for_each_mode(g, [&](std::size_t flat, const std::array<int, 4>& k) {
    for (int d = 0; d < g.axes(); ++d) {
      if (std::abs(k[d]) > cut[d]) {
        s.c[flat] = 0.0;
        return;
      }
    }
  });
  return inverse_r(std::move(s));
}

// ---------------------------------------------------------------------------
// Norms and small helpers

inline double sup_norm(const ScalarField& f) {
  double m = 0.0;
  for (double x : f.v) m = std::max(m, std::abs(x));
  return m;
}

inline double sup_norm(const CField& f) {
  double m = 0.0;
  for (const cplx& x : f.v) m = std::max(m, std::abs(x));
  return m;
}

inline ScalarField operator+(const ScalarField& a, const ScalarField& b) {
  require_same_grid(a.grid, b.grid, "operator+");
  ScalarField out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
  return out;
}

inline ScalarField operator-(const ScalarField& a, const ScalarField& b) {
  require_same_grid(a.grid, b.grid, "operator-");
  ScalarField out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b[i];
  return out;
}

inline ScalarField operator*(double s, const ScalarField& a) {
  ScalarField out = a;
  for (auto& x : out.v) x *= s;
  return out;
}

inline ScalarField operator*(const ScalarField& a, const ScalarField& b) {
  require_same_grid(a.grid, b.grid, "operator*");
  ScalarField out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b[i];
  return out;
}

inline void axpy(double s, const ScalarField& x, ScalarField& y) {
  require_same_grid(x.grid, y.grid, "axpy");
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += s * x[i];
}

inline double dot(const ScalarField& a, const ScalarField& b) {
  require_same_grid(a.grid, b.grid, "dot");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

/** Evaluate fn at every sample's coordinates. fn takes (x1,y1[,x2,y2]). */
template <typename Fn>
ScalarField sample(const TorusGrid& g, Fn&& fn) {
  ScalarField out(g);
  std::array<int, 4> idx{};
  const int na = g.axes();
  for (std::size_t flat = 0; flat < out.size(); ++flat) {
    std::array<double, 4> x{};
    for (int d = 0; d < na; ++d) x[d] = g.coord(d, idx[d]);
    out[flat] = fn(x);
    for (int d = na - 1; d >= 0; --d) {
      if (++idx[d] < g.size[d]) break;
      idx[d] = 0;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Seeded band-limited random fields

/** Deterministic mean-zero field with |k_d| <= max_mode on every axis and
 *  sup-norm equal to amplitude. Same (grid, max_mode, amplitude, seed) gives
 *  bit-identical samples; different seeds give distinct fields. */
inline ScalarField random_band_limited(const TorusGrid& g, int max_mode,
                                       double amplitude, std::uint64_t seed) {
  if (max_mode < 1) throw precondition_error("random_band_limited: max_mode >= 1");
  for (int d = 0; d < g.axes(); ++d)
    if (max_mode >= g.size[d] / 2)
      throw precondition_error("random_band_limited: max_mode must sit below Nyquist");
  if (!(amplitude > 0.0))
    throw precondition_error("random_band_limited: amplitude must be positive");

  // splitmix64 stream: portable, reproducible across standard libraries.
  std::uint64_t state = seed + 0x9e3779b97f4a7c15ULL;
  auto next_u64 = [&state]() {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  auto next_unit = [&]() {
    return 2.0 * (static_cast<double>(next_u64() >> 11) * 0x1.0p-53) - 1.0;
  };

  const int na = g.axes();
  Spectrum s{g, std::vector<cplx>(g.points(), cplx(0.0))};

  // One coefficient pair per +/- mode pair, representative = first nonzero > 0.
  std::array<int, 4> k{};
  for (int d = 0; d < na; ++d) k[d] = -max_mode;
  const auto index_of = [&](const std::array<int, 4>& kk) {
    std::size_t flat = 0;
    for (int d = 0; d < na; ++d) {
      const int j = kk[d] >= 0 ? kk[d] : kk[d] + g.size[d];
      flat = flat * g.size[d] + static_cast<std::size_t>(j);
    }
    return flat;
  };
  while (true) {
    int first_nonzero = 0;
    for (int d = 0; d < na; ++d) {
      if (k[d] != 0) {
        first_nonzero = k[d];
        break;
      }
    }
    if (first_nonzero > 0) {
      const double a = next_unit();
      const double b = next_unit();
      std::array<int, 4> mk{};
      for (int d = 0; d < na; ++d) mk[d] = -k[d];
      const double half_n = 0.5 * static_cast<double>(g.points());
      s.c[index_of(k)] = cplx(a, -b) * half_n;
      s.c[index_of(mk)] = cplx(a, b) * half_n;
    }
    int d = na - 1;
    for (; d >= 0; --d) {
      if (++k[d] <= max_mode) break;
      k[d] = -max_mode;
    }
    if (d < 0) break;
  }

  ScalarField f = inverse_r(std::move(s));
  const double sup = sup_norm(f);
  if (sup > 0.0) {
    const double scale = amplitude / sup;
    for (auto& x : f.v) x *= scale;
  }
  return f;
}

} // namespace tcsk
