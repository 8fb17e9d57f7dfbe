#pragma once

// Run configuration: a strict JSON document with an exhaustive key whitelist.
// Unknown or ill-typed keys fail immediately with the full key path, so a
// config either runs as written or explains exactly what is wrong with it.
// The exact key set is documented in the repository README.

#include <array>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

#include <json.hpp>

#include "errors.hpp"
#include "flows.hpp"
#include "geodesic.hpp"
#include "grid.hpp"
#include "hermitian.hpp"
#include "io.hpp"
#include "kahler.hpp"
#include "solver.hpp"

namespace tcsk {

enum class Command { continuation, j_flow, calabi, geodesic, energy, check };

inline const char* to_string(Command c) {
  switch (c) {
    case Command::continuation: return "continue";
    case Command::j_flow: return "jflow";
    case Command::calabi: return "calabi";
    case Command::geodesic: return "geodesic";
    case Command::energy: return "energy";
    case Command::check: return "check";
  }
  return "?";
}

/** Recipe for a scalar field: zero, a cosine sum, a seeded random band-limited
 *  field, or a stored TCSK record. */
struct FieldSpec {
  enum class Kind { zero, cosine, random, file } kind = Kind::zero;

  struct CosTerm {
    double amplitude = 0.0;
    int axis = 0;  // real axis index in [0, 2n)
    int mode = 1;  // integer wavenumber >= 1
  };
  std::vector<CosTerm> terms;  // cosine

  int max_mode = 2;            // random
  double amplitude = 0.1;      // random
  std::uint64_t seed = 0;      // random; falls back to the config seed
  bool seed_set = false;

  std::string path;            // file
};

/** Twist form recipe: constant Hermitian part plus an optional potential. */
struct ChiSpec {
  cmat constant;  // Hermitian positive definite, validated at parse time
  FieldSpec psi;
  bool constant_set = false;
};

struct RunConfig {
  Command command = Command::check;
  int n = 1;
  std::array<int, 4> sizes{64, 64, 0, 0};
  std::uint64_t seed = 0;
  std::string output_dir = "out";

  ChiSpec chi;
  double t = 0.5;                // calabi / energy; jflow always runs at t = 0
  std::vector<double> schedule;  // continue; empty = built-in 21-point schedule

  FieldSpec phi;       // flow start / energy input
  FieldSpec phi0;      // geodesic endpoints
  FieldSpec phi1;

  NewtonSettings solver;
  FlowSettings flow;
  GeodesicSettings geodesic;
  double geodesic_eps = 1e-2;
  int geodesic_slices = 17;

  TorusGrid grid() const { return TorusGrid(n, sizes); }
};

namespace detail {

using json = nlohmann::json;

inline void require_keys(const json& j, const std::string& path,
                         std::initializer_list<const char*> allowed) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : allowed)
      if (it.key() == k) { ok = true; break; }
    if (!ok) throw config_error(path + "." + it.key() + ": unknown key");
  }
}

inline double as_number(const json& j, const std::string& path) {
  if (!j.is_number()) throw config_error(path + ": expected a number");
  return j.get<double>();
}

inline int as_int(const json& j, const std::string& path) {
  if (!j.is_number_integer()) throw config_error(path + ": expected an integer");
  return j.get<int>();
}

inline bool as_bool(const json& j, const std::string& path) {
  if (!j.is_boolean()) throw config_error(path + ": expected a boolean");
  return j.get<bool>();
}

inline std::string as_string(const json& j, const std::string& path) {
  if (!j.is_string()) throw config_error(path + ": expected a string");
  return j.get<std::string>();
}

inline std::uint64_t as_seed(const json& j, const std::string& path) {
  if (!j.is_number_unsigned() && !j.is_number_integer())
    throw config_error(path + ": expected a non-negative integer");
  if (j.is_number_integer() && j.get<std::int64_t>() < 0)
    throw config_error(path + ": expected a non-negative integer");
  return j.get<std::uint64_t>();
}

/** Matrix entry: a plain number (real) or a [re, im] pair. */
inline cplx as_entry(const json& j, const std::string& path) {
  if (j.is_number()) return cplx(j.get<double>(), 0.0);
  if (j.is_array() && j.size() == 2 && j[0].is_number() && j[1].is_number())
    return cplx(j[0].get<double>(), j[1].get<double>());
  throw config_error(path + ": expected a number or a [re, im] pair");
}

inline FieldSpec parse_field_spec(const json& j, const std::string& path,
                                  const TorusGrid& grid) {
  if (!j.is_object()) throw config_error(path + ": expected an object");
  FieldSpec spec;
  const std::string kind = j.contains("kind")
      ? as_string(j.at("kind"), path + ".kind")
      : throw config_error(path + ".kind: required");
  if (kind == "zero") {
    require_keys(j, path, {"kind"});
    spec.kind = FieldSpec::Kind::zero;
  } else if (kind == "cosine") {
    require_keys(j, path, {"kind", "terms"});
    spec.kind = FieldSpec::Kind::cosine;
    if (!j.contains("terms") || !j.at("terms").is_array())
      throw config_error(path + ".terms: expected an array");
    int idx = 0;
    for (const auto& term : j.at("terms")) {
      const std::string tp = path + ".terms[" + std::to_string(idx++) + "]";
      if (!term.is_object()) throw config_error(tp + ": expected an object");
      require_keys(term, tp, {"amplitude", "axis", "mode"});
      if (!term.contains("amplitude")) throw config_error(tp + ".amplitude: required");
      if (!term.contains("axis")) throw config_error(tp + ".axis: required");
      FieldSpec::CosTerm ct;
      ct.amplitude = as_number(term.at("amplitude"), tp + ".amplitude");
      ct.axis = as_int(term.at("axis"), tp + ".axis");
      ct.mode = term.contains("mode") ? as_int(term.at("mode"), tp + ".mode") : 1;
      if (ct.axis < 0 || ct.axis >= grid.axes())
        throw config_error(tp + ".axis: " + std::to_string(ct.axis) +
                           " outside [0, " + std::to_string(grid.axes()) + ")");
      if (ct.mode < 1 || ct.mode >= grid.size[ct.axis] / 2)
        throw config_error(tp + ".mode: " + std::to_string(ct.mode) +
                           " must lie in [1, " +
                           std::to_string(grid.size[ct.axis] / 2) + ")");
      spec.terms.push_back(ct);
    }
  } else if (kind == "random") {
    require_keys(j, path, {"kind", "max_mode", "amplitude", "seed"});
    spec.kind = FieldSpec::Kind::random;
    if (j.contains("max_mode"))
      spec.max_mode = as_int(j.at("max_mode"), path + ".max_mode");
    if (j.contains("amplitude"))
      spec.amplitude = as_number(j.at("amplitude"), path + ".amplitude");
    if (j.contains("seed")) {
      spec.seed = as_seed(j.at("seed"), path + ".seed");
      spec.seed_set = true;
    }
    if (spec.max_mode < 1)
      throw config_error(path + ".max_mode: must be at least 1");
    for (int d = 0; d < grid.axes(); ++d)
      if (spec.max_mode >= grid.size[d] / 2)
        throw config_error(path + ".max_mode: " + std::to_string(spec.max_mode) +
                           " reaches the Nyquist mode of axis " + std::to_string(d));
    if (!(spec.amplitude > 0.0))
      throw config_error(path + ".amplitude: must be positive");
  } else if (kind == "file") {
    require_keys(j, path, {"kind", "path"});
    spec.kind = FieldSpec::Kind::file;
    if (!j.contains("path")) throw config_error(path + ".path: required");
    spec.path = as_string(j.at("path"), path + ".path");
  } else {
    throw config_error(path + ".kind: unknown kind '" + kind + "'");
  }
  return spec;
}

inline cmat parse_constant_matrix(const json& j, const std::string& path, int n) {
  if (!j.is_array() || static_cast<int>(j.size()) != n)
    throw config_error(path + ": expected " + std::to_string(n) + " rows");
  cmat m;
  m.n = n;
  for (int r = 0; r < n; ++r) {
    const json& row = j[r];
    if (!row.is_array() || static_cast<int>(row.size()) != n)
      throw config_error(path + "[" + std::to_string(r) + "]: expected " +
                         std::to_string(n) + " entries");
    for (int c = 0; c < n; ++c)
      m(r, c) = as_entry(row[c], path + "[" + std::to_string(r) + "][" +
                                     std::to_string(c) + "]");
  }
  for (int i = 0; i < n; ++i) {
    if (std::abs(m(i, i).imag()) > 1e-12)
      throw config_error(path + "[" + std::to_string(i) + "][" +
                         std::to_string(i) + "]: diagonal entry must be real");
    for (int k = i + 1; k < n; ++k)
      if (std::abs(m(i, k) - std::conj(m(k, i))) > 1e-12)
        throw config_error(path + "[" + std::to_string(i) + "][" +
                           std::to_string(k) + "]: not the conjugate of [" +
                           std::to_string(k) + "][" + std::to_string(i) + "]");
  }
  if (!(cmat_min_eigenvalue(m) > 0.0))
    throw config_error(path + ": not positive definite (min eigenvalue " +
                       std::to_string(cmat_min_eigenvalue(m)) + ")");
  return m;
}

} // namespace detail

/** Parse and validate a config document. When command_override is non-empty
 *  (the CLI subcommand), the "command" key becomes optional but must agree. */
inline RunConfig parse_config(const std::string& text,
                              const std::string& command_override = "") {
  using detail::json;
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw config_error(std::string("config: invalid JSON: ") + e.what());
  }
  if (!root.is_object()) throw config_error("config: expected a JSON object");

  detail::require_keys(root, "config",
                       {"command", "n", "sizes", "seed", "output_dir", "chi",
                        "t", "schedule", "phi", "phi0", "phi1", "solver",
                        "flow", "geodesic"});

  RunConfig cfg;

  // command
  std::string name = command_override;
  if (root.contains("command")) {
    const std::string given = detail::as_string(root.at("command"), "config.command");
    if (!command_override.empty() && given != command_override)
      throw config_error("config.command: '" + given +
                         "' does not match the subcommand '" + command_override + "'");
    name = given;
  }
  if (name.empty()) throw config_error("config.command: required");
  if (name == "continue") cfg.command = Command::continuation;
  else if (name == "jflow") cfg.command = Command::j_flow;
  else if (name == "calabi") cfg.command = Command::calabi;
  else if (name == "geodesic") cfg.command = Command::geodesic;
  else if (name == "energy") cfg.command = Command::energy;
  else if (name == "check") cfg.command = Command::check;
  else throw config_error("config.command: unknown command '" + name + "'");

  // grid
  if (root.contains("n")) {
    cfg.n = detail::as_int(root.at("n"), "config.n");
    if (cfg.n != 1 && cfg.n != 2)
      throw config_error("config.n: must be 1 or 2");
  }
  if (cfg.n == 2) cfg.sizes = {16, 16, 16, 16};
  if (root.contains("sizes")) {
    const detail::json& js = root.at("sizes");
    if (!js.is_array() || static_cast<int>(js.size()) != 2 * cfg.n)
      throw config_error("config.sizes: expected " + std::to_string(2 * cfg.n) +
                         " entries for n=" + std::to_string(cfg.n));
    for (int d = 0; d < 2 * cfg.n; ++d) {
      const int s = detail::as_int(js[d], "config.sizes[" + std::to_string(d) + "]");
      if (s < 8 || (s & (s - 1)) != 0)
        throw config_error("config.sizes[" + std::to_string(d) + "]: " +
                           std::to_string(s) + " is not a power of two >= 8");
      cfg.sizes[d] = s;
    }
  }
  const TorusGrid grid = cfg.grid();

  if (root.contains("seed")) cfg.seed = detail::as_seed(root.at("seed"), "config.seed");
  if (root.contains("output_dir"))
    cfg.output_dir = detail::as_string(root.at("output_dir"), "config.output_dir");

  // twist form
  cfg.chi.constant = cmat_identity(cfg.n);
  if (root.contains("chi")) {
    const detail::json& jc = root.at("chi");
    if (!jc.is_object()) throw config_error("config.chi: expected an object");
    detail::require_keys(jc, "config.chi", {"constant", "psi"});
    if (jc.contains("constant")) {
      cfg.chi.constant =
          detail::parse_constant_matrix(jc.at("constant"), "config.chi.constant", cfg.n);
      cfg.chi.constant_set = true;
    }
    if (jc.contains("psi"))
      cfg.chi.psi = detail::parse_field_spec(jc.at("psi"), "config.chi.psi", grid);
  }

  // path parameter / schedule
  if (root.contains("t")) {
    cfg.t = detail::as_number(root.at("t"), "config.t");
    if (!(cfg.t >= 0.0 && cfg.t <= 1.0))
      throw config_error("config.t: must lie in [0, 1]");
  }
  if (root.contains("schedule")) {
    if (cfg.command != Command::continuation)
      throw config_error("config.schedule: only the continue command takes a schedule");
    const detail::json& js = root.at("schedule");
    if (!js.is_array() || js.size() < 2)
      throw config_error("config.schedule: expected an array of at least 2 values");
    for (std::size_t i = 0; i < js.size(); ++i) {
      const double v = detail::as_number(js[i], "config.schedule[" + std::to_string(i) + "]");
      if (!(v >= 0.0 && v <= 1.0))
        throw config_error("config.schedule[" + std::to_string(i) + "]: " +
                           std::to_string(v) + " outside [0, 1]");
      if (!cfg.schedule.empty() && v <= cfg.schedule.back())
        throw config_error("config.schedule[" + std::to_string(i) +
                           "]: values must increase strictly");
      cfg.schedule.push_back(v);
    }
    if (cfg.schedule.front() != 0.0)
      throw config_error("config.schedule[0]: must be 0");
  }

  // fields
  if (root.contains("phi"))
    cfg.phi = detail::parse_field_spec(root.at("phi"), "config.phi", grid);
  if (root.contains("phi0"))
    cfg.phi0 = detail::parse_field_spec(root.at("phi0"), "config.phi0", grid);
  if (root.contains("phi1"))
    cfg.phi1 = detail::parse_field_spec(root.at("phi1"), "config.phi1", grid);

  // nested settings; numeric ranges are enforced by each settings validator
  if (root.contains("solver")) {
    const detail::json& js = root.at("solver");
    if (!js.is_object()) throw config_error("config.solver: expected an object");
    detail::require_keys(js, "config.solver",
                         {"tol_outer", "max_newton", "damping", "max_backtrack",
                          "forcing", "max_krylov", "secant_predictor"});
    if (js.contains("tol_outer"))
      cfg.solver.tol_outer = detail::as_number(js.at("tol_outer"), "config.solver.tol_outer");
    if (js.contains("max_newton"))
      cfg.solver.max_newton = detail::as_int(js.at("max_newton"), "config.solver.max_newton");
    if (js.contains("damping"))
      cfg.solver.damping = detail::as_number(js.at("damping"), "config.solver.damping");
    if (js.contains("max_backtrack"))
      cfg.solver.max_backtrack = detail::as_int(js.at("max_backtrack"), "config.solver.max_backtrack");
    if (js.contains("forcing"))
      cfg.solver.forcing = detail::as_number(js.at("forcing"), "config.solver.forcing");
    if (js.contains("max_krylov"))
      cfg.solver.max_krylov = detail::as_int(js.at("max_krylov"), "config.solver.max_krylov");
    if (js.contains("secant_predictor"))
      cfg.solver.secant_predictor =
          detail::as_bool(js.at("secant_predictor"), "config.solver.secant_predictor");
    try {
      cfg.solver.validate();
    } catch (const precondition_error& e) {
      throw config_error(std::string("config.solver: ") + e.what());
    }
  }
  if (root.contains("flow")) {
    const detail::json& js = root.at("flow");
    if (!js.is_object()) throw config_error("config.flow: expected an object");
    detail::require_keys(js, "config.flow",
                         {"dt_init", "dt_min", "dt_max", "tol", "max_steps",
                          "growth", "growth_window", "energy_nodes"});
    if (js.contains("dt_init"))
      cfg.flow.dt_init = detail::as_number(js.at("dt_init"), "config.flow.dt_init");
    if (js.contains("dt_min"))
      cfg.flow.dt_min = detail::as_number(js.at("dt_min"), "config.flow.dt_min");
    if (js.contains("dt_max"))
      cfg.flow.dt_max = detail::as_number(js.at("dt_max"), "config.flow.dt_max");
    if (js.contains("tol"))
      cfg.flow.tol = detail::as_number(js.at("tol"), "config.flow.tol");
    if (js.contains("max_steps"))
      cfg.flow.max_steps = detail::as_int(js.at("max_steps"), "config.flow.max_steps");
    if (js.contains("growth"))
      cfg.flow.growth = detail::as_number(js.at("growth"), "config.flow.growth");
    if (js.contains("growth_window"))
      cfg.flow.growth_window = detail::as_int(js.at("growth_window"), "config.flow.growth_window");
    if (js.contains("energy_nodes"))
      cfg.flow.energy_nodes = detail::as_int(js.at("energy_nodes"), "config.flow.energy_nodes");
    try {
      cfg.flow.validate();
    } catch (const precondition_error& e) {
      throw config_error(std::string("config.flow: ") + e.what());
    }
  }
  if (root.contains("geodesic")) {
    const detail::json& js = root.at("geodesic");
    if (!js.is_object()) throw config_error("config.geodesic: expected an object");
    detail::require_keys(js, "config.geodesic",
                         {"eps", "slices", "tol", "max_newton", "max_backtrack",
                          "max_krylov", "restart", "forcing"});
    if (js.contains("eps"))
      cfg.geodesic_eps = detail::as_number(js.at("eps"), "config.geodesic.eps");
    if (!(cfg.geodesic_eps > 0.0))
      throw config_error("config.geodesic.eps: must be positive");
    if (js.contains("slices"))
      cfg.geodesic_slices = detail::as_int(js.at("slices"), "config.geodesic.slices");
    if (cfg.geodesic_slices < 9 || cfg.geodesic_slices % 2 == 0)
      throw config_error("config.geodesic.slices: must be odd and at least 9");
    if (js.contains("tol"))
      cfg.geodesic.tol = detail::as_number(js.at("tol"), "config.geodesic.tol");
    if (js.contains("max_newton"))
      cfg.geodesic.max_newton = detail::as_int(js.at("max_newton"), "config.geodesic.max_newton");
    if (js.contains("max_backtrack"))
      cfg.geodesic.max_backtrack = detail::as_int(js.at("max_backtrack"), "config.geodesic.max_backtrack");
    if (js.contains("max_krylov"))
      cfg.geodesic.max_krylov = detail::as_int(js.at("max_krylov"), "config.geodesic.max_krylov");
    if (js.contains("restart"))
      cfg.geodesic.restart = detail::as_int(js.at("restart"), "config.geodesic.restart");
    if (js.contains("forcing"))
      cfg.geodesic.forcing = detail::as_number(js.at("forcing"), "config.geodesic.forcing");
    try {
      cfg.geodesic.validate();
    } catch (const precondition_error& e) {
      throw config_error(std::string("config.geodesic: ") + e.what());
    }
  }

  return cfg;
}

/** Materialize a field recipe on the configured grid. */
inline ScalarField build_field(const FieldSpec& spec, const TorusGrid& grid,
                               std::uint64_t default_seed) {
  switch (spec.kind) {
    case FieldSpec::Kind::zero:
      return ScalarField(grid);
    case FieldSpec::Kind::cosine: {
      ScalarField f(grid);
      std::vector<std::size_t> stride(grid.axes());
      // row-major, last axis fastest
      std::size_t s = 1;
      for (int d = grid.axes() - 1; d >= 0; --d) {
        stride[d] = s;
        s *= static_cast<std::size_t>(grid.size[d]);
      }
      for (std::size_t i = 0; i < f.size(); ++i) {
        double v = 0.0;
        for (const auto& term : spec.terms) {
          const std::size_t j =
              (i / stride[term.axis]) % static_cast<std::size_t>(grid.size[term.axis]);
          v += term.amplitude *
               std::cos(term.mode * grid.coord(term.axis, static_cast<int>(j)));
        }
        f[i] = v;
      }
      return f;
    }
    case FieldSpec::Kind::random:
      return random_band_limited(grid, spec.max_mode, spec.amplitude,
                                 spec.seed_set ? spec.seed : default_seed);
    case FieldSpec::Kind::file: {
      ScalarField f = read_field(spec.path);
      if (f.grid != grid)
        throw config_error("stored field " + spec.path +
                           " does not match the configured grid");
      return f;
    }
  }
  throw config_error("field spec: unreachable kind");
}

inline TwistForm build_twist(const ChiSpec& spec, const TorusGrid& grid,
                             std::uint64_t default_seed) {
  return make_twist_form(grid, spec.constant,
                         build_field(spec.psi, grid, default_seed));
}

} // namespace tcsk
