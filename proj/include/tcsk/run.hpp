#pragma once

// Run orchestration: dispatch a validated config, write the artifacts (run-log
// CSV, terminal TCSK fields, summary JSON), and map failure classes to exit
// codes. Identical config + seed reproduces every artifact byte for byte; the
// only non-reproducible value is the wall_time_seconds entry, which is always
// the last key of a summary.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "checks.hpp"
#include "config.hpp"
#include "errors.hpp"
#include "flows.hpp"
#include "functionals.hpp"
#include "geodesic.hpp"
#include "io.hpp"
#include "solver.hpp"

namespace tcsk {

namespace exit_code {
inline constexpr int success = 0;
inline constexpr int check_failure = 1;
inline constexpr int config = 2;
inline constexpr int solver_stall = 3;
inline constexpr int flow_underflow = 4;
inline constexpr int io = 5;
} // namespace exit_code

/** When set, overrides the configured output directory. */
inline constexpr const char* output_dir_env = "TCSK_OUTPUT_DIR";

namespace detail {

using ojson = nlohmann::ordered_json;

inline std::filesystem::path resolve_output_dir(const RunConfig& cfg) {
  if (const char* env = std::getenv(output_dir_env); env && *env)
    return std::filesystem::path(env);
  return std::filesystem::path(cfg.output_dir);
}

inline ojson grid_json(const RunConfig& cfg) {
  ojson g;
  g["n"] = cfg.n;
  g["sizes"] = std::vector<int>(cfg.sizes.begin(), cfg.sizes.begin() + 2 * cfg.n);
  return g;
}

inline void write_json(const std::filesystem::path& path, const ojson& j) {
  write_text_atomic(path, j.dump(2) + "\n");
}

struct Stopwatch {
  std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
        .count();
  }
};

inline int run_continue(const RunConfig& cfg, const std::filesystem::path& out,
                        std::ostream& log, const Stopwatch& watch) {
  const TorusGrid g = cfg.grid();
  const TwistForm chi = build_twist(cfg.chi, g, cfg.seed);
  const std::vector<double> schedule =
      cfg.schedule.empty() ? default_schedule() : cfg.schedule;
  const ContinuationRun run = continue_path(chi, schedule, cfg.solver);

  TrajectoryLog tl;
  for (std::size_t i = 0; i < run.steps.size(); ++i) {
    const ContinuationStep& s = run.steps[i];
    const double j = j_chi(s.phi, chi);
    const double k = k_energy(s.phi);
    tl.add(static_cast<long>(i), s.t, s.residual_sup, j, k,
           (1.0 - s.t) * j + s.t * k, s.step_halvings);
  }
  tl.write(out / "continue_log.csv");

  ojson summary;
  summary["command"] = "continue";
  summary["status"] = run.completed ? "completed" : "stalled";
  if (!run.failure_reason.empty()) summary["failure_reason"] = run.failure_reason;
  summary["grid"] = grid_json(cfg);
  summary["seed"] = cfg.seed;
  summary["schedule_points"] = schedule.size();
  summary["steps_accepted"] = run.steps.size();
  summary["empirical_r_chi"] = run.last_accepted_t;
  if (!run.steps.empty()) {
    const ContinuationStep& last = run.steps.back();
    write_field(out / "phi_final.tcsk", last.phi);
    ojson terminal;
    terminal["t"] = last.t;
    terminal["residual_sup"] = last.residual_sup;
    terminal["phi_sup"] = sup_norm(last.phi);
    terminal["newton_iterations"] = last.newton_iterations;
    summary["terminal"] = terminal;
    summary["artifacts"] = {{"log", "continue_log.csv"},
                            {"phi_final", "phi_final.tcsk"}};
  } else {
    summary["artifacts"] = {{"log", "continue_log.csv"}};
  }
  summary["tolerances"] = {{"tol_outer", cfg.solver.tol_outer},
                           {"forcing", cfg.solver.forcing},
                           {"max_newton", cfg.solver.max_newton},
                           {"max_krylov", cfg.solver.max_krylov}};
  summary["wall_time_seconds"] = watch.seconds();
  write_json(out / "summary.json", summary);

  log << "continue: " << (run.completed ? "completed" : "stalled")
      << ", reached t = " << run.last_accepted_t << " in " << run.steps.size()
      << " steps\n";
  if (!run.completed) log << "  " << run.failure_reason << "\n";
  return run.completed ? exit_code::success : exit_code::solver_stall;
}

inline int run_flow_command(const RunConfig& cfg, const std::filesystem::path& out,
                            std::ostream& log, const Stopwatch& watch) {
  const TorusGrid g = cfg.grid();
  const TwistForm chi = build_twist(cfg.chi, g, cfg.seed);
  const ScalarField start = build_field(cfg.phi, g, cfg.seed);
  const FlowKind kind = cfg.command == Command::j_flow ? FlowKind::j_flow
                                                       : FlowKind::twisted_calabi;
  const double t = kind == FlowKind::j_flow ? 0.0 : cfg.t;
  const FlowRun run = run_flow(start, kind, chi, t, cfg.flow);

  TrajectoryLog tl;
  for (std::size_t i = 0; i < run.samples.size(); ++i) {
    const FlowSample& s = run.samples[i];
    tl.add(static_cast<long>(i), s.time, s.residual_sup, s.j_chi, s.k_energy,
           s.twisted, s.dt);
  }
  const std::string stem = cfg.command == Command::j_flow ? "jflow" : "calabi";
  tl.write(out / (stem + "_log.csv"));
  write_field(out / "phi_final.tcsk", run.phi);

  ojson summary;
  summary["command"] = stem;
  summary["status"] = to_string(run.stop);
  summary["grid"] = grid_json(cfg);
  summary["seed"] = cfg.seed;
  summary["t"] = run.t;
  summary["steps_accepted"] = run.samples.size() - 1;
  summary["time_reached"] = run.samples.back().time;
  summary["terminal"] = {{"residual_sup", run.samples.back().residual_sup},
                         {"j_chi", run.samples.back().j_chi},
                         {"k_energy", run.samples.back().k_energy},
                         {"twisted", run.samples.back().twisted}};
  summary["tolerances"] = {{"tol", cfg.flow.tol},
                           {"dt_init", cfg.flow.dt_init},
                           {"dt_min", cfg.flow.dt_min},
                           {"dt_max", cfg.flow.dt_max},
                           {"max_steps", cfg.flow.max_steps}};
  summary["artifacts"] = {{"log", stem + "_log.csv"},
                          {"phi_final", "phi_final.tcsk"}};
  summary["wall_time_seconds"] = watch.seconds();
  write_json(out / "summary.json", summary);

  log << stem << ": " << to_string(run.stop) << " after "
      << run.samples.size() - 1 << " steps, residual "
      << run.samples.back().residual_sup << "\n";
  switch (run.stop) {
    case FlowStop::converged: return exit_code::success;
    case FlowStop::step_underflow: return exit_code::flow_underflow;
    case FlowStop::max_steps: return exit_code::solver_stall;
  }
  return exit_code::solver_stall;
}

inline int run_geodesic_command(const RunConfig& cfg,
                                const std::filesystem::path& out,
                                std::ostream& log, const Stopwatch& watch) {
  const TorusGrid g = cfg.grid();
  const TwistForm chi = build_twist(cfg.chi, g, cfg.seed);
  const ScalarField a = build_field(cfg.phi0, g, cfg.seed);
  const ScalarField b = build_field(cfg.phi1, g, cfg.seed);
  const GeodesicPath path =
      solve_geodesic(a, b, cfg.geodesic_eps, cfg.geodesic_slices, cfg.geodesic);

  std::vector<std::string> files;
  for (std::size_t i = 0; i < path.slices.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "slice_%03zu.tcsk", i);
    write_field(out / name, path.slices[i]);
    files.emplace_back(name);
  }

  TrajectoryLog tl;
  for (std::size_t i = 0; i < path.slices.size(); ++i) {
    const double tau = double(i) * path.dtau();
    const double j = j_chi(path.slices[i], chi, 64);
    const double k = k_energy(path.slices[i], 64);
    tl.add(static_cast<long>(i), tau, path.residual_sup, j, k,
           (1.0 - cfg.t) * j + cfg.t * k, path.dtau());
  }
  tl.write(out / "geodesic_log.csv");

  ojson manifest;
  manifest["eps"] = path.eps;
  manifest["slices"] = path.slices.size();
  manifest["residual_sup"] = path.residual_sup;
  manifest["newton_iterations"] = path.newton_iterations;
  manifest["files"] = files;
  write_json(out / "manifest.json", manifest);

  ojson summary;
  summary["command"] = "geodesic";
  summary["status"] = "converged";
  summary["grid"] = grid_json(cfg);
  summary["seed"] = cfg.seed;
  summary["eps"] = path.eps;
  summary["slices"] = path.slices.size();
  summary["residual_sup"] = path.residual_sup;
  summary["newton_iterations"] = path.newton_iterations;
  summary["tolerances"] = {{"tol", cfg.geodesic.tol},
                           {"forcing", cfg.geodesic.forcing}};
  summary["artifacts"] = {{"log", "geodesic_log.csv"},
                          {"manifest", "manifest.json"}};
  summary["wall_time_seconds"] = watch.seconds();
  write_json(out / "summary.json", summary);

  log << "geodesic: residual " << path.residual_sup << " after "
      << path.newton_iterations << " Newton iterations\n";
  return exit_code::success;
}

inline int run_energy_command(const RunConfig& cfg,
                              const std::filesystem::path& out, std::ostream& log,
                              const Stopwatch& watch) {
  const TorusGrid g = cfg.grid();
  const TwistForm chi = build_twist(cfg.chi, g, cfg.seed);
  const ScalarField phi = build_field(cfg.phi, g, cfg.seed);
  const EnergyReport er = energy_report(phi, chi, cfg.t);

  ojson summary;
  summary["command"] = "energy";
  summary["status"] = "completed";
  summary["grid"] = grid_json(cfg);
  summary["seed"] = cfg.seed;
  summary["t"] = er.t;
  summary["j_chi"] = er.j_chi;
  summary["k_energy"] = er.k_energy;
  summary["entropy"] = er.entropy;
  summary["twisted"] = er.twisted;
  summary["aubin_i"] = er.aubin_I;
  summary["aubin_j"] = er.aubin_J;
  summary["j_mu"] = std::vector<double>(er.j_mu.begin(), er.j_mu.begin() + cfg.n);
  summary["quadrature_nodes"] = er.quadrature_nodes;
  summary["wall_time_seconds"] = watch.seconds();
  write_json(out / "energy.json", summary);

  log << summary.dump(2) << "\n";
  return exit_code::success;
}

inline int run_check_command(const RunConfig&, const std::filesystem::path& out,
                             std::ostream& log, const Stopwatch& watch) {
  const std::vector<CheckResult> results = run_acceptance_checks(&log);
  bool all = true;
  ojson list = ojson::array();
  for (const CheckResult& r : results) {
    all = all && r.passed;
    ojson e;
    e["id"] = r.id;
    e["name"] = r.name;
    e["passed"] = r.passed;
    e["seconds"] = r.seconds;
    e["detail"] = r.detail;
    list.push_back(e);
  }
  ojson summary;
  summary["command"] = "check";
  summary["status"] = all ? "all passed" : "failed";
  summary["checks"] = list;
  summary["wall_time_seconds"] = watch.seconds();
  write_json(out / "check_results.json", summary);

  log << (all ? "all checks passed" : "CHECKS FAILED") << "\n";
  return all ? exit_code::success : exit_code::check_failure;
}

} // namespace detail

/** Execute a validated config; returns the process exit code. */
inline int run(const RunConfig& cfg, std::ostream& log = std::cout) {
  const detail::Stopwatch watch;
  try {
    const std::filesystem::path out = detail::resolve_output_dir(cfg);
    std::error_code ec;
    std::filesystem::create_directories(out, ec);
    if (ec)
      throw io_error("cannot create output directory " + out.string() + ": " +
                     ec.message());
    switch (cfg.command) {
      case Command::continuation:
        return detail::run_continue(cfg, out, log, watch);
      case Command::j_flow:
      case Command::calabi:
        return detail::run_flow_command(cfg, out, log, watch);
      case Command::geodesic:
        return detail::run_geodesic_command(cfg, out, log, watch);
      case Command::energy:
        return detail::run_energy_command(cfg, out, log, watch);
      case Command::check:
        return detail::run_check_command(cfg, out, log, watch);
    }
    return exit_code::config;
  } catch (const config_error& e) {
    log << "config error: " << e.what() << "\n";
    return exit_code::config;
  } catch (const io_error& e) {
    log << "io error: " << e.what() << "\n";
    return exit_code::io;
  } catch (const krylov_error& e) {
    log << "solver stall: " << e.what() << "\n";
    return exit_code::solver_stall;
  } catch (const max_iterations_error& e) {
    log << "solver stall: " << e.what() << "\n";
    return exit_code::solver_stall;
  } catch (const invalid_metric_error& e) {
    log << "solver stall: " << e.what() << "\n";
    return exit_code::solver_stall;
  } catch (const grid_mismatch_error& e) {
    log << "config error: " << e.what() << "\n";
    return exit_code::config;
  } catch (const precondition_error& e) {
    log << "config error: " << e.what() << "\n";
    return exit_code::config;
  } catch (const error& e) {
    log << "error: " << e.what() << "\n";
    return exit_code::check_failure;
  }
}

} // namespace tcsk
