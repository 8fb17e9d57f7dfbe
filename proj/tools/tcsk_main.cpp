// Command-line front end: one subcommand per run mode, configuration through a
// JSON file. Exit codes: 0 success, 1 failed checks, 2 config error, 3 solver
// stall, 4 flow step underflow, 5 I/O failure.

#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include <tcsk/config.hpp>
#include <tcsk/run.hpp>

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw tcsk::io_error("cannot read config file " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"numerical laboratory for twisted constant-scalar-curvature "
               "metrics on flat complex tori"};
  app.require_subcommand(1);

  std::string config_path;
  std::string output_dir;
  const struct {
    const char* name;
    const char* desc;
  } subs[] = {
      {"continue", "trace the continuity path over a t-schedule"},
      {"jflow", "run the J-flow (the t = 0 gradient flow) to its critical point"},
      {"calabi", "run the twisted scalar-curvature flow at fixed t"},
      {"geodesic", "solve the eps-regularized geodesic boundary problem"},
      {"energy", "report the energies of a stored or synthesized potential"},
      {"check", "run the acceptance suite and print a pass/fail table"},
  };
  for (const auto& s : subs) {
    CLI::App* sub = app.add_subcommand(s.name, s.desc);
    sub->add_option("--config", config_path, "JSON configuration file");
    sub->add_option("--output-dir", output_dir,
                    "output directory (overrides the config; the " +
                        std::string(tcsk::output_dir_env) +
                        " environment variable overrides both)");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return tcsk::exit_code::config;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    const std::string text = config_path.empty() ? "{}" : slurp(config_path);
    tcsk::RunConfig cfg = tcsk::parse_config(text, command);
    if (!output_dir.empty()) cfg.output_dir = output_dir;
    return tcsk::run(cfg, std::cout);
  } catch (const tcsk::config_error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return tcsk::exit_code::config;
  } catch (const tcsk::io_error& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return tcsk::exit_code::io;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return tcsk::exit_code::check_failure;
  }
}
