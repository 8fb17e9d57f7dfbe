#include <catch2/catch_amalgamated.hpp>

#include <bit>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "tcsk/config.hpp"
#include "tcsk/io.hpp"
#include "tcsk/run.hpp"

using namespace tcsk;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& tag) {
  const fs::path p = fs::temp_directory_path() / ("tcsk_io_" + tag);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  return std::string((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
}

/** Summary with the wall-time entry removed; everything else must reproduce. */
std::string normalized_summary(const fs::path& p) {
  nlohmann::ordered_json j = nlohmann::ordered_json::parse(slurp(p));
  REQUIRE(j.contains("wall_time_seconds"));
  j.erase("wall_time_seconds");
  return j.dump(2);
}

long csv_data_rows(const fs::path& p) {
  const std::string text = slurp(p);
  long rows = -1; // uncounted header
  for (char ch : text)
    if (ch == '\n') ++rows;
  return rows;
}

} // namespace

TEST_CASE("field records round trip bit-exactly", "[io]") {
  const fs::path dir = fresh_dir("roundtrip");

  const TorusGrid g1(1, {64, 64});
  ScalarField f = random_band_limited(g1, 5, 0.7, 42);
  f[0] = -0.0;          // sign of zero must survive
  f[1] = 1e-308;        // subnormal neighborhood
  write_field(dir / "a.tcsk", f);
  const ScalarField back = read_field(dir / "a.tcsk");
  REQUIRE(back.grid == g1);
  for (std::size_t i = 0; i < f.size(); ++i)
    REQUIRE(std::bit_cast<std::uint64_t>(back[i]) ==
            std::bit_cast<std::uint64_t>(f[i]));

  const TorusGrid g2(2, {16, 8, 16, 8});
  const ScalarField f2 = random_band_limited(g2, 2, 0.3, 43);
  write_field(dir / "b.tcsk", f2);
  const ScalarField back2 = read_field(dir / "b.tcsk");
  REQUIRE(back2.grid == g2);
  for (std::size_t i = 0; i < f2.size(); ++i)
    REQUIRE(std::bit_cast<std::uint64_t>(back2[i]) ==
            std::bit_cast<std::uint64_t>(f2[i]));

  // no stray temp files after atomic writes
  for (const auto& e : fs::directory_iterator(dir))
    REQUIRE(e.path().extension() == ".tcsk");
}

TEST_CASE("malformed field records are rejected", "[io]") {
  const fs::path dir = fresh_dir("malformed");
  const TorusGrid g(1, {16, 16});
  write_field(dir / "f.tcsk", random_band_limited(g, 3, 0.5, 7));

  auto patched = [&](std::size_t offset, char value, const char* name) {
    std::string bytes = slurp(dir / "f.tcsk");
    bytes[offset] = value;
    const fs::path p = dir / name;
    std::ofstream(p, std::ios::binary).write(bytes.data(), bytes.size());
    return p;
  };

  SECTION("wrong magic") {
    REQUIRE_THROWS_AS(read_field(patched(0, 'X', "magic.tcsk")), io_error);
  }
  SECTION("unsupported version") {
    REQUIRE_THROWS_MATCHES(read_field(patched(4, 2, "v2.tcsk")), io_error,
                           Catch::Matchers::MessageMatches(
                               Catch::Matchers::ContainsSubstring("version 2")));
  }
  SECTION("truncated payload") {
    const auto size = fs::file_size(dir / "f.tcsk");
    fs::copy_file(dir / "f.tcsk", dir / "trunc.tcsk");
    fs::resize_file(dir / "trunc.tcsk", size - 8);
    REQUIRE_THROWS_MATCHES(read_field(dir / "trunc.tcsk"), io_error,
                           Catch::Matchers::MessageMatches(
                               Catch::Matchers::ContainsSubstring("size mismatch")));
  }
  SECTION("trailing garbage") {
    std::string bytes = slurp(dir / "f.tcsk") + "extra";
    std::ofstream(dir / "long.tcsk", std::ios::binary)
        .write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    REQUIRE_THROWS_AS(read_field(dir / "long.tcsk"), io_error);
  }
  SECTION("invalid axis size") {
    REQUIRE_THROWS_AS(read_field(patched(12, 17, "axis.tcsk")), io_error);
  }
  SECTION("missing file") {
    REQUIRE_THROWS_AS(read_field(dir / "absent.tcsk"), io_error);
  }
}

TEST_CASE("config documents are validated strictly with key paths", "[io]") {
  SECTION("minimal check config fills defaults") {
    const RunConfig cfg = parse_config(R"({"command":"check"})");
    REQUIRE(cfg.command == Command::check);
    REQUIRE(cfg.n == 1);
    REQUIRE(cfg.sizes[0] == 64);
    REQUIRE(cfg.sizes[1] == 64);
    REQUIRE(cfg.seed == 0);
    REQUIRE(cfg.chi.constant.n == 1);
    REQUIRE(cfg.chi.constant(0, 0) == cplx(1.0, 0.0));
  }
  SECTION("subcommand override supplies the command") {
    REQUIRE(parse_config("{}", "jflow").command == Command::j_flow);
    REQUIRE_THROWS_AS(parse_config("{}"), config_error);
    REQUIRE_THROWS_MATCHES(
        parse_config(R"({"command":"energy"})", "jflow"), config_error,
        Catch::Matchers::MessageMatches(
            Catch::Matchers::ContainsSubstring("does not match")));
  }
  SECTION("unknown keys carry their path") {
    REQUIRE_THROWS_MATCHES(
        parse_config(R"({"command":"check","solver":{"maxNewton":3}})"),
        config_error,
        Catch::Matchers::MessageMatches(
            Catch::Matchers::ContainsSubstring("config.solver.maxNewton")));
    REQUIRE_THROWS_MATCHES(parse_config(R"({"command":"check","colour":1})"),
                           config_error,
                           Catch::Matchers::MessageMatches(
                               Catch::Matchers::ContainsSubstring("config.colour")));
  }
  SECTION("non-Hermitian twist names the offending entry") {
    const std::string text = R"({"command":"check","n":2,
      "chi":{"constant":[[1.0,[0.2,0.1]],[[0.2,0.3],1.0]]}})";
    REQUIRE_THROWS_MATCHES(
        parse_config(text), config_error,
        Catch::Matchers::MessageMatches(Catch::Matchers::ContainsSubstring(
            "config.chi.constant[0][1]")));
  }
  SECTION("diagonal entries must be real") {
    REQUIRE_THROWS_MATCHES(
        parse_config(R"({"command":"check","chi":{"constant":[[[1.0,0.5]]]}})"),
        config_error,
        Catch::Matchers::MessageMatches(
            Catch::Matchers::ContainsSubstring("diagonal entry must be real")));
  }
  SECTION("indefinite twist is rejected") {
    REQUIRE_THROWS_MATCHES(
        parse_config(R"({"command":"check","chi":{"constant":[[-1.0]]}})"),
        config_error,
        Catch::Matchers::MessageMatches(
            Catch::Matchers::ContainsSubstring("not positive definite")));
  }
  SECTION("schedule range and monotonicity") {
    REQUIRE_THROWS_MATCHES(
        parse_config(R"({"command":"continue","schedule":[0,0.5,1.2]})"),
        config_error,
        Catch::Matchers::MessageMatches(
            Catch::Matchers::ContainsSubstring("config.schedule[2]")));
    REQUIRE_THROWS_AS(
        parse_config(R"({"command":"continue","schedule":[0,0.4,0.4]})"),
        config_error);
    REQUIRE_THROWS_MATCHES(
        parse_config(R"({"command":"jflow","schedule":[0,1]})"), config_error,
        Catch::Matchers::MessageMatches(
            Catch::Matchers::ContainsSubstring("only the continue command")));
  }
  SECTION("grid validation") {
    REQUIRE_THROWS_MATCHES(
        parse_config(R"({"command":"check","sizes":[48,64]})"), config_error,
        Catch::Matchers::MessageMatches(
            Catch::Matchers::ContainsSubstring("config.sizes[0]")));
    REQUIRE_THROWS_AS(parse_config(R"({"command":"check","n":3})"), config_error);
    REQUIRE_THROWS_AS(parse_config(R"({"command":"check","sizes":[64]})"),
                      config_error);
  }
  SECTION("field spec validation") {
    REQUIRE_THROWS_MATCHES(
        parse_config(
            R"({"command":"jflow","phi":{"kind":"cosine","terms":[{"amplitude":1,"axis":5}]}})"),
        config_error,
        Catch::Matchers::MessageMatches(
            Catch::Matchers::ContainsSubstring("config.phi.terms[0].axis")));
    REQUIRE_THROWS_AS(
        parse_config(
            R"({"command":"jflow","phi":{"kind":"cosine","terms":[{"amplitude":1,"axis":0,"mode":32}]}})"),
        config_error);
    REQUIRE_THROWS_AS(parse_config(R"({"command":"jflow","phi":{"kind":"fog"}})"),
                      config_error);
    REQUIRE_THROWS_AS(parse_config(R"({"command":"jflow","phi":{}})"),
                      config_error);
  }
  SECTION("invalid JSON and bad types") {
    REQUIRE_THROWS_AS(parse_config("not json"), config_error);
    REQUIRE_THROWS_AS(parse_config(R"({"command":"check","t":"half"})"),
                      config_error);
    REQUIRE_THROWS_AS(parse_config(R"({"command":"check","t":1.5})"),
                      config_error);
    REQUIRE_THROWS_AS(parse_config(R"({"command":"check","seed":-4})"),
                      config_error);
  }
  SECTION("settings ranges are reported under their section") {
    REQUIRE_THROWS_MATCHES(
        parse_config(R"({"command":"jflow","flow":{"dt_init":0.0}})"),
        config_error,
        Catch::Matchers::MessageMatches(
            Catch::Matchers::ContainsSubstring("config.flow")));
    REQUIRE_THROWS_MATCHES(
        parse_config(R"({"command":"geodesic","geodesic":{"slices":8}})"),
        config_error,
        Catch::Matchers::MessageMatches(
            Catch::Matchers::ContainsSubstring("config.geodesic.slices")));
  }
}

TEST_CASE("field specs materialize deterministically", "[io]") {
  const TorusGrid g(1, {32, 32});

  SECTION("cosine terms match the closed form") {
    RunConfig cfg = parse_config(
        R"({"command":"jflow","sizes":[32,32],
            "phi":{"kind":"cosine","terms":[
              {"amplitude":0.3,"axis":0},
              {"amplitude":-0.1,"axis":1,"mode":2}]}})");
    const ScalarField f = build_field(cfg.phi, g, cfg.seed);
    const ScalarField ref = sample(g, [](const std::array<double, 4>& x) {
      return 0.3 * std::cos(x[0]) - 0.1 * std::cos(2.0 * x[1]);
    });
    REQUIRE(sup_norm(f - ref) < 1e-15);
  }
  SECTION("random specs inherit the config seed") {
    RunConfig a = parse_config(
        R"({"command":"jflow","sizes":[32,32],"seed":11,
            "phi":{"kind":"random","max_mode":3,"amplitude":0.2}})");
    const ScalarField fa = build_field(a.phi, g, a.seed);
    const ScalarField fb = build_field(a.phi, g, 11);
    REQUIRE(sup_norm(fa - fb) == 0.0);
    RunConfig c = parse_config(
        R"({"command":"jflow","sizes":[32,32],"seed":11,
            "phi":{"kind":"random","max_mode":3,"amplitude":0.2,"seed":12}})");
    REQUIRE(sup_norm(build_field(c.phi, g, c.seed) - fa) > 1e-3);
  }
  SECTION("stored fields must match the configured grid") {
    const fs::path dir = fresh_dir("fieldspec");
    write_field(dir / "f.tcsk", random_band_limited(TorusGrid(1, {16, 16}), 3, 0.5, 1));
    FieldSpec spec;
    spec.kind = FieldSpec::Kind::file;
    spec.path = (dir / "f.tcsk").string();
    REQUIRE_THROWS_AS(build_field(spec, g, 0), config_error);
    const ScalarField ok = build_field(spec, TorusGrid(1, {16, 16}), 0);
    REQUIRE(ok.grid.size[0] == 16);
  }
}

TEST_CASE("runs are deterministic and logs are complete", "[io]") {
  const fs::path a = fresh_dir("det_a");
  const fs::path b = fresh_dir("det_b");
  const std::string base = R"({"command":"jflow","sizes":[32,32],"seed":5,
      "chi":{"psi":{"kind":"cosine","terms":[{"amplitude":0.2,"axis":0}]}},
      "phi":{"kind":"random","max_mode":2,"amplitude":0.05},
      "flow":{"tol":1e-7,"max_steps":400},
      "output_dir":")";

  RunConfig ca = parse_config(base + a.string() + "\"}");
  RunConfig cb = parse_config(base + b.string() + "\"}");
  std::ostringstream sink;
  REQUIRE(run(ca, sink) == exit_code::success);
  REQUIRE(run(cb, sink) == exit_code::success);

  REQUIRE(slurp(a / "jflow_log.csv") == slurp(b / "jflow_log.csv"));
  REQUIRE(normalized_summary(a / "summary.json") ==
          normalized_summary(b / "summary.json"));
  REQUIRE(slurp(a / "phi_final.tcsk") == slurp(b / "phi_final.tcsk"));

  const auto summary = nlohmann::ordered_json::parse(slurp(a / "summary.json"));
  REQUIRE(summary["status"] == "converged");
  // one CSV row per accepted step plus the initial sample
  REQUIRE(csv_data_rows(a / "jflow_log.csv") ==
          summary["steps_accepted"].get<long>() + 1);
  REQUIRE(read_field(a / "phi_final.tcsk").grid == TorusGrid(1, {32, 32}));
}

TEST_CASE("continue run writes expected artifacts", "[io]") {
  const fs::path dir = fresh_dir("continue");
  RunConfig cfg = parse_config(R"({"command":"continue","sizes":[32,32],
      "schedule":[0,0.5,1.0],"output_dir":")" + dir.string() + "\"}");
  std::ostringstream sink;
  REQUIRE(run(cfg, sink) == exit_code::success);

  const auto summary = nlohmann::ordered_json::parse(slurp(dir / "summary.json"));
  REQUIRE(summary["status"] == "completed");
  REQUIRE(summary["empirical_r_chi"].get<double>() == 1.0);
  REQUIRE(summary["steps_accepted"].get<long>() == 3);
  REQUIRE(csv_data_rows(dir / "continue_log.csv") == 3);
  REQUIRE(sup_norm(read_field(dir / "phi_final.tcsk")) < 1e-10);
}

TEST_CASE("geodesic run exports the slice sequence", "[io]") {
  const fs::path dir = fresh_dir("geodesic");
  RunConfig cfg = parse_config(R"({"command":"geodesic","sizes":[32,32],
      "geodesic":{"eps":1e-2,"slices":9},
      "phi1":{"kind":"cosine","terms":[{"amplitude":0.2,"axis":0}]},
      "output_dir":")" + dir.string() + "\"}");
  std::ostringstream sink;
  REQUIRE(run(cfg, sink) == exit_code::success);

  const auto manifest = nlohmann::ordered_json::parse(slurp(dir / "manifest.json"));
  REQUIRE(manifest["slices"].get<int>() == 9);
  REQUIRE(manifest["files"].size() == 9);
  const ScalarField first = read_field(dir / manifest["files"][0].get<std::string>());
  const ScalarField last = read_field(dir / manifest["files"][8].get<std::string>());
  REQUIRE(sup_norm(first) == 0.0);  // endpoints are stored bit-exactly
  const TorusGrid g(1, {32, 32});
  const ScalarField want = sample(g, [](const std::array<double, 4>& x) {
    return 0.2 * std::cos(x[0]);
  });
  REQUIRE(sup_norm(last - want) == 0.0);
  REQUIRE(manifest["residual_sup"].get<double>() <= 1e-8);
}

TEST_CASE("exit codes map failure classes", "[io]") {
  std::ostringstream sink;

  SECTION("flow step underflow") {
    const fs::path dir = fresh_dir("underflow");
    RunConfig cfg = parse_config(R"({"command":"jflow","sizes":[32,32],
        "chi":{"psi":{"kind":"cosine","terms":[{"amplitude":0.3,"axis":0}]}},
        "flow":{"dt_init":1e-9,"dt_min":1e-3},
        "output_dir":")" + dir.string() + "\"}");
    REQUIRE(run(cfg, sink) == exit_code::flow_underflow);
    const auto summary = nlohmann::ordered_json::parse(slurp(dir / "summary.json"));
    REQUIRE(summary["status"] == "step-underflow");
  }
  SECTION("grid mismatch against a stored field is a config failure") {
    const fs::path dir = fresh_dir("mismatch");
    write_field(dir / "small.tcsk",
                random_band_limited(TorusGrid(1, {16, 16}), 3, 0.1, 2));
    RunConfig cfg = parse_config(R"({"command":"energy","sizes":[32,32],
        "phi":{"kind":"file","path":")" + (dir / "small.tcsk").string() +
        R"("},"output_dir":")" + dir.string() + "\"}");
    REQUIRE(run(cfg, sink) == exit_code::config);
  }
  SECTION("missing stored field is an io failure") {
    const fs::path dir = fresh_dir("missing");
    RunConfig cfg = parse_config(R"({"command":"energy","sizes":[32,32],
        "phi":{"kind":"file","path":")" + (dir / "nope.tcsk").string() +
        R"("},"output_dir":")" + dir.string() + "\"}");
    REQUIRE(run(cfg, sink) == exit_code::io);
  }
}

TEST_CASE("environment variable overrides the output directory", "[io]") {
  const fs::path ignored = fresh_dir("env_ignored");
  const fs::path target = fresh_dir("env_target");
  ::setenv(output_dir_env, target.string().c_str(), 1);
  RunConfig cfg = parse_config(R"({"command":"energy","sizes":[16,16],
      "phi":{"kind":"cosine","terms":[{"amplitude":0.1,"axis":1}]},
      "output_dir":")" + ignored.string() + "\"}");
  std::ostringstream sink;
  const int code = run(cfg, sink);
  ::unsetenv(output_dir_env);
  REQUIRE(code == exit_code::success);
  REQUIRE(fs::exists(target / "energy.json"));
  REQUIRE_FALSE(fs::exists(ignored / "energy.json"));

  const auto report = nlohmann::ordered_json::parse(slurp(target / "energy.json"));
  const double j = report["j_chi"].get<double>();
  REQUIRE(j > 0.0);
  // identity twist in one dimension: twist energy is half the endpoint form
  REQUIRE(j == Catch::Approx(report["aubin_j"].get<double>() / 2.0).epsilon(1e-9));
  REQUIRE(report.contains("k_energy"));
  REQUIRE(report.contains("entropy"));
}
