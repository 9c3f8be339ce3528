#include <catch2/catch_amalgamated.hpp>

#include <sys/wait.h>
#include <unistd.h>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>

#include <json.hpp>

#include "jsde/cli.hpp"
#include "jsde/io.hpp"

using namespace jsde;
using Catch::Matchers::ContainsSubstring;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path scratch_root() {
  static const fs::path root = [] {
    fs::path p = fs::temp_directory_path() / ("jsde_cli_test_" + std::to_string(::getpid()));
    fs::create_directories(p);
    static struct Cleanup {
      fs::path p;
      ~Cleanup() {
        std::error_code ec;
        fs::remove_all(p, ec);
      }
    } cleanup{p};
    return p;
  }();
  return root;
}

fs::path scratch_dir(const std::string& name) {
  fs::path p = scratch_root() / name;
  fs::create_directories(p);
  return p;
}

void write_file(const fs::path& p, const std::string& bytes) {
  std::ofstream f(p, std::ios::binary);
  f << bytes;
  REQUIRE(f.good());
}

std::string read_file(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  REQUIRE(f.good());
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

int run_cli(const std::string& args, const std::string& env_prefix = "") {
  const std::string cmd =
      env_prefix + (env_prefix.empty() ? "" : " ") + JSDE_CLI_PATH + " " + args +
      " >/dev/null 2>/dev/null";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string capture_cli(const std::string& args) {
  const std::string cmd = std::string(JSDE_CLI_PATH) + " " + args;
  FILE* pipe = ::popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  std::string out;
  char buf[512];
  while (std::size_t n = std::fread(buf, 1, sizeof(buf), pipe)) out.append(buf, n);
  ::pclose(pipe);
  return out;
}

json still_model() {
  return {{"dim", 1},
          {"drift", {{"id", "zero"}}},
          {"diffusion", {{"id", "zero"}}},
          {"kernel", {{"id", "none"}}},
          {"activity", {{"id", "none"}}}};
}

std::string hex_digest(const std::string& bytes) {
  char hex[32];
  std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(fnv1a64(bytes)));
  return hex;
}

}  // namespace

TEST_CASE("doubles serialise in shortest round-trip form") {
  REQUIRE(format_double(0.0) == "0");
  REQUIRE(format_double(1.0) == "1");
  REQUIRE(format_double(0.1) == "0.1");
  REQUIRE(format_double(-2.5) == "-2.5");
  for (double v : {0.0, -0.0, 1.0, 0.1, 1.0 / 3.0, std::exp(-2.0), 1e300, 5e-324,
                   -123456.789, 0.30000000000000004}) {
    // strtod, not stod: stod throws out_of_range on subnormals like 5e-324.
    const double back = std::strtod(format_double(v).c_str(), nullptr);
    REQUIRE(std::memcmp(&back, &v, sizeof v) == 0);
  }
  REQUIRE(format_double(std::numeric_limits<double>::infinity()) == "inf");
}

TEST_CASE("csv writers have stable shapes and digests") {
  SimConfig cfg;
  cfg.dt = 0.25;
  cfg.horizon = 1.0;
  cfg.paths = 2;
  cfg.initial = {Vec{1.5}};
  const CoefficientSet c = make_coefficients(1, zero_drift(1), zero_diffusion(1),
                                             zero_kernel(1), JumpActivity::none());
  const PathBatch b = simulate(c, cfg);

  std::ostringstream os;
  write_paths_csv(os, b);
  const std::string csv = os.str();
  REQUIRE(csv.rfind("path,t,x1\n", 0) == 0);
  REQUIRE(std::count(csv.begin(), csv.end(), '\n') == 1 + 2 * 5);
  REQUIRE_THAT(csv, ContainsSubstring("\n0,0,1.5\n"));
  REQUIRE_THAT(csv, ContainsSubstring("\n1,0.25,1.5\n"));

  const auto writer = [](std::ostream& s, const PathBatch& batch) { write_paths_csv(s, batch); };
  REQUIRE(csv_digest(writer, b) == fnv1a64(csv));
  REQUIRE(csv_digest(writer, b) == csv_digest(writer, b));

  std::ostringstream ms;
  write_moments_csv(ms, moment_series(b));
  REQUIRE(ms.str().rfind("t,second_moment,second_stderr,sup_moment,sup_stderr\n", 0) == 0);
  REQUIRE_THAT(ms.str(), ContainsSubstring("\n0.25,2.25,0,2.25,0\n"));
}

TEST_CASE("config parsing reports precise locations") {
  const fs::path dir = scratch_dir("configs");

  SECTION("missing file") {
    REQUIRE_THROWS_WITH(parse_config((dir / "absent.json").string()),
                        ContainsSubstring("cannot open config file"));
  }
  SECTION("syntax errors carry the line number") {
    const fs::path p = dir / "broken.json";
    write_file(p, "{\n  \"seed\": 1,\n  oops\n}\n");
    REQUIRE_THROWS_WITH(parse_config(p.string()), ContainsSubstring(":3:"));
  }
  SECTION("unknown and missing keys are named") {
    json good = {{"seed", 42},
                 {"model", still_model()},
                 {"sim", {{"dt", 0.5}, {"horizon", 1.0}, {"paths", 1}, {"initial", {{0.0}}}}},
                 {"task", "simulate"},
                 {"task_params", json::object()}};
    {
      json bad = good;
      bad["bogus"] = 1;
      const fs::path p = dir / "unknown_key.json";
      write_file(p, bad.dump());
      REQUIRE_THROWS_WITH(parse_config(p.string()),
                          ContainsSubstring("config.bogus") && ContainsSubstring("unknown"));
    }
    {
      json bad = good;
      bad.erase("seed");
      const fs::path p = dir / "no_seed.json";
      write_file(p, bad.dump());
      REQUIRE_THROWS_WITH(parse_config(p.string()),
                          ContainsSubstring("config.seed") && ContainsSubstring("missing"));
    }
    {
      json bad = good;
      bad["sim"]["dt"] = 0.0;
      const fs::path p = dir / "bad_dt.json";
      write_file(p, bad.dump());
      REQUIRE_THROWS_WITH(parse_config(p.string()), ContainsSubstring("sim.dt"));
    }
    {
      json bad = good;
      bad["model"]["drift"] = {{"id", "warp"}};
      const fs::path p = dir / "bad_drift.json";
      write_file(p, bad.dump());
      REQUIRE_THROWS_WITH(parse_config(p.string()),
                          ContainsSubstring("model.drift.id") &&
                              ContainsSubstring("unknown drift 'warp'"));
    }
    {
      json bad = good;
      bad["sim"]["initial"] = {{0.0, 1.0}};
      const fs::path p = dir / "bad_initial.json";
      write_file(p, bad.dump());
      REQUIRE_THROWS_WITH(parse_config(p.string()), ContainsSubstring("sim.initial[0]"));
    }
    {
      json bad = good;
      bad["task"] = "meditate";
      const fs::path p = dir / "bad_task.json";
      write_file(p, bad.dump());
      REQUIRE_THROWS_WITH(parse_config(p.string()),
                          ContainsSubstring("unknown task 'meditate'"));
    }
    {
      const fs::path p = dir / "ok.json";
      write_file(p, good.dump());
      const Experiment exp = parse_config(p.string());
      REQUIRE(exp.seed == 42);
      REQUIRE(exp.task == "simulate");
      REQUIRE(exp.sim.paths == 1);
      REQUIRE(exp.output_dir == "out");
    }
  }
}

TEST_CASE("usage errors and help") {
  REQUIRE(run_cli("--help") == 0);
  REQUIRE(run_cli("") == 2);
  REQUIRE(run_cli("run /nonexistent/config.json") == 2);
  const fs::path p = scratch_dir("usage") / "bad.json";
  write_file(p, "{\"seed\": 1}");
  REQUIRE(run_cli("run " + p.string()) == 2);
}

TEST_CASE("model listing") {
  const std::string out = capture_cli("list-models");
  REQUIRE_THAT(out, ContainsSubstring("drift models:"));
  REQUIRE_THAT(out, ContainsSubstring("alpha_drift(alpha)"));
  REQUIRE_THAT(out, ContainsSubstring("zero()"));
  REQUIRE_THAT(out, ContainsSubstring("truncated(rate, marks, cutoff)"));
}

TEST_CASE("simulate runs are reproducible byte for byte") {
  const fs::path dir = scratch_dir("sim");
  const fs::path out1 = dir / "out1";
  json cfg = {{"seed", 42},
              {"model", still_model()},
              {"sim", {{"dt", 0.25}, {"horizon", 1.0}, {"paths", 3}, {"initial", {{1.5}}}}},
              {"task", "simulate"},
              {"task_params", json::object()},
              {"output_dir", out1.string()}};
  const fs::path cfg_path = dir / "cfg.json";
  write_file(cfg_path, cfg.dump(2));

  REQUIRE(run_cli("run " + cfg_path.string()) == 0);
  const json manifest = json::parse(read_file(out1 / "manifest.json"));
  REQUIRE(manifest.at("exit_code") == 0);
  REQUIRE(manifest.at("seed") == 42);
  REQUIRE(manifest.at("config").at("seed") == 42);
  const auto names = manifest.at("artifacts").get<std::vector<std::string>>();
  REQUIRE(names == std::vector<std::string>{"paths.csv", "moments.csv", "report.json"});

  const std::string paths_csv = read_file(out1 / "paths.csv");
  REQUIRE(manifest.at("digests").at("paths.csv") == hex_digest(paths_csv));
  REQUIRE(std::count(paths_csv.begin(), paths_csv.end(), '\n') == 1 + 3 * 5);
  REQUIRE_THAT(paths_csv, ContainsSubstring("\n2,1,1.5\n"));

  const json report = json::parse(read_file(out1 / "report.json"));
  REQUIRE(report.at("paths") == 3);
  REQUIRE(report.at("grid_points") == 5);
  REQUIRE(report.at("final_second_moment").get<double>() == 2.25);
  REQUIRE(report.at("excluded_fraction").get<double>() == 0.0);
  REQUIRE(manifest.at("explosions").at("count") == 0);

  // identical rerun into a fresh directory, then again under a thread pool
  const fs::path out2 = dir / "out2";
  REQUIRE(run_cli("run " + cfg_path.string() + " --output-dir " + out2.string()) == 0);
  REQUIRE(read_file(out2 / "paths.csv") == paths_csv);
  REQUIRE(read_file(out2 / "manifest.json") == read_file(out1 / "manifest.json"));

  const fs::path out3 = dir / "out3";
  REQUIRE(run_cli("run " + cfg_path.string() + " --output-dir " + out3.string(),
                  "JSDE_THREADS=3") == 0);
  REQUIRE(read_file(out3 / "paths.csv") == paths_csv);
}

TEST_CASE("explosions are reported without failing a plain simulation") {
  const fs::path dir = scratch_dir("boom");
  const fs::path out = dir / "out";
  json cfg = {{"seed", 1},
              {"model",
               {{"dim", 1},
                {"drift", {{"id", "linear"}, {"gain", 30.0}}},
                {"diffusion", {{"id", "zero"}}},
                {"kernel", {{"id", "none"}}},
                {"activity", {{"id", "none"}}}}},
              {"sim", {{"dt", 0.5}, {"horizon", 5.0}, {"paths", 2}, {"initial", {{1.0}}}}},
              {"task", "simulate"},
              {"task_params", json::object()},
              {"output_dir", out.string()}};
  const fs::path cfg_path = dir / "cfg.json";
  write_file(cfg_path, cfg.dump());

  REQUIRE(run_cli("run " + cfg_path.string()) == 0);
  const json manifest = json::parse(read_file(out / "manifest.json"));
  REQUIRE(manifest.at("explosions").at("count") == 2);
  REQUIRE(manifest.at("explosions").at("fraction") == 1.0);
  REQUIRE(manifest.at("explosions").at("first_flagged").size() == 2);
  const auto names = manifest.at("artifacts").get<std::vector<std::string>>();
  REQUIRE(names == std::vector<std::string>{"paths.csv", "report.json"});
}

TEST_CASE("condition checks set the exit code from the verdicts") {
  const fs::path dir = scratch_dir("check");
  json base = {{"seed", 9},
               {"model",
                {{"dim", 1},
                 {"drift", {{"id", "alpha_drift"}, {"alpha", 0.5}}},
                 {"diffusion", {{"id", "zero"}}},
                 {"kernel", {{"id", "none"}}},
                 {"activity", {{"id", "none"}}}}},
               {"sim", {{"dt", 0.5}, {"horizon", 1.0}, {"paths", 1}, {"initial", {{0.0}}}}},
               {"task", "check"},
               {"task_params",
                {{"conditions",
                  {{{"id", "LOL"}, {"radius", 5.0}, {"pairs", 2000}}}}}},
               {"output_dir", (dir / "ok").string()}};
  const fs::path ok_path = dir / "ok.json";
  write_file(ok_path, base.dump());
  REQUIRE(run_cli("run " + ok_path.string()) == 0);
  {
    const json report = json::parse(read_file(dir / "ok" / "report.json"));
    REQUIRE(report.at("any_fail") == false);
    REQUIRE(report.at("reports").size() == 1);
    REQUIRE(report.at("reports")[0].at("verdict") == "estimate_only");
    REQUIRE(report.at("reports")[0].at("constant_estimate").get<double>() <= 1e-9);
    REQUIRE(report.at("reports")[0].at("samples_used") == 2000);
  }

  json fail = base;
  fail["model"]["drift"] = {{"id", "linear"}, {"gain", 1.0}};
  fail["task_params"]["conditions"] = {
      {{"id", "GOL"}, {"radius", 5.0}, {"pairs", 500}, {"claimed", 0.5}}};
  fail["output_dir"] = (dir / "bad").string();
  const fs::path fail_path = dir / "fail.json";
  write_file(fail_path, fail.dump());
  REQUIRE(run_cli("run " + fail_path.string()) == 1);
  {
    const json report = json::parse(read_file(dir / "bad" / "report.json"));
    REQUIRE(report.at("any_fail") == true);
    REQUIRE(report.at("reports")[0].at("verdict") == "fail");
    const json manifest = json::parse(read_file(dir / "bad" / "manifest.json"));
    REQUIRE(manifest.at("exit_code") == 1);
  }
}

TEST_CASE("long-run task matches the library call for call") {
  const fs::path dir = scratch_dir("invariant");
  const fs::path out = dir / "out";
  json cfg = {{"seed", 7},
              {"model",
               {{"dim", 1},
                {"drift", {{"id", "linear"}, {"gain", -1.0}}},
                {"diffusion", {{"id", "constant"}, {"value", 1.0}}},
                {"kernel", {{"id", "none"}}},
                {"activity", {{"id", "none"}}}}},
              {"sim", {{"dt", 0.01}, {"horizon", 5.0}, {"paths", 20}, {"initial", {{0.0}}}}},
              {"task", "invariant"},
              {"task_params",
               {{"burn_in", 2.5}, {"step_horizon", 0.5}, {"gap_threshold", 10.0}}},
              {"output_dir", out.string()}};
  const fs::path cfg_path = dir / "cfg.json";
  write_file(cfg_path, cfg.dump());
  REQUIRE(run_cli("run " + cfg_path.string()) == 0);

  const CoefficientSet c = make_coefficients(1, linear_drift(1, -1.0),
                                             constant_diffusion(1, 1.0), zero_kernel(1),
                                             JumpActivity::none());
  SimConfig sim;
  sim.dt = 0.01;
  sim.horizon = 5.0;
  sim.paths = 20;
  sim.seed = 7;
  sim.initial = {Vec{0.0}};
  const PathBatch batch = simulate(c, sim);
  const EmpiricalMeasure mu = occupation_from_batch(batch, 2.5, 5.0);
  const OccupationMoment om = occupation_second_moment(batch, 2.5, 5.0);
  const double gap = invariance_gap(c, mu, 0.5, sim);

  const json report = json::parse(read_file(out / "report.json"));
  REQUIRE(report.at("atoms") == mu.size());
  REQUIRE(report.at("occupation_second_moment").get<double>() == om.mean);
  REQUIRE(report.at("occupation_second_moment_stderr").get<double>() == om.stderr_mean);
  REQUIRE(report.at("invariance_gap").get<double>() == gap);
  REQUIRE(report.at("distance") == "wasserstein1");
  REQUIRE(report.at("pass") == true);

  // the occupation table reproduces the measure's digest
  std::ostringstream os;
  write_occupation_csv(os, mu);
  const json manifest = json::parse(read_file(out / "manifest.json"));
  REQUIRE(manifest.at("digests").at("occupation.csv") == hex_digest(os.str()));
}

TEST_CASE("smoothing and modulus tasks run end to end") {
  const fs::path dir = scratch_dir("tasks");
  SECTION("drift smoothing table") {
    const fs::path out = dir / "mollify";
    json cfg = {{"seed", 3},
                {"model",
                 {{"dim", 1},
                  {"drift", {{"id", "clamp"}, {"limit", 1.0}}},
                  {"diffusion", {{"id", "zero"}}},
                  {"kernel", {{"id", "none"}}},
                  {"activity", {{"id", "none"}}}}},
                {"sim", {{"dt", 0.5}, {"horizon", 1.0}, {"paths", 1}, {"initial", {{0.0}}}}},
                {"task", "mollify"},
                {"task_params",
                 {{"orders", {2, 4}},
                  {"drift_bound", 1.0},
                  {"probe", {{"lo", -2.0}, {"hi", 2.0}, {"count", 9}}}}},
                {"output_dir", out.string()}};
    const fs::path p = dir / "mollify.json";
    write_file(p, cfg.dump());
    REQUIRE(run_cli("run " + p.string()) == 0);
    const json report = json::parse(read_file(out / "report.json"));
    REQUIRE(report.at("orders").size() == 2);
    REQUIRE(report.at("orders")[0].at("order") == 2);
    REQUIRE(report.at("orders")[0].at("lipschitz_bound").get<double>() > 0.0);
    REQUIRE(report.at("orders")[1].at("max_probe_deviation").get<double>() <
            report.at("orders")[0].at("max_probe_deviation").get<double>() + 1e-12);
    const std::string csv = read_file(out / "mollify.csv");
    REQUIRE(csv.rfind("order,t,base1,smooth1\n", 0) == 0);
    REQUIRE(std::count(csv.begin(), csv.end(), '\n') == 1 + 2 * 9);
  }
  SECTION("smoothing cascade") {
    const fs::path out = dir / "cascade";
    json cfg = {{"seed", 4},
                {"model",
                 {{"dim", 1},
                  {"drift", {{"id", "clamp"}, {"limit", 1.0}}},
                  {"diffusion", {{"id", "constant"}, {"value", 0.3}}},
                  {"kernel", {{"id", "none"}}},
                  {"activity", {{"id", "none"}}}}},
                {"sim", {{"dt", 0.01}, {"horizon", 0.2}, {"paths", 10}, {"initial", {{0.5}}}}},
                {"task", "cascade"},
                {"task_params", {{"orders", {2, 4}}, {"drift_bound", 1.0}}},
                {"output_dir", out.string()}};
    const fs::path p = dir / "cascade.json";
    write_file(p, cfg.dump());
    REQUIRE(run_cli("run " + p.string()) == 0);
    const json report = json::parse(read_file(out / "report.json"));
    REQUIRE(report.at("bounded") == true);
    REQUIRE(report.at("pairs").size() == 1);
    REQUIRE(read_file(out / "cascade.csv").rfind("k,l,separation,gap,ratio\n", 0) == 0);
  }
  SECTION("coupling modulus") {
    const fs::path out = dir / "feller";
    json cfg = {{"seed", 5},
                {"model", still_model()},
                {"sim", {{"dt", 0.25}, {"horizon", 1.0}, {"paths", 4}, {"initial", {{0.0}}}}},
                {"task", "feller"},
                {"task_params", {{"x", {0.0}}, {"deltas", {0.25, 0.5}}}},
                {"output_dir", out.string()}};
    const fs::path p = dir / "feller.json";
    write_file(p, cfg.dump());
    REQUIRE(run_cli("run " + p.string()) == 0);
    const json report = json::parse(read_file(out / "report.json"));
    REQUIRE(report.at("ratios").get<std::vector<double>>() == std::vector<double>{1.0, 1.0});
    REQUIRE(report.at("spread").get<double>() == 1.0);
    REQUIRE(report.at("bounded") == true);
  }
}

TEST_CASE("ball-truncated models surface exit statistics") {
  const fs::path dir = scratch_dir("exit");
  const fs::path out = dir / "out";
  json cfg = {{"seed", 11},
              {"model",
               {{"dim", 1},
                {"drift", {{"id", "zero"}}},
                {"diffusion", {{"id", "zero"}}},
                {"kernel", {{"id", "none"}}},
                {"activity", {{"id", "none"}}},
                {"truncation",
                 {{"radius", 1.0}, {"local_one_sided", 0.0}, {"local_bound", 1.0}}}}},
              {"sim", {{"dt", 0.5}, {"horizon", 1.0}, {"paths", 2}, {"initial", {{1.5}, {0.5}}}}},
              {"task", "simulate"},
              {"task_params", json::object()},
              {"output_dir", out.string()}};
  const fs::path p = dir / "cfg.json";
  write_file(p, cfg.dump());
  REQUIRE(run_cli("run " + p.string()) == 0);
  const json report = json::parse(read_file(out / "report.json"));
  const json exits = report.at("ball_exit");
  REQUIRE(exits.at("radius") == 1.0);
  REQUIRE(exits.at("exited_count") == 1);
  REQUIRE(exits.at("exit_fraction") == 0.5);
  REQUIRE(exits.at("mean_exit_time") == 0.0);
  REQUIRE(exits.at("records").size() == 2);
  REQUIRE(exits.at("records")[0].at("exited") == true);
  REQUIRE(exits.at("records")[0].at("tau") == 0.0);
  REQUIRE(exits.at("records")[1].at("exited") == false);
}
