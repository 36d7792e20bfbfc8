// Config schema, model building, the experiment runner and the CLI binary
// (driven as a subprocess when LOCSTAT_CLI points at it).
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "locstat/errors.hpp"
#include "locstat/experiment.hpp"
#include "locstat/finite_chain.hpp"
#include "support.hpp"

using namespace locstat;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

json testbed_model() {
  return json{{"family", "two_state"},
              {"curves",
               {{"a", {{"type", "poly"}, {"coeffs", {0.3, 0.4}}}},
                {"b", {{"type", "poly"}, {"coeffs", {0.5, -0.2}}}}}}};
}

fs::path fresh_dir(const std::string& tag) {
  const fs::path p = fs::temp_directory_path() / ("locstat_test_" + tag);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(bool(in));
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("schema: unknown keys, tasks and families are named") {
  json cfg{{"model", testbed_model()}, {"granularity", 3}};
  CHECK_THROWS_WITH_AS(parse_experiment(cfg),
                       "config.granularity: unknown field", ConfigError);

  json cfg2{{"model", testbed_model()}, {"tasks", {"invariant", "plot"}}};
  CHECK_THROWS_AS(parse_experiment(cfg2), ConfigError);

  json cfg3{{"model", {{"family", "garch"}}}};
  CHECK_THROWS_AS(parse_experiment(cfg3), ConfigError);

  // Malformed curve: sin takes exactly four coefficients.
  json m = testbed_model();
  m["curves"]["a"] = {{"type", "sin"}, {"coeffs", {0.3, 0.1}}};
  try {
    build_model(m);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("model.curves.a.coeffs") !=
          std::string::npos);
  }
}

TEST_CASE("schema: range checks on grids and scalars") {
  json base{{"model", testbed_model()}};
  auto with = [&](const char* key, json v) {
    json c = base;
    c[key] = std::move(v);
    return c;
  };
  CHECK_THROWS_AS(parse_experiment(with("u_grid", {0.0, 1.5})), ConfigError);
  CHECK_THROWS_AS(parse_experiment(with("b_list", {0.0})), ConfigError);
  CHECK_THROWS_AS(parse_experiment(with("n_list", json::array())),
                  ConfigError);
  CHECK_THROWS_AS(parse_experiment(with("bandwidth", 1.0)), ConfigError);
  CHECK_THROWS_AS(parse_experiment(with("replicates", 0)), ConfigError);
  CHECK_THROWS_AS(parse_experiment(with("seed", -4)), ConfigError);
  CHECK_THROWS_AS(parse_experiment(with("j", 0)), ConfigError);

  const ExperimentConfig ok = parse_experiment(base);
  CHECK(ok.u_grid.size() == 21);
  CHECK(ok.b_list == std::vector<double>{0.4, 0.2, 0.1, 0.05});
  CHECK(ok.n_list.size() == 4);
  CHECK(ok.seed == 1);
}

TEST_CASE("build_model: every family constructs and reports its shape") {
  const BuiltModel tb = build_model(testbed_model());
  CHECK(tb.name == "two_state");
  CHECK(tb.integer_states);
  CHECK(tb.family.space().size() == 2);
  const Measure pi = invariant_measure(tb.family.eval(0.5));
  CHECK(pi(1) == doctest::Approx(testsup::tb_pi1(0.5)).epsilon(1e-12));

  json dj{{"family", "doeblin"},
          {"base_measure", {0.5, 0.3, 0.2}},
          {"g",
           {{0.1, -0.1, 0.0}, {0.0, 0.0, 0.0}, {-0.2, 0.1, 0.1}}},
          {"amplitude", 0.25}};
  const BuiltModel doeblin = build_model(dj);
  CHECK(doeblin.family.space().size() == 3);
  CHECK(doeblin.integer_states);

  json ij{{"family", "inar"},
          {"p", 1},
          {"curves",
           {{"alpha1", {{"type", "poly"}, {"coeffs", {0.3, 0.1}}}},
            {"immigration", {{"type", "poly"}, {"coeffs", {0.8}}}}}},
          {"truncation_N", 30}};
  const BuiltModel inar = build_model(ij);
  CHECK(inar.family.space().size() == 31);
  CHECK(inar.integer_states);

  json rj{{"family", "random_env"},
          {"curves",
           {{"a0", {{"type", "poly"}, {"coeffs", {-0.2, 0.2}}}},
            {"a1", {{"type", "poly"}, {"coeffs", {0.5}}}},
            {"beta", {{"type", "poly"}, {"coeffs", {0.4}}}}}},
          {"env", {{"rho", 0.5}, {"sigma", 0.4}, {"bins", 7}, {"L", 3.0}}}};
  const BuiltModel renv = build_model(rj);
  CHECK(renv.family.space().size() == 14);

  json nj{{"family", "inarch"},
          {"curves",
           {{"alpha0", {{"type", "sin"}, {"coeffs", {1.0, 0.3, 1.0, 0.0}}}},
            {"alpha1", {{"type", "poly"}, {"coeffs", {0.25}}}}}},
          {"truncation_N", 30}};
  const BuiltModel inarch = build_model(nj);
  CHECK(inarch.family.space().size() == 31);
}

TEST_CASE("parse_functional resolves the dictionary against labels") {
  const BuiltModel tb = build_model(testbed_model());
  const StateSpace& sp = tb.family.space();
  // mean / power / indicator act on the first block coordinate.
  CHECK(parse_functional("mean", sp).apply({3.0, 0.0}) == 3.0);
  CHECK(parse_functional("product", sp).apply({2.0, 3.0}) == 6.0);
  CHECK(parse_functional("power:2", sp).apply({3.0}) == 9.0);
  CHECK(parse_functional("indicator:1", sp).apply({1.0}) == 1.0);
  CHECK(parse_functional("indicator:1", sp).apply({0.0}) == 0.0);
  CHECK_THROWS_AS(parse_functional("indicator:5", sp), ConfigError);
  CHECK_THROWS_AS(parse_functional("power:abc", sp), ConfigError);
  CHECK_THROWS_AS(parse_functional("median", sp), ConfigError);
}

TEST_CASE("validate_experiment: window invariant and truncation floor") {
  json cfg{{"model", testbed_model()},
           {"n", 40},
           {"bandwidth", 0.1},
           {"k", 3}};
  const std::vector<std::string> w1 =
      validate_experiment(parse_experiment(cfg));
  REQUIRE(w1.size() == 1);
  CHECK(w1[0].find("LocPolyConfig invariant") != std::string::npos);

  json ij{{"model",
           {{"family", "inar"},
            {"p", 1},
            {"curves",
             {{"alpha1", {{"type", "poly"}, {"coeffs", {0.3, 0.1}}}},
              {"immigration", {{"type", "poly"}, {"coeffs", {0.8}}}}}},
            {"truncation_N", 3}}}};
  const std::vector<std::string> w2 =
      validate_experiment(parse_experiment(ij));
  REQUIRE(w2.size() == 1);
  CHECK(w2[0].find("truncation_N") != std::string::npos);
  CHECK(w2[0].find("suggestion") != std::string::npos);

  json clean{{"model", testbed_model()}};
  CHECK(validate_experiment(parse_experiment(clean)).empty());
}

TEST_CASE("run_experiment: empty task list writes only the manifest") {
  const fs::path dir = fresh_dir("empty");
  json cfg{{"model", testbed_model()}};
  ExperimentConfig ec = parse_experiment(cfg);
  ec.output_dir = dir.string();
  const RunReport rep = run_experiment(ec);
  CHECK(rep.all_pass);
  CHECK(rep.tasks.empty());
  int files = 0;
  for (const auto& e : fs::directory_iterator(dir)) {
    ++files;
    CHECK(e.path().filename() == "manifest.json");
  }
  CHECK(files == 1);
  const json manifest = json::parse(slurp(dir / "manifest.json"));
  CHECK(manifest["all_pass"] == true);
  CHECK(manifest["tasks"].empty());
}

TEST_CASE("run_experiment: identical config and seed give identical bytes") {
  json cfg{{"model", testbed_model()},
           {"tasks", {"invariant", "simulate", "estimate"}},
           {"seed", 9},
           {"n", 2000},
           {"replicates", 3},
           {"functional", "indicator:1"}};
  const fs::path d1 = fresh_dir("det1");
  const fs::path d2 = fresh_dir("det2");
  ExperimentConfig e1 = parse_experiment(cfg);
  e1.output_dir = d1.string();
  ExperimentConfig e2 = parse_experiment(cfg);
  e2.output_dir = d2.string();
  const RunReport r1 = run_experiment(e1);
  const RunReport r2 = run_experiment(e2);
  CHECK(r1.all_pass);
  CHECK(r2.all_pass);
  for (const char* f :
       {"invariant.csv", "paths.csv", "paths.bin", "estimate.csv",
        "manifest.json"})
    CHECK(slurp(d1 / f) == slurp(d2 / f));
  const json m1 = json::parse(slurp(d1 / "manifest.json"));
  const json m2 = json::parse(slurp(d2 / "manifest.json"));
  CHECK(m1["config_hash"] == m2["config_hash"]);
}

TEST_CASE("run_experiment: testbed full pipeline passes with known metrics") {
  json cfg{{"model", testbed_model()},
           {"tasks",
            {"invariant", "derivatives", "taylor", "ergodicity",
             "local_stationarity", "simulate", "estimate", "bias_sweep",
             "variance_sweep", "covariance"}},
           {"seed", 42},
           {"n", 4000},
           {"replicates", 200},
           {"functional", "indicator:1"},
           {"k", 3},
           {"bandwidth", 0.1}};
  const fs::path dir = fresh_dir("full");
  ExperimentConfig ec = parse_experiment(cfg);
  ec.output_dir = dir.string();
  const RunReport rep = run_experiment(ec);
  for (const TaskResult& t : rep.tasks) {
    INFO(t.name, ": ", t.detail);
    CHECK(t.pass);
  }
  CHECK(rep.all_pass);

  const json manifest = json::parse(slurp(dir / "manifest.json"));
  CHECK(manifest["tasks"].size() == 10);
  const double kappa =
      manifest["tasks"]["ergodicity"]["metrics"]["sup_kappa_hat"];
  CHECK(kappa == doctest::Approx(0.2).epsilon(1e-6));
  const json& dpi =
      manifest["tasks"]["derivatives"]["metrics"]["dpi_du_at_grid_front"];
  REQUIRE(dpi.size() == 2);
  CHECK(double(dpi[1]) == doctest::Approx(0.40625).epsilon(1e-10));
  // Every declared artifact exists.
  for (const auto& [name, entry] : manifest["tasks"].items())
    for (const auto& f : entry["files"])
      CHECK(fs::exists(dir / std::string(f)));
}

TEST_CASE("run_experiment: a failing task is reported, not thrown") {
  json cfg{{"model", testbed_model()},
           {"tasks", {"variance_sweep"}},
           {"replicates", 1}};
  const fs::path dir = fresh_dir("taskfail");
  ExperimentConfig ec = parse_experiment(cfg);
  ec.output_dir = dir.string();
  const RunReport rep = run_experiment(ec);
  CHECK_FALSE(rep.all_pass);
  REQUIRE(rep.tasks.size() == 1);
  CHECK_FALSE(rep.tasks[0].pass);
  CHECK(rep.tasks[0].detail.find("replicates") != std::string::npos);
  const json manifest = json::parse(slurp(dir / "manifest.json"));
  CHECK(manifest["all_pass"] == false);
}

TEST_CASE("load_experiment: bare model blocks are wrapped, junk is refused") {
  const fs::path dir = fresh_dir("load");
  {
    std::ofstream os(dir / "bare.json");
    os << testbed_model().dump();
  }
  const ExperimentConfig bare =
      load_experiment((dir / "bare.json").string());
  CHECK(bare.tasks.empty());
  CHECK(bare.model["family"] == "two_state");

  {
    std::ofstream os(dir / "trunc.json");
    os << "{\"model\": {";
  }
  CHECK_THROWS_AS(load_experiment((dir / "trunc.json").string()),
                  ConfigError);
  {
    std::ofstream os(dir / "neither.json");
    os << "{\"tasks\": []}";
  }
  CHECK_THROWS_AS(load_experiment((dir / "neither.json").string()),
                  ConfigError);
  CHECK_THROWS_AS(load_experiment((dir / "missing.json").string()),
                  ConfigError);
}

TEST_CASE("cli binary: exit codes 0, 1 and 2" *
          doctest::skip(std::getenv("LOCSTAT_CLI") == nullptr)) {
  const std::string cli = std::getenv("LOCSTAT_CLI");
  const fs::path dir = fresh_dir("cli");
  auto run = [&](const std::string& args) {
    const std::string cmd =
        cli + " " + args + " > " + (dir / "out.txt").string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    REQUIRE(status != -1);
    return WEXITSTATUS(status);
  };

  json good{{"model", testbed_model()},
            {"tasks", {"invariant", "ergodicity"}},
            {"output_dir", (dir / "out").string()}};
  {
    std::ofstream os(dir / "good.json");
    os << good.dump();
  }
  CHECK(run("run --config " + (dir / "good.json").string()) == 0);
  CHECK(fs::exists(dir / "out" / "manifest.json"));
  CHECK(slurp(dir / "out.txt").find("[PASS] ergodicity") !=
        std::string::npos);

  json bad = good;
  bad["model"]["curves"]["a"]["type"] = "spline";
  {
    std::ofstream os(dir / "bad.json");
    os << bad.dump();
  }
  CHECK(run("run --config " + (dir / "bad.json").string()) == 2);
  CHECK(slurp(dir / "out.txt").find("model.curves.a.type") !=
        std::string::npos);

  json fail{{"model", testbed_model()},
            {"tasks", {"variance_sweep"}},
            {"replicates", 1},
            {"output_dir", (dir / "fail_out").string()}};
  {
    std::ofstream os(dir / "fail.json");
    os << fail.dump();
  }
  CHECK(run("run --config " + (dir / "fail.json").string()) == 1);
  CHECK(slurp(dir / "out.txt").find("task 'variance_sweep' failed") !=
        std::string::npos);

  json warn{{"model", testbed_model()}, {"n", 40}};
  {
    std::ofstream os(dir / "warn.json");
    os << warn.dump();
  }
  CHECK(run("validate --config " + (dir / "warn.json").string()) == 0);
  CHECK(slurp(dir / "out.txt").find("LocPolyConfig invariant") !=
        std::string::npos);

  // Single-task subcommand with overrides.
  CHECK(run("estimate --config " + (dir / "bare_model.json").string()) == 2);
  {
    std::ofstream os(dir / "bare_model.json");
    os << testbed_model().dump();
  }
  CHECK(run("estimate --model " + (dir / "bare_model.json").string() +
            " --f indicator:1 --j 1 --k 3 --bandwidth 0.1 --grid 11 --n 2000"
            " --replicates 1 --out " +
            (dir / "est_out").string() + " --seed 7") == 0);
  CHECK(fs::exists(dir / "est_out" / "estimate.csv"));
  CHECK(run("sweep bias --config " + (dir / "bare_model.json").string() +
            " --k 2 --n 2000 --out " + (dir / "sweep_out").string()) == 0);
  CHECK(fs::exists(dir / "sweep_out" / "bias_sweep.json"));
}
