// Command-line front end.  Exit codes: 0 success, 1 task/invariant failure,
// 2 config schema violation (field named on stderr).
#include <cstdint>
#include <iostream>
#include <iterator>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "locstat/errors.hpp"
#include "locstat/experiment.hpp"

namespace {

struct Common {
  std::string config;
  std::string out;
  std::uint64_t seed = 0;
  bool seed_set = false;
  int threads = -1;
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--config,--model", c.config, "experiment or model JSON")
      ->required();
  sub->add_option("--out", c.out, "output directory (overrides config)");
  sub->add_option("--seed", c.seed, "RNG seed (overrides config)")
      ->each([&c](const std::string&) { c.seed_set = true; });
  sub->add_option("--threads", c.threads,
                  "worker threads, 0 = auto (LOCSTAT_THREADS respected)");
}

locstat::ExperimentConfig load_with(const Common& c) {
  locstat::ExperimentConfig cfg = locstat::load_experiment(c.config);
  if (!c.out.empty()) cfg.output_dir = c.out;
  if (c.seed_set) cfg.seed = c.seed;
  if (c.threads >= 0) cfg.threads = c.threads;
  return cfg;
}

int execute(const locstat::ExperimentConfig& cfg) {
  for (const std::string& w : locstat::validate_experiment(cfg))
    std::cerr << "warning: " << w << "\n";
  const locstat::RunReport report = locstat::run_experiment(cfg);
  for (const locstat::TaskResult& t : report.tasks)
    std::cout << (t.pass ? "[PASS] " : "[FAIL] ") << t.name << ": "
              << t.detail << "\n";
  std::cout << "manifest: " << report.manifest_file << "\n";
  if (!report.all_pass) {
    for (const locstat::TaskResult& t : report.tasks)
      if (!t.pass)
        std::cerr << "task '" << t.name << "' failed: " << t.detail << "\n";
    return 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"locally stationary Markov chain toolkit"};
  app.require_subcommand(1);
  int rc = 0;

  Common run_c;
  CLI::App* run = app.add_subcommand("run", "execute the config's task list");
  add_common(run, run_c);
  run->callback([&] { rc = execute(load_with(run_c)); });

  Common val_c;
  CLI::App* val =
      app.add_subcommand("validate", "schema + cross-field checks, no run");
  add_common(val, val_c);
  val->callback([&] {
    const locstat::ExperimentConfig cfg = load_with(val_c);
    const std::vector<std::string> warnings =
        locstat::validate_experiment(cfg);
    for (const std::string& w : warnings) std::cout << "warning: " << w << "\n";
    std::cout << "config OK (" << warnings.size() << " warning"
              << (warnings.size() == 1 ? "" : "s") << ")\n";
    rc = 0;
  });

  // Single-task conveniences: same runner, task list fixed here.
  struct Single {
    const char* name;
    const char* task;
    const char* help;
  };
  const Single singles[] = {
      {"invariant", "invariant", "invariant law over the u-grid"},
      {"derivatives", "derivatives", "derivative curves + FD cross-check"},
      {"ergodicity", "ergodicity", "contraction-rate sweep over u"},
      {"simulate", "simulate", "triangular-array paths (CSV + binary)"},
  };
  std::vector<Common> single_c(std::size(singles));
  for (std::size_t i = 0; i < std::size(singles); ++i) {
    CLI::App* sub = app.add_subcommand(singles[i].name, singles[i].help);
    add_common(sub, single_c[i]);
    const char* task = singles[i].task;
    Common& c = single_c[i];
    sub->callback([&rc, &c, task] {
      locstat::ExperimentConfig cfg = load_with(c);
      cfg.tasks = {task};
      rc = execute(cfg);
    });
  }

  Common est_c;
  std::string est_f;
  int est_j = 0, est_k = 0, est_grid = 0;
  long long est_n = 0;
  int est_reps = 0;
  double est_b = 0.0;
  CLI::App* est =
      app.add_subcommand("estimate", "local-polynomial curve estimate");
  add_common(est, est_c);
  est->add_option("--f,--functional", est_f,
                  "mean | product | power:<p> | indicator:<label>");
  est->add_option("--j", est_j, "block length")->check(CLI::PositiveNumber);
  est->add_option("--k", est_k, "polynomial order")
      ->check(CLI::PositiveNumber);
  est->add_option("--bandwidth", est_b, "kernel bandwidth in (0,1)");
  est->add_option("--grid", est_grid, "number of equally spaced u points")
      ->check(CLI::Range(2, 100000));
  est->add_option("--n", est_n, "path length")->check(CLI::PositiveNumber);
  est->add_option("--replicates", est_reps, "simulated replicates")
      ->check(CLI::PositiveNumber);
  est->callback([&] {
    locstat::ExperimentConfig cfg = load_with(est_c);
    cfg.tasks = {"estimate"};
    if (!est_f.empty()) cfg.functional = est_f;
    if (est_j > 0) cfg.j = est_j;
    if (est_k > 0) cfg.k = est_k;
    if (est_b > 0.0) cfg.bandwidth = est_b;
    if (est_n > 0) cfg.n = est_n;
    if (est_reps > 0) cfg.replicates = est_reps;
    if (est_grid > 0) {
      cfg.u_grid.clear();
      for (int i = 0; i < est_grid; ++i)
        cfg.u_grid.push_back(double(i) / double(est_grid - 1));
    }
    rc = execute(cfg);
  });

  Common sw_c;
  std::string sw_mode;
  int sw_k = 0, sw_reps = 0;
  long long sw_n = 0;
  CLI::App* sw =
      app.add_subcommand("sweep", "bias or variance scaling diagnostics");
  add_common(sw, sw_c);
  sw->add_option("mode", sw_mode, "bias | variance")
      ->required()
      ->check(CLI::IsMember({"bias", "variance"}));
  sw->add_option("--k", sw_k, "polynomial order")->check(CLI::PositiveNumber);
  sw->add_option("--n", sw_n, "path length (bias design size)")
      ->check(CLI::PositiveNumber);
  sw->add_option("--replicates", sw_reps, "Monte Carlo replicates")
      ->check(CLI::PositiveNumber);
  sw->callback([&] {
    locstat::ExperimentConfig cfg = load_with(sw_c);
    cfg.tasks = {sw_mode == "bias" ? "bias_sweep" : "variance_sweep"};
    if (sw_k > 0) cfg.k = sw_k;
    if (sw_n > 0) cfg.n = sw_n;
    if (sw_reps > 0) cfg.replicates = sw_reps;
    rc = execute(cfg);
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const locstat::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return rc;
}
