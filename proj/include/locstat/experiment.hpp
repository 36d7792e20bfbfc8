#pragma once
// Configuration-driven experiment runner: parse a JSON description, build the
// requested model family, execute an ordered task list, and write one CSV /
// JSON artifact per task plus a manifest recording the config hash, seed and
// per-task pass/fail against the thresholds embedded here.

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "locstat/kernel_family.hpp"
#include "locstat/locpoly.hpp"

namespace locstat {

// A model family built from its JSON block.  Throws ConfigError (CLI exit
// code 2) naming the offending field on schema problems.
struct BuiltModel {
  KernelFamily family;
  std::string name;
  bool integer_states = false;
};
BuiltModel build_model(const nlohmann::json& model);

// Functional dictionary: "mean" | "product" | "power:<p>" |
// "indicator:<state label>" resolved against the base state space.
Functional parse_functional(const std::string& expr, const StateSpace& base);

struct ExperimentConfig {
  nlohmann::json model;
  std::vector<std::string> tasks;  // executed in order; may be empty
  std::string output_dir = "locstat_out";
  std::uint64_t seed = 1;
  int threads = 0;  // 0 = runtime default (LOCSTAT_THREADS respected)

  std::vector<double> u_grid;     // default: 21 equally spaced points
  std::vector<double> b_list;     // default: 0.4 0.2 0.1 0.05
  std::vector<long long> n_list;  // default: 200 400 800 1600

  long long n = 1000;  // path length for simulate / estimate / covariance
  int replicates = 1;
  std::string functional = "mean";
  int j = 1;
  int k = 3;               // local-polynomial order
  double bandwidth = 0.1;

  nlohmann::json raw;  // canonical parsed config, hashed into the manifest
};

// Strict schema: unknown keys, wrong types, out-of-range values and unknown
// task names all raise ConfigError with the field named.
ExperimentConfig parse_experiment(const nlohmann::json& cfg);
ExperimentConfig load_experiment(const std::string& path);

// Cross-field diagnostics that are warnings rather than errors: the local
// polynomial window invariant (bandwidth * n < 2k), integer truncations
// below the drift-derived suggestion, small replicate counts for Monte Carlo
// tasks.  Empty for a clean config.
std::vector<std::string> validate_experiment(const ExperimentConfig& cfg);

struct TaskResult {
  std::string name;
  bool pass = false;
  std::string detail;
  std::vector<std::string> files;
};
struct RunReport {
  std::vector<TaskResult> tasks;
  bool all_pass = true;
  std::string manifest_file;
};

// Executes cfg.tasks in order under cfg.output_dir; always writes
// manifest.json (even for an empty task list).  Identical config + seed
// produce byte-identical artifacts.
RunReport run_experiment(const ExperimentConfig& cfg);

// FNV-1a 64-bit hash of a string (config fingerprint in the manifest).
std::uint64_t fnv1a64(const std::string& s);

}  // namespace locstat
