#pragma once
#include <cstdint>
#include <string>
#include <vector>

#include "locstat/kernel_family.hpp"
#include "locstat/models.hpp"

namespace locstat {

// Batch of triangular-array paths: X_t follows the kernel at u = t/n, so a
// path of length n sweeps the whole parameter interval.
struct SimulationPlan {
  int n = 1000;
  int replicates = 1;
  std::uint64_t seed = 1;
  int burn_in = -1;  // -1 = sampler default; finite families start exactly
  int threads = 0;   // 0 = runtime default (or LOCSTAT_THREADS)
};

struct PathArray {
  int n = 0;
  int replicates = 0;
  std::vector<double> data;  // row-major, replicates x (n+1)

  double& at(int r, int t) { return data[std::size_t(r) * (n + 1) + t]; }
  double at(int r, int t) const { return data[std::size_t(r) * (n + 1) + t]; }
};

// Finite-state triangular sampler.  X_0 is an exact draw from the invariant
// law at u = 0 (no burn-in needed); step t draws from the kernel at t/n.
// Every variate is addressed by (seed, replicate, t), which makes the
// parallel version bit-identical to the serial reference.
PathArray sample_triangular_finite(const KernelFamily& fam,
                                   const SimulationPlan& plan);
PathArray sample_triangular_finite_serial(const KernelFamily& fam,
                                          const SimulationPlan& plan);

// Native sampler for continuous / unbounded models.  When the sampler has no
// exact initial law the start is warmed up with `burn_in` steps at u = 0 on a
// dedicated stream.
PathArray sample_triangular_native(const ModelSampler& sampler,
                                   const SimulationPlan& plan);
PathArray sample_triangular_native_serial(const ModelSampler& sampler,
                                          const SimulationPlan& plan);

// Constant-u chain started from its invariant law (diagnostics and decay
// estimation).
PathArray sample_stationary_chain(const KernelFamily& fam, double u,
                                  const SimulationPlan& plan);

// One row per replicate, full double precision.
void write_paths_csv(const PathArray& paths, const std::string& file);

// Binary layout: magic "LSMC1", u32 path length n, u32 replicate count, then
// row-major payload: i64 when integer_states (counts are stored exactly),
// f64 otherwise.  Byte order is the host's (little-endian everywhere we
// run).
void write_paths_binary(const PathArray& paths, const std::string& file,
                        bool integer_states);

}  // namespace locstat
