#include "locstat/simulate.hpp"

#include <fstream>
#include <iomanip>

#include "locstat/finite_chain.hpp"
#include "locstat/parallel.hpp"
#include "locstat/rng.hpp"

namespace locstat {
namespace {

void check_plan(const SimulationPlan& plan) {
  if (plan.n < 1) throw ContractViolation("simulate: n must be >= 1");
  if (plan.replicates < 1)
    throw ContractViolation("simulate: need at least one replicate");
}

PathArray make_array(const SimulationPlan& plan) {
  PathArray out;
  out.n = plan.n;
  out.replicates = plan.replicates;
  out.data.assign(std::size_t(plan.replicates) * (plan.n + 1), 0.0);
  return out;
}

// Shared core: the kernel for step t is produced once and reused by every
// replicate; with `parallel` the replicate loop is split over threads.  The
// draw for (r, t) never depends on schedule, so both modes agree bitwise.
PathArray finite_paths(const KernelFamily& fam, const Measure& start,
                       const SimulationPlan& plan,
                       const std::vector<Eigen::MatrixXd>& kernels_t,
                       bool parallel) {
  const int m = fam.space().size();
  PathArray out = make_array(plan);
  std::vector<double> pi0v(start.data(), start.data() + start.size());
  std::exception_ptr err = nullptr;

#pragma omp parallel for schedule(static) if (parallel)
  for (int r = 0; r < plan.replicates; ++r) {
    try {
      RngStream g0(plan.seed, std::uint32_t(r), 0);
      int x = draw_categorical(g0, pi0v.data(), m);
      out.at(r, 0) = fam.space().value(x);
      for (int t = 1; t <= plan.n; ++t) {
        RngStream g(plan.seed, std::uint32_t(r), std::uint32_t(t));
        // kernels_t[t] is stored transposed: column x is the pmf of row x.
        x = draw_categorical(g, kernels_t[t].col(x).data(), m);
        out.at(r, t) = fam.space().value(x);
      }
    } catch (...) {
#pragma omp critical
      if (!err) err = std::current_exception();
    }
  }
  if (err) std::rethrow_exception(err);
  return out;
}

std::vector<Eigen::MatrixXd> triangular_kernels(const KernelFamily& fam,
                                                int n) {
  std::vector<Eigen::MatrixXd> ks(n + 1);
  ks[0] = fam.eval(0.0).matrix().transpose();
  for (int t = 1; t <= n; ++t)
    ks[t] = fam.eval(double(t) / double(n)).matrix().transpose();
  return ks;
}

PathArray native_paths(const ModelSampler& sampler,
                       const SimulationPlan& plan, bool parallel) {
  const int p = sampler.lag_order;
  if (p < 1) throw ContractViolation("simulate: sampler lag order < 1");
  const int burn =
      plan.burn_in >= 0 ? plan.burn_in : sampler.default_burn_in;
  {
    // Validate the initial law before entering the parallel region; the
    // stream is re-created identically inside, so no draws are wasted.
    RngStream probe(plan.seed, 0, 0);
    if (int(sampler.initial(probe).size()) != p)
      throw ContractViolation("simulate: initial lag vector has wrong size");
  }
  PathArray out = make_array(plan);
  std::exception_ptr err = nullptr;

#pragma omp parallel for schedule(static) if (parallel)
  for (int r = 0; r < plan.replicates; ++r) {
    try {
      RngStream ginit(plan.seed, std::uint32_t(r), 0);
      std::vector<double> lags = sampler.initial(ginit);
      {
        // Warm-up at u = 0 on its own stream (tag 1), one stream for the
        // whole burn-in so rejection samplers can take what they need.
        RngStream gburn(plan.seed, std::uint32_t(r), 0, 1);
        for (int b = 0; b < burn; ++b) {
          const double x = sampler.step(lags, 0.0, gburn);
          for (int i = p - 1; i > 0; --i) lags[i] = lags[i - 1];
          lags[0] = x;
        }
      }
      out.at(r, 0) = lags[0];
      for (int t = 1; t <= plan.n; ++t) {
        RngStream g(plan.seed, std::uint32_t(r), std::uint32_t(t));
        const double x = sampler.step(lags, double(t) / double(plan.n), g);
        for (int i = p - 1; i > 0; --i) lags[i] = lags[i - 1];
        lags[0] = x;
        out.at(r, t) = x;
      }
    } catch (...) {
#pragma omp critical
      if (!err) err = std::current_exception();
    }
  }
  if (err) std::rethrow_exception(err);
  return out;
}

}  // namespace

PathArray sample_triangular_finite(const KernelFamily& fam,
                                   const SimulationPlan& plan) {
  check_plan(plan);
  par::configure_threads(plan.threads);
  const Measure pi0 = invariant_measure(fam.eval(0.0));
  return finite_paths(fam, pi0, plan, triangular_kernels(fam, plan.n), true);
}

PathArray sample_triangular_finite_serial(const KernelFamily& fam,
                                          const SimulationPlan& plan) {
  check_plan(plan);
  const Measure pi0 = invariant_measure(fam.eval(0.0));
  return finite_paths(fam, pi0, plan, triangular_kernels(fam, plan.n), false);
}

PathArray sample_triangular_native(const ModelSampler& sampler,
                                   const SimulationPlan& plan) {
  check_plan(plan);
  par::configure_threads(plan.threads);
  return native_paths(sampler, plan, true);
}

PathArray sample_triangular_native_serial(const ModelSampler& sampler,
                                          const SimulationPlan& plan) {
  check_plan(plan);
  return native_paths(sampler, plan, false);
}

PathArray sample_stationary_chain(const KernelFamily& fam, double u,
                                  const SimulationPlan& plan) {
  check_plan(plan);
  par::configure_threads(plan.threads);
  // Constant kernel at every step; reuse the triangular core.
  const TransitionKernel P = fam.eval(u);
  const Measure pi = invariant_measure(P);
  std::vector<Eigen::MatrixXd> ks(plan.n + 1, P.matrix().transpose());
  return finite_paths(fam, pi, plan, ks, true);
}

void write_paths_csv(const PathArray& paths, const std::string& file) {
  std::ofstream os(file);
  if (!os) throw ContractViolation("write_paths_csv: cannot open " + file);
  os << std::setprecision(17);
  for (int r = 0; r < paths.replicates; ++r) {
    for (int t = 0; t <= paths.n; ++t) {
      if (t) os << ',';
      os << paths.at(r, t);
    }
    os << '\n';
  }
  if (!os) throw ContractViolation("write_paths_csv: write failed");
}

void write_paths_binary(const PathArray& paths, const std::string& file,
                        bool integer_states) {
  std::ofstream os(file, std::ios::binary);
  if (!os) throw ContractViolation("write_paths_binary: cannot open " + file);
  os.write("LSMC1", 5);
  const std::uint32_t n = std::uint32_t(paths.n);
  const std::uint32_t reps = std::uint32_t(paths.replicates);
  os.write(reinterpret_cast<const char*>(&n), 4);
  os.write(reinterpret_cast<const char*>(&reps), 4);
  if (integer_states) {
    std::vector<std::int64_t> row(paths.n + 1);
    for (int r = 0; r < paths.replicates; ++r) {
      for (int t = 0; t <= paths.n; ++t)
        row[t] = std::int64_t(std::llround(paths.at(r, t)));
      os.write(reinterpret_cast<const char*>(row.data()),
               std::streamsize(row.size() * sizeof(std::int64_t)));
    }
  } else {
    os.write(reinterpret_cast<const char*>(paths.data.data()),
             std::streamsize(paths.data.size() * sizeof(double)));
  }
  if (!os) throw ContractViolation("write_paths_binary: write failed");
}

}  // namespace locstat
