// Serial-vs-OpenMP timing comparison for the hot kernels, with a bitwise
// equality check on each pair so the speedup numbers cannot drift away from
// correctness.
#include <chrono>
#include <cstdio>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "locstat/ergodicity.hpp"
#include "locstat/kernel_family.hpp"
#include "locstat/locpoly.hpp"
#include "locstat/measure.hpp"
#include "locstat/parallel.hpp"
#include "locstat/simulate.hpp"

using namespace locstat;
using clock_type = std::chrono::steady_clock;

namespace {

double ms_since(clock_type::time_point t0) {
  return std::chrono::duration<double, std::milli>(clock_type::now() - t0)
      .count();
}

void report(const std::string& name, double serial_ms, double parallel_ms,
            bool identical) {
  std::printf("%-28s serial %9.2f ms   parallel %9.2f ms   speedup %5.2fx   %s\n",
              name.c_str(), serial_ms, parallel_ms,
              parallel_ms > 0 ? serial_ms / parallel_ms : 0.0,
              identical ? "bitwise-equal" : "MISMATCH");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"serial vs OpenMP benchmark"};
  int threads = 0;
  double scale = 1.0;
  app.add_option("--threads", threads, "worker threads, 0 = auto");
  app.add_option("--scale", scale, "problem size multiplier")
      ->check(CLI::PositiveNumber);
  CLI11_PARSE(app, argc, argv);

  par::configure_threads(threads);
  std::printf("threads: %d\n\n", par::active_threads());

  {
    const int m = int(400 * scale);
    const KernelFamily fam = random_smooth_family(m, 3);
    const TransitionKernel P = fam.eval(0.4);
    const WeightFunction V = WeightFunction::ones(m);
    auto t0 = clock_type::now();
    const double s = dobrushin_coeff_serial(P, V);
    const double serial_ms = ms_since(t0);
    t0 = clock_type::now();
    const double p = dobrushin_coeff(P, V);
    report("dobrushin_coeff m=" + std::to_string(m), serial_ms, ms_since(t0),
           s == p);
  }

  {
    const int m = int(80 * scale);
    const KernelFamily fam = random_smooth_family(m, 11);
    auto t0 = clock_type::now();
    const std::vector<SweepPoint> s = decay_sweep_serial(fam, 33);
    const double serial_ms = ms_since(t0);
    t0 = clock_type::now();
    const std::vector<SweepPoint> p = decay_sweep(fam, 33);
    bool same = s.size() == p.size();
    for (std::size_t i = 0; same && i < s.size(); ++i)
      same = s[i].kappa_hat == p[i].kappa_hat && s[i].eta == p[i].eta;
    report("decay_sweep m=" + std::to_string(m), serial_ms, ms_since(t0),
           same);
  }

  {
    const KernelFamily fam = two_state_testbed();
    SimulationPlan plan;
    plan.n = int(4000 * scale);
    plan.replicates = int(512 * scale);
    plan.seed = 1;
    auto t0 = clock_type::now();
    const PathArray s = sample_triangular_finite_serial(fam, plan);
    const double serial_ms = ms_since(t0);
    plan.threads = threads;
    t0 = clock_type::now();
    const PathArray p = sample_triangular_finite(fam, plan);
    report("finite sampler n=" + std::to_string(plan.n), serial_ms,
           ms_since(t0), s.data == p.data);
  }

  {
    const KernelFamily fam = two_state_testbed();
    const Functional f = functional_indicator(1.0);
    LocPolyConfig lp;
    lp.k = 2;
    lp.bandwidth = 0.4;
    const std::vector<long long> ns = {400, 800, 1600};
    const int reps = int(300 * scale);
    auto t0 = clock_type::now();
    const VarianceSweep s = variance_sweep_serial(fam, f, 0.5, lp, ns, reps, 2);
    const double serial_ms = ms_since(t0);
    t0 = clock_type::now();
    const VarianceSweep p = variance_sweep(fam, f, 0.5, lp, ns, reps, 2);
    report("variance_sweep R=" + std::to_string(reps), serial_ms,
           ms_since(t0), s.slope == p.slope);
  }

  return 0;
}
