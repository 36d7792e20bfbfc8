#pragma once
// Drift / minorization certificates and geometric decay-rate diagnostics for
// finite-state kernels and slowly varying kernel families.

#include <vector>

#include "locstat/kernel_family.hpp"
#include "locstat/measure.hpp"

namespace locstat {

// Result of verifying the one-step drift inequality (PV)(x) <= lambda V(x) + b
// at every state.  worst_slack = max_x ((PV)(x) - lambda V(x) - b); the
// inequality holds iff worst_slack <= 1e-12 (tolerance absorbs rounding).
struct DriftCheck {
  bool holds = false;
  double lambda = 0;
  double b = 0;
  double worst_slack = 0;
  int worst_state = -1;
};

DriftCheck check_drift(const TransitionKernel& P, const WeightFunction& V,
                       double lambda, double b);

// Jensen transfer: a drift pair (lambda, b) for V induces (lambda^rho, b^rho)
// for V^rho when 0 < rho <= 1.  Verifies the graded inequality directly.
DriftCheck graded_drift_check(const TransitionKernel& P,
                              const WeightFunction& V, double lambda, double b,
                              double rho);

// Minorization on the sublevel set C = {V <= r}:
//   P(x, .) >= eta * nu(.)  for every x in C,
// with eta = sum_y min_{x in C} P(x, y) and nu the normalized column minimum.
// Throws NoMinorization when C is empty or eta vanishes.
struct Minorization {
  double eta = 0;
  Measure nu;
  std::vector<int> small_set;
  double r = 0;
};

Minorization construct_minorization(const TransitionKernel& P,
                                    const WeightFunction& V, double r);

// Full geometric-ergodicity certificate: drift pair (lambda, b), small-set
// radius r > 2b / (1 - lambda), and a positive minorization on {V <= r}.
struct DriftCertificate {
  bool valid = false;
  double lambda = 0;
  double b = 0;
  double r = 0;
  Minorization minor;
};

// Scans lambda over 0.05, 0.10, ..., 0.95; for each takes the smallest
// feasible b = max(0, max_x((PV)(x) - lambda V(x))) and the radius
// r = 2b/(1-lambda) * 1.05 (floored at max V when b = 0 so C is never empty),
// and returns the first lambda whose small set carries a positive
// minorization.  valid == false when no grid point works.
DriftCertificate search_certificate(const TransitionKernel& P,
                                    const WeightFunction& V);

// Product Q_{u_1} ... Q_{u_m} with the u_i equally spaced across
// [center - eps, center + eps], clipped to [0, 1]; m = 1 gives Q_center.
TransitionKernel window_product(const KernelFamily& fam, double center,
                                double eps, int m);

// Geometric decay of dbar(n) = max_x ||delta_x P^n - pi||_V / V(x) over a
// probe set (all states when the space has at most probe_cap of them,
// otherwise the probe_cap states of largest V).  kappa_hat is exp of the
// least-squares slope of log dbar(n) against n over the horizons above the
// numerical floor; exactly_coupled is set when dbar(1) is already at the
// floor (one-step coupling), in which case kappa_hat = 0.
struct DecayFit {
  double kappa_hat = 0;
  double log_c = 0;          // fitted intercept, log dbar(n) ~ log_c + n log kappa
  std::vector<double> dbar;  // dbar[i] is the distance at horizon i + 1
  bool exactly_coupled = false;
};

DecayFit fit_geometric_decay(const TransitionKernel& P, const Measure& pi,
                             const WeightFunction& V, int max_n = 24,
                             int probe_cap = 64);

// Certificate + decay fit for each of `grid` equally spaced u's in [0, 1],
// using the family's strongest weight.  Grid points are independent, and the
// parallel version computes each one exactly as the serial twin does, so the
// two agree bit for bit.
struct SweepPoint {
  double u = 0;
  double kappa_hat = 0;
  double band = 0;  // sup_x ||delta_x Q_u - pi_u||_V / V(x)
  double eta = 0;   // minorization constant from the per-u certificate (0 if none)
  bool exactly_coupled = false;
};

std::vector<SweepPoint> decay_sweep(const KernelFamily& fam, int grid,
                                    int max_n = 24);
std::vector<SweepPoint> decay_sweep_serial(const KernelFamily& fam, int grid,
                                           int max_n = 24);

}  // namespace locstat
