#include "locstat/ergodicity.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "locstat/errors.hpp"
#include "locstat/finite_chain.hpp"

namespace locstat {

namespace {

constexpr double kSlackTol = 1e-12;
constexpr double kFloor = 1e-12;     // distances below this count as coupled
constexpr double kFitFloor = 1e-9;   // fit only uses horizons above this

// States probed by the decay fit: everything when small, else largest-V.
std::vector<int> probe_states(const WeightFunction& V, int probe_cap) {
  const int m = V.size();
  std::vector<int> idx(m);
  std::iota(idx.begin(), idx.end(), 0);
  if (m <= probe_cap) return idx;
  std::partial_sort(idx.begin(), idx.begin() + probe_cap, idx.end(),
                    [&](int a, int b) { return V(a) > V(b); });
  idx.resize(probe_cap);
  return idx;
}

}  // namespace

DriftCheck check_drift(const TransitionKernel& P, const WeightFunction& V,
                       double lambda, double b) {
  if (P.size() != V.size())
    throw ContractViolation("check_drift: kernel/weight size mismatch");
  if (!(lambda > 0.0 && lambda < 1.0))
    throw ContractViolation("check_drift: lambda must lie in (0, 1)");
  if (b < 0.0) throw ContractViolation("check_drift: b must be >= 0");
  const Eigen::VectorXd pv = P.matrix() * V.v;
  DriftCheck out;
  out.lambda = lambda;
  out.b = b;
  out.worst_slack = -std::numeric_limits<double>::infinity();
  for (int x = 0; x < P.size(); ++x) {
    const double slack = pv(x) - lambda * V(x) - b;
    if (slack > out.worst_slack) {
      out.worst_slack = slack;
      out.worst_state = x;
    }
  }
  out.holds = out.worst_slack <= kSlackTol;
  return out;
}

DriftCheck graded_drift_check(const TransitionKernel& P,
                              const WeightFunction& V, double lambda, double b,
                              double rho) {
  if (!(rho > 0.0 && rho <= 1.0))
    throw ContractViolation("graded_drift_check: rho must lie in (0, 1]");
  WeightFunction graded(V.v.array().pow(rho).matrix(), V.name + "^rho");
  return check_drift(P, graded, std::pow(lambda, rho), std::pow(b, rho));
}

Minorization construct_minorization(const TransitionKernel& P,
                                    const WeightFunction& V, double r) {
  if (P.size() != V.size())
    throw ContractViolation("construct_minorization: size mismatch");
  Minorization out;
  out.r = r;
  for (int x = 0; x < V.size(); ++x)
    if (V(x) <= r) out.small_set.push_back(x);
  if (out.small_set.empty())
    throw NoMinorization("small set {V <= r} is empty at r = " +
                         std::to_string(r));
  const Eigen::MatrixXd& M = P.matrix();
  Eigen::RowVectorXd colmin = M.row(out.small_set.front());
  for (std::size_t i = 1; i < out.small_set.size(); ++i)
    colmin = colmin.cwiseMin(M.row(out.small_set[i]));
  out.eta = colmin.sum();
  if (out.eta <= kFloor) {
    std::ostringstream msg;
    msg << "no common component on the " << out.small_set.size()
        << "-state small set (eta = " << out.eta << ")";
    throw NoMinorization(msg.str());
  }
  out.nu = colmin / out.eta;
  return out;
}

DriftCertificate search_certificate(const TransitionKernel& P,
                                    const WeightFunction& V) {
  const Eigen::VectorXd pv = P.matrix() * V.v;
  DriftCertificate cert;
  for (int li = 1; li <= 19; ++li) {
    const double lambda = 0.05 * li;
    const double b =
        std::max(0.0, (pv - lambda * V.v).maxCoeff());
    // Radius strictly above 2b/(1-lambda); when b = 0 any nonempty sublevel
    // set works, so fall back to the full space.
    double r = 2.0 * b / (1.0 - lambda) * 1.05;
    if (r < V.v.minCoeff()) r = V.v.maxCoeff();
    try {
      Minorization minor = construct_minorization(P, V, r);
      cert.valid = true;
      cert.lambda = lambda;
      cert.b = b;
      cert.r = r;
      cert.minor = std::move(minor);
      return cert;
    } catch (const NoMinorization&) {
      continue;
    }
  }
  return cert;
}

TransitionKernel window_product(const KernelFamily& fam, double center,
                                double eps, int m) {
  if (m < 1) throw ContractViolation("window_product: m must be >= 1");
  if (eps < 0.0) throw ContractViolation("window_product: eps must be >= 0");
  Eigen::MatrixXd prod;
  for (int i = 0; i < m; ++i) {
    const double t = (m == 1) ? 0.0 : -1.0 + 2.0 * i / (m - 1);
    const double u = std::clamp(center + eps * t, 0.0, 1.0);
    const Eigen::MatrixXd Q = fam.eval(u).matrix();
    prod = (i == 0) ? Q : Eigen::MatrixXd(prod * Q);
  }
  return TransitionKernel(std::move(prod), 1e-11 * m);
}

DecayFit fit_geometric_decay(const TransitionKernel& P, const Measure& pi,
                             const WeightFunction& V, int max_n,
                             int probe_cap) {
  if (P.size() != V.size() || pi.size() != V.size())
    throw ContractViolation("fit_geometric_decay: size mismatch");
  if (max_n < 2)
    throw ContractViolation("fit_geometric_decay: need max_n >= 2");
  const std::vector<int> probes = probe_states(V, probe_cap);
  const int np = int(probes.size());
  const int m = P.size();

  // R holds the probe rows of P^n; start at n = 0 (delta rows).
  Eigen::MatrixXd R = Eigen::MatrixXd::Zero(np, m);
  for (int i = 0; i < np; ++i) R(i, probes[i]) = 1.0;

  DecayFit out;
  out.dbar.reserve(max_n);
  for (int n = 1; n <= max_n; ++n) {
    R = R * P.matrix();
    double worst = 0.0;
    for (int i = 0; i < np; ++i) {
      const double dist =
          ((R.row(i) - pi).cwiseAbs() * V.v)(0) / V(probes[i]);
      worst = std::max(worst, dist);
    }
    out.dbar.push_back(worst);
    if (worst <= kFloor) break;  // fully coupled; further horizons are noise
  }

  if (out.dbar.front() <= kFloor) {
    out.exactly_coupled = true;
    out.kappa_hat = 0.0;
    out.log_c = -std::numeric_limits<double>::infinity();
    return out;
  }

  // Least-squares line through (n, log dbar(n)).  Horizons below kFitFloor
  // are dropped: their relative rounding error would tilt the slope.
  int used = 0;
  double sn = 0, sl = 0, snn = 0, snl = 0;
  for (std::size_t i = 0; i < out.dbar.size(); ++i) {
    if (out.dbar[i] <= kFitFloor) break;
    const double n = double(i + 1), l = std::log(out.dbar[i]);
    sn += n;
    sl += l;
    snn += n * n;
    snl += n * l;
    ++used;
  }
  if (used < 2) {
    // Fewer than two horizons above the fit floor: the chain is coupled for
    // all practical purposes.  Report rate 0 and keep the raw distances.
    out.kappa_hat = 0.0;
    out.log_c = std::log(out.dbar.front());
    return out;
  }
  const double denom = used * snn - sn * sn;
  const double slope = (used * snl - sn * sl) / denom;
  out.kappa_hat = std::exp(slope);
  out.log_c = (sl - slope * sn) / used;
  return out;
}

namespace {

SweepPoint sweep_point(const KernelFamily& fam, double u, int max_n) {
  const TransitionKernel P = fam.eval(u);
  const Measure pi = invariant_measure(P);
  const WeightFunction& V = fam.weight(fam.order());
  SweepPoint pt;
  pt.u = u;
  pt.band = ergodicity_bound(P, pi, V);
  const DecayFit fit = fit_geometric_decay(P, pi, V, max_n);
  pt.kappa_hat = fit.kappa_hat;
  pt.exactly_coupled = fit.exactly_coupled;
  const DriftCertificate cert = search_certificate(P, V);
  pt.eta = cert.valid ? cert.minor.eta : 0.0;
  return pt;
}

}  // namespace

std::vector<SweepPoint> decay_sweep(const KernelFamily& fam, int grid,
                                    int max_n) {
  if (grid < 2) throw ContractViolation("decay_sweep: need grid >= 2");
  std::vector<SweepPoint> out(grid);
  std::exception_ptr err;
#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < grid; ++i) {
    try {
      out[i] = sweep_point(fam, double(i) / (grid - 1), max_n);
    } catch (...) {
#pragma omp critical
      if (!err) err = std::current_exception();
    }
  }
  if (err) std::rethrow_exception(err);
  return out;
}

std::vector<SweepPoint> decay_sweep_serial(const KernelFamily& fam, int grid,
                                           int max_n) {
  if (grid < 2) throw ContractViolation("decay_sweep: need grid >= 2");
  std::vector<SweepPoint> out(grid);
  for (int i = 0; i < grid; ++i)
    out[i] = sweep_point(fam, double(i) / (grid - 1), max_n);
  return out;
}

}  // namespace locstat
