#pragma once
// Local polynomial estimation of parameter curves psi_f(u) = integral of f
// against the j-dimensional stationary law at u, from triangular-array data,
// plus bias / variance sweep harnesses that measure the approximation orders
// (bias ~ b^k on smooth curves, variance ~ 1/(n b)).

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "locstat/finite_chain.hpp"
#include "locstat/kernel_family.hpp"
#include "locstat/simulate.hpp"

namespace locstat {

// Smoothing kernels: symmetric probability densities supported on [-1, 1].
enum class SmoothingKernel { Epanechnikov, Triangular, Uniform };

double kernel_value(SmoothingKernel K, double t);
double kernel_integral(SmoothingKernel K);  // numeric check, should be 1
std::string kernel_name(SmoothingKernel K);

// Test functional on embedded j-tuples; |f| should be dominated by the
// family's weight so the target curve is finite.
struct Functional {
  std::string name;
  std::function<double(const std::vector<double>&)> apply;
};

Functional functional_mean();                  // x_1
Functional functional_product();               // x_1 * ... * x_j
Functional functional_power(double p);         // |x_1|^p
Functional functional_indicator(double value); // 1{x_1 == value} (1e-9 slack)

// Exact target psi_f(u) from the j-dimensional stationary law.
double exact_curve_value(const KernelFamily& fam, const Functional& f, int j,
                         double u);

struct LocPolyConfig {
  int k = 3;               // polynomial order; the fit has degree k - 1
  double bandwidth = 0.1;  // b in (0, 1)
  SmoothingKernel kernel = SmoothingKernel::Epanechnikov;
  int j = 1;               // block length of the functional

  // Throws ContractViolation on hard errors (k < 1, b outside (0,1), j < 1,
  // kernel mass off by more than 1e-10); returns soft warnings, currently
  // "bandwidth * n < 2k" (too few expected design points in the window).
  std::vector<std::string> validate(long long n) const;
};

// v_t(u) = (1, s, s^2/2!, ..., s^{k-1}/(k-1)!) with s = (t/n - u)/b.
Eigen::VectorXd design_row(long long t, long long n, double u, double b,
                           int k);

// Weighted least-squares fit around u.  h_hat solves D h = nhat where
//   D    = (1/N) sum_t K_b(t/n - u) v_t v_t',
//   nhat = (1/N) sum_t K_b(t/n - u) v_t y_t,
// N = data.size().  h_hat stacks (psi, b psi', ..., b^{k-1} psi^(k-1)); the
// ell-th derivative estimate is h_hat[ell] / b^ell.
struct LocPolyFit {
  double u = 0;
  double bandwidth = 0;
  Eigen::VectorXd h_hat;
  Eigen::MatrixXd design;
  Eigen::VectorXd nhat;
  double condition_number = 0;
  int active_points = 0;    // design points with positive kernel weight
  bool ill_conditioned = false;  // ridge fallback engaged (cond > 1e10)
  bool boundary = false;         // [u - b, u + b] leaves [0, 1]

  double psi() const { return h_hat(0); }
  double deriv(int ell) const;
};

// Throws DesignSingular when fewer than k points carry positive weight or the
// design matrix is numerically singular; a condition number above 1e10 only
// sets ill_conditioned and adds 1e-12 to the diagonal before solving.
LocPolyFit fit_local_poly(
    const std::vector<std::pair<long long, double>>& data, long long n,
    double u, const LocPolyConfig& cfg);

// y_t = f(x_{t-j+1}, ..., x_t) for t = j..n from a path x_0..x_n of embedded
// values; n - j + 1 block observations, matching the estimator's count.
std::vector<std::pair<long long, double>> block_series(
    const std::vector<double>& path, int j, const Functional& f);

// Row r of a path array as a plain series.
std::vector<double> replicate_series(const PathArray& paths, int r);

// Noiseless bias sweep: data y_t = psi_f(t/n) computed exactly, so the
// measured error is pure approximation bias.  Two errors are tracked per b:
// the first component |psi_hat - psi_f(u)| and the full-vector error
// max_i |h_hat[i] - b^i psi_f^(i)(u)| against exact derivative targets.  The
// vector error decays like b^k for every k; the first component alone
// superconverges for even fit degrees (symmetric designs kill its leading
// term), which is why both slopes are reported.  Rows below the 1e-13 floor
// are excluded from the slope fits; `exact` is set when every error is at
// most 1e-12 (polynomial regime).
struct BiasRow {
  double b = 0;
  double bias = 0;         // first component only
  double vector_bias = 0;  // worst component of h_hat
};
struct BiasSweep {
  std::vector<BiasRow> rows;
  double slope = 0;         // log bias vs log b over the rows above the floor
  double vector_slope = 0;  // same for the vector error
  int used = 0;             // rows entering the scalar fit
  int vector_used = 0;
  bool exact = false;
};
BiasSweep bias_sweep(const KernelFamily& fam, const Functional& f, int j,
                     double u, int k, const std::vector<double>& b_list,
                     long long n);

// Monte Carlo variance of psi_hat(u) across replicates for each n, with the
// bandwidth scaled as b_n = b_0 (n_0/n)^(1/5).  The slope is fitted against
// log(n b_n) and should be near -1.  The parallel version distributes the
// per-replicate fits over OpenMP threads; estimates and variances agree with
// the serial twin bit for bit.
struct VarianceRow {
  long long n = 0;
  double b = 0;
  double variance = 0;
  std::vector<double> estimates;
};
struct VarianceSweep {
  std::vector<VarianceRow> rows;
  double slope = 0;
};
VarianceSweep variance_sweep(const KernelFamily& fam, const Functional& f,
                             double u, const LocPolyConfig& cfg,
                             const std::vector<long long>& n_list,
                             int replicates, std::uint64_t seed);
VarianceSweep variance_sweep_serial(const KernelFamily& fam,
                                    const Functional& f, double u,
                                    const LocPolyConfig& cfg,
                                    const std::vector<long long>& n_list,
                                    int replicates, std::uint64_t seed);

// Jackknife estimate of the variance of the sample-variance statistic;
// doubling the number of replicates should roughly halve it.
double jackknife_variance_of_variance(const std::vector<double>& estimates);

// Local covariance estimate cov(X_0(u), X_1(u)) along a u-grid from one path:
// product fit minus the product of two marginal mean fits, with the exact
// curve (from the 2-dimensional stationary law) overlaid for comparison.
struct CovariancePoint {
  double u = 0;
  double estimate = 0;
  double exact = 0;
  bool boundary = false;
};
std::vector<CovariancePoint> covariance_curve(const KernelFamily& fam,
                                              const std::vector<double>& u_grid,
                                              const LocPolyConfig& cfg,
                                              const std::vector<double>& path);

}  // namespace locstat
