#pragma once
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "locstat/kernel_family.hpp"
#include "locstat/rng.hpp"

namespace locstat {

// ---------------------------------------------------------------------------
// Noise densities for autoregressions: standardized density, its first three
// argument derivatives in closed form, and a sampler.
// ---------------------------------------------------------------------------
struct NoiseDensity {
  enum class Type { Gaussian, StudentT, Logistic };
  Type type = Type::Gaussian;
  double nu = 5.0;  // StudentT degrees of freedom

  double pdf_deriv(double z, int s) const;
  double pdf(double z) const { return pdf_deriv(z, 0); }
  double sample(RngStream& g) const;
  std::string name() const;
};

// Numeric check that int |y|^p |f^(s)(y)| dy is finite: composite quadrature
// over doubling tail segments; the integral is declared finite when the
// segment contributions decay geometrically.
struct MomentCheck {
  double p = 0.0;
  int s = 0;
  bool finite = false;
  double value = 0.0;       // accumulated integral (meaningful when finite)
  double tail_ratio = 0.0;  // last two tail segments' ratio
};
MomentCheck noise_moment_check(const NoiseDensity& f, double p, int s);

// ---------------------------------------------------------------------------
// pmf bundles on {0..N}: probability rows together with their parameter
// derivatives.  Entries are exact on 0..N; any mass beyond N is NOT stored
// here -- kernel rows fold it into the top state at finalization, which keeps
// rows exactly stochastic and derivative rows exactly zero-sum.
// ---------------------------------------------------------------------------
struct PmfBundle {
  Eigen::MatrixXd rows;  // (order+1) x (N+1); rows(ell, j) = d^ell p_j / du^ell
  int order() const { return int(rows.rows()) - 1; }
  int top() const { return int(rows.cols()) - 1; }
};

PmfBundle poisson_pmf_bundle(const Jet& lambda, int N, int order);
// Binomial(count, alpha(u)) by count-fold convolution of the two-point pmf.
PmfBundle binomial_pmf_bundle(const Jet& alpha, int count, int N, int order);
// Truncated convolution with the Leibniz rule across derivative orders.
PmfBundle conv_truncated(const PmfBundle& a, const PmfBundle& b);
// Fold the missing tail mass into the top state: the probability row then
// sums to exactly 1 and every derivative row to exactly 0.  Returns the
// absorbed probability mass.
double fold_tail_into_top(PmfBundle& pmf);

// ---------------------------------------------------------------------------
// TvAR / SETAR: X_t = m(u, lags) + sigma(u) eps_t, discretized to a grid.
// ---------------------------------------------------------------------------
struct TvarMean {
  enum class Type { Linear, Setar };
  Type type = Type::Linear;
  std::vector<ScalarCurve> a;  // Linear: coefficient of lag i+1
  ScalarCurve a_plus, a_minus; // Setar (one lag): slopes on x>0 / x<0

  int lag_order() const { return type == Type::Linear ? int(a.size()) : 1; }
  // lags[i] = value of lag i+1 (most recent first).
  Jet jet(double u, const std::vector<double>& lags) const;
  double value(double u, const std::vector<double>& lags) const;
  double slope_bound(double u) const;  // sum_i |a_i(u)| resp. max(|a+|,|a-|)
};

struct DiscretizerSpec {
  double L = 10.0;           // grid covers [-L, L]
  int bins = 201;            // node count (odd keeps 0 on the grid)
  double absorption_tol = 1e-6;
};

struct TvarConfig {
  TvarMean mean;
  ScalarCurve sigma = ScalarCurve::constant(1.0);
  NoiseDensity noise;
  DiscretizerSpec disc;
  int k = 3;          // derivative order carried (> 3 is rejected)
  double d0 = 4.0;    // top weight exponent: V_s = (1+|x|)^{d1 + q s}
  double qprime = 1.0;
};

// Discretized kernel family with analytic parameter-derivative bundles.
// Build-time validation: contraction sum < 1 (grid over u), sigma bounded
// away from 0, noise moments finite for every carried order; evaluation
// raises TruncationTooCoarse when a row absorbs more than absorption_tol.
KernelFamily build_tvar(const TvarConfig& cfg);

// ---------------------------------------------------------------------------
// INAR(p): X_t = sum_i thin_i(u) o X_{t-i} + imm(u); INARCH is the
// all-Poisson special case.
// ---------------------------------------------------------------------------
struct ThinningSpec {
  enum class Type { Bernoulli, Poisson };
  Type type = Type::Bernoulli;
  ScalarCurve coeff;  // alpha_i(u)
};

struct InarConfig {
  int p = 1;
  std::vector<ThinningSpec> thinning;  // size p
  ScalarCurve immigration_mean;        // Poisson immigration
  int truncation_N = 0;                // 0 = choose automatically
  int k = 3;
  double d1 = 1.0;   // V_s(x) = (1+x)^{d1+s}
  double loss_tol = 1e-8;
};

// Smallest truncation whose worst-row tail and stationary top-state mass are
// negligible (<= loss_tol resp. 1e-9).
int suggest_truncation(const InarConfig& cfg);
KernelFamily build_inar(const InarConfig& cfg);

struct InarchConfig {
  ScalarCurve alpha0;
  std::vector<ScalarCurve> alpha;  // lag coefficients
  int truncation_N = 0;
  int k = 3;
  double d1 = 1.0;
  double loss_tol = 1e-8;
};
KernelFamily build_inarch(const InarchConfig& cfg);
// Closed-form row: Poisson(alpha0(u) + sum alpha_i(u) x_i), same truncation
// closure.  The convolution build must match this entrywise (exactness test).
PmfBundle inarch_direct_row(const InarchConfig& cfg, double u,
                            const std::vector<int>& lags, int order);

// ---------------------------------------------------------------------------
// Doeblin family: Q_u(x, dy) = f(u,x,y) mu(dy) with a density floor.
// ---------------------------------------------------------------------------
struct DoeblinConfig {
  Eigen::VectorXd base_measure;  // mu, strictly positive, sums to 1
  Eigen::MatrixXd g;             // perturbation shape, mu-centered rows
  double amplitude = 0.3;        // f = 1 + amplitude sin(2 pi u) g(x,y)
  int k = 3;
};
// Center g rows so that sum_y g(x,y) mu(y) = 0 (required for stochasticity).
Eigen::MatrixXd center_rows(Eigen::MatrixXd g, const Eigen::VectorXd& mu);
double doeblin_density_floor(const DoeblinConfig& cfg);  // analytic c_minus
KernelFamily build_doeblin(const DoeblinConfig& cfg);

// ---------------------------------------------------------------------------
// Random-environment logistic autoregression on {0,1} x (env grid): the
// binary coordinate flips with probability sigmoid(a0(u) + a1(u) y +
// beta(u) z); the environment z follows a discretized stationary AR(1)
// (u-independent, exact Gaussian cell probabilities via erf).
// ---------------------------------------------------------------------------
struct RandomEnvConfig {
  ScalarCurve a0, a1, beta;
  double env_rho = 0.5;
  double env_sigma = 1.0;
  int env_bins = 21;
  double env_L = 4.0;
  int k = 3;
};
KernelFamily build_random_env(const RandomEnvConfig& cfg);

// ---------------------------------------------------------------------------
// p-order row families: rows indexed by lag tuples (x_1..x_p) with x_p the
// most recent (least significant digit), columns by the next scalar state.
// p_order_vectorize turns them into an ordinary family on the tuple space by
// shift-and-append, with coordinate-sum weights.
// ---------------------------------------------------------------------------
struct POrderFamily {
  StateSpace base;
  int p = 1;
  int order_k = 3;
  // (u, order) -> [R, dR/du, ...], each m^p x m.
  std::function<std::vector<Eigen::MatrixXd>(double, int)> rows;
  std::vector<WeightFunction> base_weights;  // per grade, on the scalar space
  double row_tol = 1e-12;
};
KernelFamily p_order_vectorize(const POrderFamily& pf,
                               std::size_t cap = 1000000);

// ---------------------------------------------------------------------------
// Standing-condition report: drift/minorization feasibility on eps-window
// kernel products plus the graded derivative-operator norm table.
// ---------------------------------------------------------------------------
struct ConditionCheck {
  std::string name;
  bool pass = false;
  double value = 0.0;
  double threshold = 0.0;
  std::string detail;
};
struct ConditionReport {
  std::vector<ConditionCheck> checks;
  bool all_pass = true;
};
ConditionReport sc_condition_report(const KernelFamily& fam, int window_m = 1,
                                    double eps = 0.1, int u_samples = 9);

// Weight exp(kappa_prime |x|) over the scalar embedding (exponential-drift
// regime for light-tailed autoregressions).
WeightFunction exp_weight(const StateSpace& space, double kappa_prime);

// ---------------------------------------------------------------------------
// Native path samplers (continuous / unbounded state, for Monte Carlo).
// ---------------------------------------------------------------------------
struct ModelSampler {
  int lag_order = 1;
  bool integer_states = false;
  int default_burn_in = 0;  // 0 means the initial draw is already stationary
  // Initial lag vector (most recent last) and one transition step.
  std::function<std::vector<double>(RngStream&)> initial;
  std::function<double(const std::vector<double>& lags, double u, RngStream&)>
      step;  // lags[0] = most recent
};
ModelSampler tvar_sampler(const TvarConfig& cfg);
ModelSampler inar_sampler(const InarConfig& cfg);
ModelSampler inarch_sampler(const InarchConfig& cfg);

}  // namespace locstat
