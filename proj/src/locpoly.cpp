#include "locstat/locpoly.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "locstat/errors.hpp"

namespace locstat {

namespace {

constexpr double kCondCap = 1e10;
constexpr double kRidge = 1e-12;
constexpr double kBiasFloor = 1e-13;
constexpr double kExactBias = 1e-12;

// 5-point Gauss-Legendre nodes/weights on [-1, 1] (panelized below).
constexpr double kGx[5] = {-0.9061798459386640, -0.5384693101056831, 0.0,
                           0.5384693101056831, 0.9061798459386640};
constexpr double kGw[5] = {0.2369268850561891, 0.4786286704993665,
                           0.5688888888888889, 0.4786286704993665,
                           0.2369268850561891};

double ls_slope(const std::vector<double>& xs, const std::vector<double>& ys) {
  const int n = int(xs.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (int i = 0; i < n; ++i) {
    sx += xs[i];
    sy += ys[i];
    sxx += xs[i] * xs[i];
    sxy += xs[i] * ys[i];
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace

double kernel_value(SmoothingKernel K, double t) {
  const double a = std::abs(t);
  if (a > 1.0) return 0.0;
  switch (K) {
    case SmoothingKernel::Epanechnikov:
      return 0.75 * (1.0 - t * t);
    case SmoothingKernel::Triangular:
      return 1.0 - a;
    case SmoothingKernel::Uniform:
      return 0.5;
  }
  return 0.0;
}

double kernel_integral(SmoothingKernel K) {
  // 8 panels split at 0, so the triangular kink sits on a panel boundary;
  // 5-point Gauss is exact for these piecewise polynomials.
  double total = 0.0;
  for (int p = 0; p < 8; ++p) {
    const double lo = -1.0 + 0.25 * p, half = 0.125;
    for (int g = 0; g < 5; ++g)
      total += half * kGw[g] * kernel_value(K, lo + half * (1.0 + kGx[g]));
  }
  return total;
}

std::string kernel_name(SmoothingKernel K) {
  switch (K) {
    case SmoothingKernel::Epanechnikov:
      return "epanechnikov";
    case SmoothingKernel::Triangular:
      return "triangular";
    case SmoothingKernel::Uniform:
      return "uniform";
  }
  return "?";
}

Functional functional_mean() {
  return {"mean", [](const std::vector<double>& x) { return x[0]; }};
}

Functional functional_product() {
  return {"product", [](const std::vector<double>& x) {
            double p = 1.0;
            for (double xi : x) p *= xi;
            return p;
          }};
}

Functional functional_power(double p) {
  std::ostringstream name;
  name << "power:" << p;
  return {name.str(), [p](const std::vector<double>& x) {
            return std::pow(std::abs(x[0]), p);
          }};
}

Functional functional_indicator(double value) {
  std::ostringstream name;
  name << "indicator:" << value;
  return {name.str(), [value](const std::vector<double>& x) {
            return std::abs(x[0] - value) < 1e-9 ? 1.0 : 0.0;
          }};
}

double exact_curve_value(const KernelFamily& fam, const Functional& f, int j,
                         double u) {
  const ProductLaw pl = j_dim_law(fam, u, j);
  double s = 0.0;
  for (int z = 0; z < pl.space.size(); ++z)
    s += f.apply(pl.space.points[z]) * pl.law(z);
  return s;
}

std::vector<std::string> LocPolyConfig::validate(long long n) const {
  if (k < 1) throw ContractViolation("LocPolyConfig: k must be >= 1");
  if (!(bandwidth > 0.0 && bandwidth < 1.0))
    throw ContractViolation("LocPolyConfig: bandwidth must lie in (0, 1)");
  if (j < 1) throw ContractViolation("LocPolyConfig: j must be >= 1");
  if (n < 1) throw ContractViolation("LocPolyConfig: n must be >= 1");
  if (std::abs(kernel_integral(kernel) - 1.0) > 1e-10)
    throw ContractViolation("LocPolyConfig: kernel mass differs from 1");
  std::vector<std::string> warnings;
  if (bandwidth * double(n) < 2.0 * k) {
    std::ostringstream w;
    w << "LocPolyConfig invariant: bandwidth * n = " << bandwidth * double(n)
      << " < 2k = " << 2 * k << " -- too few design points in the window";
    warnings.push_back(w.str());
  }
  return warnings;
}

Eigen::VectorXd design_row(long long t, long long n, double u, double b,
                           int k) {
  if (t < 1 || t > n) throw ContractViolation("design_row: require 1 <= t <= n");
  const double s = (double(t) / double(n) - u) / b;
  Eigen::VectorXd v(k);
  v(0) = 1.0;
  for (int i = 1; i < k; ++i) v(i) = v(i - 1) * s / i;
  return v;
}

double LocPolyFit::deriv(int ell) const {
  if (ell < 0 || ell >= h_hat.size())
    throw ContractViolation("LocPolyFit: derivative order out of range");
  return h_hat(ell) / std::pow(bandwidth, ell);
}

LocPolyFit fit_local_poly(
    const std::vector<std::pair<long long, double>>& data, long long n,
    double u, const LocPolyConfig& cfg) {
  cfg.validate(n);  // hard errors only; window-size warnings are the caller's
  if (!(u >= 0.0 && u <= 1.0))
    throw ContractViolation("fit_local_poly: u must lie in [0, 1]");
  if (data.empty()) throw ContractViolation("fit_local_poly: no data");

  const int k = cfg.k;
  const double b = cfg.bandwidth;
  Eigen::MatrixXd D = Eigen::MatrixXd::Zero(k, k);
  Eigen::VectorXd nh = Eigen::VectorXd::Zero(k);
  int active = 0;
  for (const auto& [t, y] : data) {
    const double w =
        kernel_value(cfg.kernel, (double(t) / double(n) - u) / b) / b;
    if (w <= 0.0) continue;
    const Eigen::VectorXd v = design_row(t, n, u, b, k);
    D.noalias() += w * v * v.transpose();
    nh.noalias() += (w * y) * v;
    ++active;
  }
  if (active < k) {
    std::ostringstream msg;
    msg << "design has " << active << " active points for " << k
        << " coefficients (bandwidth too small for n)";
    throw DesignSingular(msg.str());
  }
  const double N = double(data.size());
  D /= N;
  nh /= N;

  LocPolyFit fit;
  fit.u = u;
  fit.bandwidth = b;
  fit.design = D;
  fit.nhat = nh;
  fit.active_points = active;
  fit.boundary = (u - b < 0.0) || (u + b > 1.0);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(D);
  const double lmax = es.eigenvalues().maxCoeff();
  const double lmin = es.eigenvalues().minCoeff();
  if (!(lmin > lmax * 1e-15))
    throw DesignSingular("design matrix is numerically singular");
  fit.condition_number = lmax / lmin;

  Eigen::MatrixXd solved = D;
  if (fit.condition_number > kCondCap) {
    fit.ill_conditioned = true;
    solved.diagonal().array() += kRidge;
  }
  fit.h_hat = solved.ldlt().solve(nh);
  const double resid = (solved * fit.h_hat - nh).norm();
  if (resid > 1e-10 * nh.norm() + 1e-300)
    throw DesignSingular("normal-equation solve failed the residual check");
  return fit;
}

std::vector<std::pair<long long, double>> block_series(
    const std::vector<double>& path, int j, const Functional& f) {
  if (j < 1) throw ContractViolation("block_series: j must be >= 1");
  const long long n = (long long)(path.size()) - 1;
  if (n < j) throw ContractViolation("block_series: path shorter than a block");
  std::vector<std::pair<long long, double>> out;
  out.reserve(std::size_t(n - j + 1));
  std::vector<double> block(static_cast<std::size_t>(j));
  for (long long t = j; t <= n; ++t) {
    for (int i = 0; i < j; ++i) block[i] = path[std::size_t(t - j + 1 + i)];
    out.emplace_back(t, f.apply(block));
  }
  return out;
}

std::vector<double> replicate_series(const PathArray& paths, int r) {
  if (r < 0 || r >= paths.replicates)
    throw ContractViolation("replicate_series: replicate out of range");
  std::vector<double> out(std::size_t(paths.n) + 1);
  for (int t = 0; t <= paths.n; ++t) out[std::size_t(t)] = paths.at(r, t);
  return out;
}

BiasSweep bias_sweep(const KernelFamily& fam, const Functional& f, int j,
                     double u, int k, const std::vector<double>& b_list,
                     long long n) {
  if (b_list.empty()) throw ContractViolation("bias_sweep: empty b list");
  if (j < 1 || n < j) throw ContractViolation("bias_sweep: need n >= j >= 1");

  // Exact curve values at the design times; these are shared across b.
  std::vector<std::pair<long long, double>> data(std::size_t(n - j + 1));
  std::exception_ptr err;
#pragma omp parallel for schedule(dynamic, 16)
  for (long long t = j; t <= n; ++t) {
    try {
      data[std::size_t(t - j)] = {
          t, exact_curve_value(fam, f, j, double(t) / double(n))};
    } catch (...) {
#pragma omp critical
      if (!err) err = std::current_exception();
    }
  }
  if (err) std::rethrow_exception(err);

  // Exact curve derivatives at u: the vector target is b^i psi^(i)(u).
  const DerivativeBundle db = j_dim_derivatives(fam, u, j, k - 1);
  const ProductLaw pl = j_dim_law(fam, u, j);
  std::vector<double> psi_derivs(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) {
    double s = 0.0;
    for (int z = 0; z < pl.space.size(); ++z)
      s += f.apply(pl.space.points[z]) * db.orders[std::size_t(i)](z);
    psi_derivs[std::size_t(i)] = s;
  }
  const double target = psi_derivs[0];

  BiasSweep out;
  std::vector<double> lx, ly, vx, vy;
  for (double b : b_list) {
    LocPolyConfig cfg;
    cfg.k = k;
    cfg.bandwidth = b;
    cfg.j = j;
    const LocPolyFit fit = fit_local_poly(data, n, u, cfg);
    BiasRow row;
    row.b = b;
    row.bias = std::abs(fit.psi() - target);
    double scale = 1.0;
    for (int i = 0; i < k; ++i) {
      row.vector_bias = std::max(
          row.vector_bias,
          std::abs(fit.h_hat(i) - scale * psi_derivs[std::size_t(i)]));
      scale *= b;
    }
    out.rows.push_back(row);
    if (row.bias > kBiasFloor) {
      lx.push_back(std::log(b));
      ly.push_back(std::log(row.bias));
    }
    if (row.vector_bias > kBiasFloor) {
      vx.push_back(std::log(b));
      vy.push_back(std::log(row.vector_bias));
    }
  }
  out.used = int(lx.size());
  out.vector_used = int(vx.size());
  out.exact = true;
  for (const BiasRow& r : out.rows)
    if (r.bias > kExactBias || r.vector_bias > kExactBias) out.exact = false;
  out.slope = (out.used >= 2) ? ls_slope(lx, ly) : 0.0;
  out.vector_slope = (out.vector_used >= 2) ? ls_slope(vx, vy) : 0.0;
  return out;
}

namespace {

VarianceSweep variance_sweep_impl(const KernelFamily& fam, const Functional& f,
                                  double u, const LocPolyConfig& cfg,
                                  const std::vector<long long>& n_list,
                                  int replicates, std::uint64_t seed,
                                  bool parallel) {
  if (n_list.empty()) throw ContractViolation("variance_sweep: empty n list");
  if (replicates < 2)
    throw ContractViolation("variance_sweep: need at least 2 replicates");

  VarianceSweep out;
  for (std::size_t i = 0; i < n_list.size(); ++i) {
    const long long n = n_list[i];
    const double b =
        cfg.bandwidth * std::pow(double(n_list[0]) / double(n), 0.2);
    if (!(b > 0.0 && b < 1.0))
      throw ContractViolation("variance_sweep: scaled bandwidth left (0, 1)");
    SimulationPlan plan;
    plan.n = int(n);
    plan.replicates = replicates;
    plan.seed = seed + std::uint64_t(i);
    const PathArray paths = sample_triangular_finite(fam, plan);

    LocPolyConfig local = cfg;
    local.bandwidth = b;
    std::vector<double> est(static_cast<std::size_t>(replicates));
    std::exception_ptr err;
#pragma omp parallel for schedule(static) if (parallel)
    for (int r = 0; r < replicates; ++r) {
      try {
        const auto data = block_series(replicate_series(paths, r), cfg.j, f);
        est[std::size_t(r)] = fit_local_poly(data, n, u, local).psi();
      } catch (...) {
#pragma omp critical
        if (!err) err = std::current_exception();
      }
    }
    if (err) std::rethrow_exception(err);

    double mean = 0.0;
    for (double e : est) mean += e;
    mean /= replicates;
    double ss = 0.0;
    for (double e : est) ss += (e - mean) * (e - mean);
    VarianceRow row;
    row.n = n;
    row.b = b;
    row.variance = ss / (replicates - 1);
    row.estimates = std::move(est);
    out.rows.push_back(std::move(row));
  }

  std::vector<double> lx, ly;
  for (const VarianceRow& r : out.rows)
    if (r.variance > 0.0) {
      lx.push_back(std::log(double(r.n) * r.b));
      ly.push_back(std::log(r.variance));
    }
  out.slope = (lx.size() >= 2) ? ls_slope(lx, ly) : 0.0;
  return out;
}

}  // namespace

VarianceSweep variance_sweep(const KernelFamily& fam, const Functional& f,
                             double u, const LocPolyConfig& cfg,
                             const std::vector<long long>& n_list,
                             int replicates, std::uint64_t seed) {
  return variance_sweep_impl(fam, f, u, cfg, n_list, replicates, seed, true);
}

VarianceSweep variance_sweep_serial(const KernelFamily& fam,
                                    const Functional& f, double u,
                                    const LocPolyConfig& cfg,
                                    const std::vector<long long>& n_list,
                                    int replicates, std::uint64_t seed) {
  return variance_sweep_impl(fam, f, u, cfg, n_list, replicates, seed, false);
}

double jackknife_variance_of_variance(const std::vector<double>& estimates) {
  const int R = int(estimates.size());
  if (R < 3)
    throw ContractViolation("jackknife: need at least 3 estimates");
  double s1 = 0.0, s2 = 0.0;
  for (double x : estimates) {
    s1 += x;
    s2 += x * x;
  }
  // Leave-one-out sample variances, then the jackknife variance of the
  // variance statistic.
  std::vector<double> loo(static_cast<std::size_t>(R));
  for (int i = 0; i < R; ++i) {
    const double x = estimates[std::size_t(i)];
    const double m = (s1 - x) / (R - 1);
    loo[std::size_t(i)] = ((s2 - x * x) - (R - 1) * m * m) / (R - 2);
  }
  double lm = 0.0;
  for (double v : loo) lm += v;
  lm /= R;
  double ss = 0.0;
  for (double v : loo) ss += (v - lm) * (v - lm);
  return (R - 1.0) / R * ss;
}

std::vector<CovariancePoint> covariance_curve(
    const KernelFamily& fam, const std::vector<double>& u_grid,
    const LocPolyConfig& cfg, const std::vector<double>& path) {
  if (cfg.j != 2)
    throw ContractViolation("covariance_curve: cfg.j must be 2");
  if (path.size() < 3)
    throw ContractViolation("covariance_curve: path too short");
  const long long n = (long long)(path.size()) - 1;

  // Product blocks and the two marginal series share the design times t=2..n.
  std::vector<std::pair<long long, double>> d12, da, db;
  d12.reserve(std::size_t(n - 1));
  da.reserve(std::size_t(n - 1));
  db.reserve(std::size_t(n - 1));
  for (long long t = 2; t <= n; ++t) {
    const double x0 = path[std::size_t(t - 1)], x1 = path[std::size_t(t)];
    d12.emplace_back(t, x0 * x1);
    da.emplace_back(t, x0);
    db.emplace_back(t, x1);
  }
  const Functional prod = functional_product();

  std::vector<CovariancePoint> out(u_grid.size());
  std::exception_ptr err;
#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < u_grid.size(); ++i) {
    try {
      const double u = u_grid[i];
      const LocPolyFit f12 = fit_local_poly(d12, n, u, cfg);
      const LocPolyFit fa = fit_local_poly(da, n, u, cfg);
      const LocPolyFit fb = fit_local_poly(db, n, u, cfg);
      CovariancePoint pt;
      pt.u = u;
      pt.estimate = f12.psi() - fa.psi() * fb.psi();
      pt.boundary = f12.boundary;
      const double e12 = exact_curve_value(fam, prod, 2, u);
      const Measure pi = invariant_measure(fam.eval(u));
      double m = 0.0;
      for (int x = 0; x < fam.space().size(); ++x)
        m += fam.space().value(x) * pi(x);
      pt.exact = e12 - m * m;
      out[i] = pt;
    } catch (...) {
#pragma omp critical
      if (!err) err = std::current_exception();
    }
  }
  if (err) std::rethrow_exception(err);
  return out;
}

}  // namespace locstat
