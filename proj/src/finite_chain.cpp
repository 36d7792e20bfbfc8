#include "locstat/finite_chain.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace locstat {

namespace {

constexpr double kResidualTol = 1e-12;
constexpr int kSpectralCheckLimit = 64;
constexpr double kSimplicityGap = 1e-8;

double binom(int n, int k) {
  double r = 1.0;
  for (int i = 0; i < k; ++i) r = r * double(n - i) / double(i + 1);
  return r;
}

}  // namespace

Measure invariant_measure(const TransitionKernel& P) {
  const int m = P.size();
  const Eigen::MatrixXd& Q = P.matrix();

  if (m <= kSpectralCheckLimit) {
    Eigen::EigenSolver<Eigen::MatrixXd> es(Q, /*computeEigenvectors=*/false);
    std::vector<double> mods(m);
    for (int i = 0; i < m; ++i) mods[i] = std::abs(es.eigenvalues()(i));
    std::sort(mods.begin(), mods.end(), std::greater<double>());
    if (m >= 2 && mods[1] > 1.0 - kSimplicityGap) {
      std::ostringstream os;
      os << "invariant_measure: eigenvalue 1 is not simple within tolerance "
         << "(second-largest modulus " << mods[1] << ")";
      throw NonUniqueInvariant(os.str());
    }
  }

  // pi (Q - I) = 0 with one equation swapped for the normalization.
  Eigen::MatrixXd A = Q.transpose() - Eigen::MatrixXd::Identity(m, m);
  A.row(m - 1).setOnes();
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(m);
  rhs(m - 1) = 1.0;
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(A);
  Eigen::VectorXd x = lu.solve(rhs);
  x += lu.solve(rhs - A * x);  // one refinement step

  if (!x.allFinite())
    throw NonUniqueInvariant(
        "invariant_measure: singular normalization system");
  for (int i = 0; i < m; ++i) {
    if (x(i) < 0.0) {
      if (x(i) < -1e-12)
        throw NonUniqueInvariant(
            "invariant_measure: solve produced negative mass");
      x(i) = 0.0;
    }
  }
  Measure pi = x.transpose() / x.sum();

  const double resid = (pi * Q - pi).cwiseAbs().maxCoeff();
  if (resid > kResidualTol) {
    std::ostringstream os;
    os << "invariant_measure: residual " << resid << " exceeds "
       << kResidualTol;
    throw NonUniqueInvariant(os.str());
  }
  return pi;
}

FundamentalMatrix fundamental_matrix(const TransitionKernel& P,
                                     const Measure& pi) {
  const int m = P.size();
  if (pi.size() != m)
    throw ContractViolation("fundamental_matrix: dimension mismatch");
  Eigen::MatrixXd B = Eigen::MatrixXd::Identity(m, m) - P.matrix() +
                      Eigen::VectorXd::Ones(m) * pi;
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(B);
  Eigen::MatrixXd Z = lu.solve(Eigen::MatrixXd::Identity(m, m));
  Z += lu.solve(Eigen::MatrixXd::Identity(m, m) - B * Z);
  const double err =
      (Z * B - Eigen::MatrixXd::Identity(m, m)).cwiseAbs().maxCoeff();
  if (!(err <= 1e-10)) {
    std::ostringstream os;
    os << "fundamental_matrix: inverse residual " << err << " exceeds 1e-10";
    throw ContractViolation(os.str());
  }
  return FundamentalMatrix{std::move(Z)};
}

Measure zero_mass_resolve(const FundamentalMatrix& fm, const Measure& rhs) {
  if (rhs.size() != fm.Z.rows())
    throw ContractViolation("zero_mass_resolve: dimension mismatch");
  const double scale = std::max(1.0, rhs.cwiseAbs().sum());
  if (std::abs(rhs.sum()) > 1e-10 * scale)
    throw ContractViolation(
        "zero_mass_resolve: right-hand side does not have zero mass");
  return rhs * fm.Z;
}

DerivativeBundle derivative_recursion(const KernelFamily& fam, double u,
                                      int k) {
  if (k < 0 || k > fam.order())
    throw ContractViolation("derivative_recursion: order outside [0, family k]");
  const auto mats = fam.bundle(u, k);
  const TransitionKernel P(mats[0], fam.row_tol());
  DerivativeBundle out;
  out.u = u;
  out.orders.push_back(invariant_measure(P));
  if (k == 0) return out;
  const FundamentalMatrix Z = fundamental_matrix(P, out.orders[0]);
  for (int ell = 1; ell <= k; ++ell) {
    Measure rhs = Measure::Zero(P.size());
    for (int s = 1; s <= ell; ++s)
      rhs += binom(ell, s) * (out.orders[ell - s] * mats[s]);
    out.orders.push_back(zero_mass_resolve(Z, rhs));
  }
  return out;
}

Measure fd_derivative_oracle(const KernelFamily& fam, double u, int ell,
                             double h) {
  if (ell < 1 || ell > 3)
    throw ContractViolation("fd_derivative_oracle: order must be 1..3");
  if (h == 0.0) h = (ell == 3) ? 5e-3 : 1e-3;
  if (h <= 0.0) throw ContractViolation("fd_derivative_oracle: h must be > 0");
  if (u - ell * h < -1e-15 || u + ell * h > 1.0 + 1e-15)
    throw StencilOutOfDomain("fd_derivative_oracle: stencil leaves [0,1]");

  auto pi = [&fam](double v) {
    return invariant_measure(fam.eval(std::clamp(v, 0.0, 1.0)));
  };
  auto stencil = [&](double step) -> Measure {
    switch (ell) {
      case 1:
        return (pi(u + step) - pi(u - step)) / (2.0 * step);
      case 2:
        return (pi(u + step) - 2.0 * pi(u) + pi(u - step)) / (step * step);
      default:
        return (pi(u + 2.0 * step) - 2.0 * pi(u + step) + 2.0 * pi(u - step) -
                pi(u - 2.0 * step)) /
               (2.0 * step * step * step);
    }
  };
  // One Richardson extrapolation step: both stencils are second order.
  const Measure coarse = stencil(h), fine = stencil(h / 2.0);
  return (4.0 * fine - coarse) / 3.0;
}

double derivative_sup_norm(const KernelFamily& fam, int k, int grid_points) {
  if (k < 0 || k > fam.order())
    throw ContractViolation("derivative_sup_norm: k outside [0, family k]");
  if (grid_points < 2)
    throw ContractViolation("derivative_sup_norm: grid too small");
  const WeightFunction& V0 = fam.weight(0);
  auto norm_at = [&](double v) {
    return vnorm(derivative_recursion(fam, v, k).orders[std::size_t(k)], V0);
  };
  std::vector<double> vals(static_cast<std::size_t>(grid_points));
  for (int i = 0; i < grid_points; ++i)
    vals[std::size_t(i)] = norm_at(double(i) / double(grid_points - 1));
  double best = *std::max_element(vals.begin(), vals.end());

  // Refine around the two best, non-adjacent coarse cells.
  std::vector<int> order(static_cast<std::size_t>(grid_points));
  for (int i = 0; i < grid_points; ++i) order[std::size_t(i)] = i;
  std::sort(order.begin(), order.end(),
            [&](int a, int b) { return vals[std::size_t(a)] > vals[std::size_t(b)]; });
  std::vector<int> centers = {order[0]};
  for (int idx : order)
    if (std::abs(idx - order[0]) > 1) {
      centers.push_back(idx);
      break;
    }
  const int fine = grid_points / 2 + 1;
  for (int c : centers) {
    const double lo = double(std::max(c - 1, 0)) / double(grid_points - 1);
    const double hi =
        double(std::min(c + 1, grid_points - 1)) / double(grid_points - 1);
    for (int i = 1; i < fine; ++i)
      best = std::max(best, norm_at(lo + (hi - lo) * double(i) / double(fine)));
  }
  return best;
}

TaylorCheck taylor_remainder_check(const KernelFamily& fam, double u, double h,
                                   int k, int grid_points) {
  if (k < 1 || k > fam.order())
    throw ContractViolation("taylor_remainder_check: k outside [1, family k]");
  if (u < 0.0 || u > 1.0 || u + h < 0.0 || u + h > 1.0)
    throw ContractViolation("taylor_remainder_check: u or u+h outside [0,1]");

  const DerivativeBundle rec = derivative_recursion(fam, u, k - 1);
  Measure expansion = rec.orders[0];
  double hp = 1.0, fact = 1.0;
  for (int ell = 1; ell <= k - 1; ++ell) {
    hp *= h;
    fact *= ell;
    expansion += (hp / fact) * rec.orders[ell];
  }
  const Measure actual = invariant_measure(fam.eval(u + h));
  const WeightFunction& V0 = fam.weight(0);

  TaylorCheck out;
  out.remainder = vnorm(actual - expansion, V0);
  out.M = derivative_sup_norm(fam, k, grid_points);
  double kfact = 1.0;
  for (int i = 2; i <= k; ++i) kfact *= i;
  out.bound = out.M * std::pow(std::abs(h), k) / kfact;
  out.within = out.remainder <= out.bound * (1.0 + 1e-12) + 1e-15;
  return out;
}

namespace {

std::size_t checked_product_size(int m, int j, std::size_t cap,
                                 const char* who) {
  if (j < 1) throw ContractViolation(std::string(who) + ": j must be >= 1");
  std::size_t M = 1;
  for (int i = 0; i < j; ++i) {
    if (M > cap / std::size_t(m)) {
      std::ostringstream os;
      os << who << ": product space size " << m << "^" << j
         << " exceeds cap " << cap;
      throw ProductSpaceTooLarge(os.str());
    }
    M *= std::size_t(m);
  }
  if (M > cap) {
    std::ostringstream os;
    os << who << ": product space size exceeds cap " << cap;
    throw ProductSpaceTooLarge(os.str());
  }
  return M;
}

}  // namespace

ProductLaw j_dim_law(const KernelFamily& fam, double u, int j,
                     std::size_t cap) {
  const int m = fam.space().size();
  const std::size_t M = checked_product_size(m, j, cap, "j_dim_law");
  const TransitionKernel P = fam.eval(u);
  Measure law = invariant_measure(P);
  for (int step = 2; step <= j; ++step) {
    Measure next(law.size() * m);
    for (Eigen::Index idx = 0; idx < law.size(); ++idx) {
      const int last = int(idx % m);
      for (int y = 0; y < m; ++y)
        next(idx * m + y) = law(idx) * P.matrix()(last, y);
    }
    law = std::move(next);
  }
  if (std::size_t(law.size()) != M)
    throw ContractViolation("j_dim_law: internal size mismatch");
  return ProductLaw{StateSpace::power(fam.space(), j), std::move(law)};
}

KernelFamily vectorize_family(const KernelFamily& fam, int j,
                              std::size_t cap) {
  const int m = fam.space().size();
  const std::size_t M =
      checked_product_size(m, j, cap, "vectorize_family");
  // Dense product kernels are (m^j)^2; keep that allocatable.
  if (M * M > std::size_t(50000000)) {
    std::ostringstream os;
    os << "vectorize_family: dense product kernel " << M << "x" << M
       << " is beyond the dense-matrix budget";
    throw ProductSpaceTooLarge(os.str());
  }
  StateSpace pspace = StateSpace::power(fam.space(), j);

  std::vector<WeightFunction> weights;
  for (int s = 0; s <= fam.order(); ++s) {
    Eigen::VectorXd w = Eigen::VectorXd::Zero(Eigen::Index(M));
    for (std::size_t x = 0; x < M; ++x) {
      double sum = 0.0;
      std::size_t rest = x;
      for (int i = 0; i < j; ++i) {
        sum += fam.weight(s)(int(rest % m));
        rest /= m;
      }
      w(Eigen::Index(x)) = sum;
    }
    weights.emplace_back(std::move(w), fam.weight(s).name + "_sum" +
                                            std::to_string(j));
  }

  const std::size_t strip = M / std::size_t(m);  // m^{j-1}
  auto inner = fam;  // copy shares the builder
  auto builder = [inner, m, M, strip](double u, int order) {
    const auto base = inner.bundle(u, order);
    std::vector<Eigen::MatrixXd> out(
        order + 1, Eigen::MatrixXd::Zero(Eigen::Index(M), Eigen::Index(M)));
    for (std::size_t x = 0; x < M; ++x) {
      const int xj = int(x % m);
      const std::size_t shifted = (x % strip) * std::size_t(m);
      for (int ell = 0; ell <= order; ++ell)
        for (int y = 0; y < m; ++y)
          out[ell](Eigen::Index(x), Eigen::Index(shifted + y)) =
              base[ell](xj, y);
    }
    return out;
  };
  return KernelFamily(std::move(pspace), fam.order(), std::move(weights),
                      std::move(builder), fam.bundle_source(), fam.row_tol());
}

DerivativeBundle j_dim_derivatives(const KernelFamily& fam, double u, int j,
                                   int k, std::size_t cap) {
  const KernelFamily vf = vectorize_family(fam, j, cap);
  return derivative_recursion(vf, u, k);
}

std::vector<Measure> forward_marginals(const KernelFamily& fam, int n) {
  if (n < 0) throw ContractViolation("forward_marginals: n must be >= 0");
  std::vector<Measure> out;
  out.reserve(n + 1);
  out.push_back(invariant_measure(fam.eval(0.0)));
  for (int t = 1; t <= n; ++t)
    out.push_back(apply_kernel(out.back(), fam.eval(double(t) / double(n))));
  return out;
}

StationarityGap local_stationarity_gap(const KernelFamily& fam, int n,
                                       const WeightFunction& V) {
  if (n < 1) throw ContractViolation("local_stationarity_gap: n must be >= 1");
  if (V.size() != fam.space().size())
    throw ContractViolation("local_stationarity_gap: weight dimension");
  StationarityGap out;
  Measure mu;
  for (int t = 0; t <= n; ++t) {
    const TransitionKernel P = fam.eval(double(t) / double(n));
    const Measure pi_t = invariant_measure(P);
    mu = (t == 0) ? pi_t : apply_kernel(mu, P);
    const double gap = vnorm(mu - pi_t, V);
    if (gap > out.sup_gap) {
      out.sup_gap = gap;
      out.argmax_t = t;
    }
  }
  out.scaled_gap = double(n) * out.sup_gap;
  return out;
}

}  // namespace locstat
