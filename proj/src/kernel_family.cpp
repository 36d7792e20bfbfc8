#include "locstat/kernel_family.hpp"

#include <cmath>
#include <sstream>

#include "locstat/rng.hpp"

namespace locstat {

Jet ScalarCurve::jet(double u) const {
  switch (type) {
    case Type::Poly: {
      Jet x = Jet::variable(u);
      Jet r = Jet::constant(0.0);
      for (auto it = coeffs.rbegin(); it != coeffs.rend(); ++it)
        r = r * x + *it;
      return r;
    }
    case Type::Sin: {
      if (coeffs.size() != 4)
        throw ContractViolation("sin curve needs [offset, amp, freq, phase]");
      const double w = 2.0 * M_PI * coeffs[2];
      Jet arg(w * u + coeffs[3], w);
      return coeffs[1] * jet_sin(arg) + coeffs[0];
    }
  }
  throw ContractViolation("ScalarCurve: unknown type");
}

double ScalarCurve::deriv(double u, int ell) const {
  if (ell < 0 || ell > Jet::kMax)
    throw ContractViolation("ScalarCurve::deriv: order outside [0,3]");
  return jet(u).d[ell];
}

KernelFamily::KernelFamily(StateSpace space, int order_k,
                           std::vector<WeightFunction> weights, Builder builder,
                           BundleSource source, double row_tol)
    : space_(std::move(space)),
      order_k_(order_k),
      weights_(std::move(weights)),
      builder_(std::move(builder)),
      source_(source),
      row_tol_(row_tol) {
  if (order_k_ < 0 || order_k_ > Jet::kMax)
    throw ContractViolation("KernelFamily: derivative order must be in [0,3]");
  if (int(weights_.size()) != order_k_ + 1)
    throw ContractViolation("KernelFamily: need one weight per order 0..k");
  for (const auto& w : weights_)
    if (w.size() != space_.size())
      throw ContractViolation("KernelFamily: weight/space dimension mismatch");
}

const WeightFunction& KernelFamily::weight(int s) const {
  if (s < 0 || s > order_k_)
    throw ContractViolation("KernelFamily::weight: grade outside [0,k]");
  return weights_[s];
}

std::vector<Eigen::MatrixXd> KernelFamily::bundle(double u, int order) const {
  if (!(u >= 0.0 && u <= 1.0))
    throw ContractViolation("KernelFamily: u outside [0,1]");
  if (order < 0 || order > order_k_) {
    std::ostringstream os;
    os << "KernelFamily: requested derivative order " << order
       << " exceeds family order " << order_k_;
    throw ContractViolation(os.str());
  }
  std::vector<Eigen::MatrixXd> mats = builder_(u, order);
  if (int(mats.size()) != order + 1)
    throw ContractViolation("KernelFamily: builder returned wrong bundle size");
  const int m = space_.size();
  for (const auto& M : mats)
    if (M.rows() != m || M.cols() != m)
      throw ContractViolation("KernelFamily: builder matrix has wrong shape");
  // Order 0 must be row-stochastic; validate through TransitionKernel (which
  // also clamps -0-sized negatives).
  mats[0] = TransitionKernel(std::move(mats[0]), row_tol_).matrix();
  for (int ell = 1; ell <= order; ++ell) {
    // Derivatives of row sums of a stochastic family vanish.  Analytic
    // bundles hit this at rounding level; finite-difference fallbacks divide
    // eval rounding by h^ell, so their gate scales accordingly.
    double tol = 1e-10;
    if (source_ == BundleSource::FiniteDifference) tol = 1e-5;
    for (int i = 0; i < m; ++i) {
      const double rs = mats[ell].row(i).sum();
      if (std::abs(rs) > tol) {
        std::ostringstream os;
        os << "KernelFamily: derivative order " << ell << " row " << i
           << " sums to " << rs << " (|.| > " << tol << ")";
        throw ContractViolation(os.str());
      }
    }
  }
  return mats;
}

TransitionKernel KernelFamily::eval(double u) const {
  if (!(u >= 0.0 && u <= 1.0))
    throw ContractViolation("KernelFamily: u outside [0,1]");
  std::vector<Eigen::MatrixXd> mats = builder_(u, 0);
  if (mats.empty())
    throw ContractViolation("KernelFamily: builder returned empty bundle");
  return TransitionKernel(std::move(mats[0]), row_tol_);
}

Eigen::MatrixXd KernelFamily::deriv(double u, int ell) const {
  if (ell == 0) return eval(u).matrix();
  return bundle(u, ell)[ell];
}

KernelFamily two_state_family(const ScalarCurve& a, const ScalarCurve& b) {
  StateSpace space = StateSpace::indexed(2);
  std::vector<WeightFunction> weights(4, WeightFunction::ones(2));
  auto builder = [a, b](double u, int order) {
    const Jet ja = a.jet(u), jb = b.jet(u);
    if (ja.d[0] < 0.0 || ja.d[0] > 1.0 || jb.d[0] < 0.0 || jb.d[0] > 1.0)
      throw ModelInvariantViolated(
          "two_state_family: flip probabilities must stay in [0,1]");
    std::vector<Eigen::MatrixXd> out;
    for (int ell = 0; ell <= order; ++ell) {
      Eigen::MatrixXd M(2, 2);
      const double da = ja.d[ell], db = jb.d[ell];
      if (ell == 0) {
        M << 1.0 - da, da, db, 1.0 - db;
      } else {
        M << -da, da, db, -db;
      }
      out.push_back(std::move(M));
    }
    return out;
  };
  return KernelFamily(std::move(space), 3, std::move(weights),
                      std::move(builder));
}

KernelFamily two_state_testbed() {
  return two_state_family(ScalarCurve::poly({0.3, 0.4}),
                          ScalarCurve::poly({0.5, -0.2}));
}

KernelFamily random_smooth_family(int m, std::uint64_t seed) {
  if (m < 2) throw ContractViolation("random_smooth_family: need >= 2 states");
  RngStream g(seed, 0, 0, /*tag=*/1234);
  std::vector<double> c, amp, phase;
  for (int i = 0; i < m * m; ++i) {
    c.push_back(g.u01() - 0.5);
    amp.push_back(0.1 + 0.25 * g.u01());
    phase.push_back(2.0 * M_PI * g.u01());
  }
  StateSpace space = StateSpace::indexed(m);
  std::vector<WeightFunction> weights(4, WeightFunction::ones(m));
  auto builder = [m, c, amp, phase](double u, int order) {
    std::vector<std::vector<Jet>> rows(m, std::vector<Jet>(m));
    for (int i = 0; i < m; ++i) {
      Jet rowsum = Jet::constant(0.0);
      for (int j = 0; j < m; ++j) {
        const int id = i * m + j;
        Jet arg(2.0 * M_PI * u + phase[id], 2.0 * M_PI);
        rows[i][j] = jet_exp(amp[id] * jet_sin(arg) + c[id]);
        rowsum += rows[i][j];
      }
      for (int j = 0; j < m; ++j) rows[i][j] = rows[i][j] / rowsum;
    }
    std::vector<Eigen::MatrixXd> out(order + 1, Eigen::MatrixXd(m, m));
    for (int ell = 0; ell <= order; ++ell)
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j) out[ell](i, j) = rows[i][j].d[ell];
    return out;
  };
  return KernelFamily(std::move(space), 3, std::move(weights),
                      std::move(builder));
}

KernelFamily with_fd_bundles(StateSpace space, int order_k,
                             std::vector<WeightFunction> weights,
                             std::function<Eigen::MatrixXd(double)> eval,
                             double h) {
  auto builder = [eval, h](double u, int order) {
    std::vector<Eigen::MatrixXd> out;
    out.push_back(eval(u));
    if (order >= 1) {
      const double span = (order >= 3 ? 2.0 : 1.0) * h;
      if (u - span < 0.0 || u + span > 1.0)
        throw StencilOutOfDomain(
            "with_fd_bundles: difference stencil leaves [0,1]");
      const Eigen::MatrixXd p1 = eval(u + h), m1 = eval(u - h);
      out.push_back((p1 - m1) / (2.0 * h));
      if (order >= 2) out.push_back((p1 - 2.0 * out[0] + m1) / (h * h));
      if (order >= 3) {
        const Eigen::MatrixXd p2 = eval(u + 2.0 * h), m2 = eval(u - 2.0 * h);
        out.push_back((p2 - 2.0 * p1 + 2.0 * m1 - m2) / (2.0 * h * h * h));
      }
    }
    return out;
  };
  return KernelFamily(std::move(space), order_k, std::move(weights),
                      std::move(builder), BundleSource::FiniteDifference);
}

}  // namespace locstat
