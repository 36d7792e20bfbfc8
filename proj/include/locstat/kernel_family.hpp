#pragma once
#include <cstdint>
#include <functional>
#include <vector>

#include "locstat/jet.hpp"
#include "locstat/measure.hpp"

namespace locstat {

// A scalar parameter curve u -> f(u) with exact derivatives.
//   poly: coeffs c0..cm, f(u) = sum c_i u^i
//   sin:  coeffs [offset, amplitude, frequency, phase],
//         f(u) = offset + amplitude * sin(2*pi*frequency*u + phase)
struct ScalarCurve {
  enum class Type { Poly, Sin };
  Type type = Type::Poly;
  std::vector<double> coeffs;

  static ScalarCurve poly(std::vector<double> c) {
    return {Type::Poly, std::move(c)};
  }
  static ScalarCurve constant(double c) { return poly({c}); }
  static ScalarCurve sine(double offset, double amplitude, double frequency,
                          double phase) {
    return {Type::Sin, {offset, amplitude, frequency, phase}};
  }

  Jet jet(double u) const;
  double value(double u) const { return jet(u).d[0]; }
  double deriv(double u, int ell) const;
};

enum class BundleSource { Analytic, FiniteDifference };

// A u-indexed family of transition kernels on a fixed finite state space,
// with parameter-derivative matrices ("bundles") up to a fixed order.  The
// builder callback returns [Q_u, dQ/du, ..., d^order Q/du^order]; evaluation
// validates row-stochasticity (1e-12) of order 0 and zero row sums (1e-10)
// of every derivative order.
class KernelFamily {
 public:
  using Builder =
      std::function<std::vector<Eigen::MatrixXd>(double u, int order)>;

  KernelFamily(StateSpace space, int order_k,
               std::vector<WeightFunction> weights, Builder builder,
               BundleSource source = BundleSource::Analytic,
               double row_tol = 1e-12);

  TransitionKernel eval(double u) const;
  Eigen::MatrixXd deriv(double u, int ell) const;
  // [Q_u, Q_u^(1), ..., Q_u^(order)], validated.
  std::vector<Eigen::MatrixXd> bundle(double u, int order) const;

  const StateSpace& space() const { return space_; }
  int order() const { return order_k_; }
  // Graded weight V_s; weights.size() == order+1.
  const WeightFunction& weight(int s) const;
  BundleSource bundle_source() const { return source_; }
  double row_tol() const { return row_tol_; }

 private:
  StateSpace space_;
  int order_k_;
  std::vector<WeightFunction> weights_;
  Builder builder_;
  BundleSource source_;
  double row_tol_;
};

// The canonical two-state family: state 0 flips to 1 with probability a(u),
// state 1 flips back with probability b(u).  Everything about it is known in
// closed form, which makes it the reference instance across the test suite.
KernelFamily two_state_family(const ScalarCurve& a, const ScalarCurve& b);

// Default curves a(u) = 0.3 + 0.4u, b(u) = 0.5 - 0.2u.
KernelFamily two_state_testbed();

// A random m-state family, smooth in u by construction: entries
// exp(c_ij + a_ij sin(2 pi u + phi_ij)) row-normalized with jet arithmetic,
// so the derivative bundles are exact.  Used for randomized cross-checks.
KernelFamily random_smooth_family(int m, std::uint64_t seed);

// Wrap an eval-only kernel map with central finite-difference bundles.
// Flagged as lower-trust (BundleSource::FiniteDifference); step h is clipped
// to keep stencils inside [0,1].
KernelFamily with_fd_bundles(StateSpace space, int order_k,
                             std::vector<WeightFunction> weights,
                             std::function<Eigen::MatrixXd(double)> eval,
                             double h = 1e-4);

}  // namespace locstat
