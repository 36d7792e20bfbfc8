#pragma once
#include <Eigen/Dense>
#include <string>
#include <vector>

#include "locstat/errors.hpp"

namespace locstat {

// Signed measures are row vectors (mu P is a row-vector/matrix product);
// weight functions are column vectors.
using Measure = Eigen::RowVectorXd;

// A finite, ordered state space with an optional numeric embedding: each
// state maps to a small real tuple (a scalar for the base models, a j-tuple
// on product spaces).  Functionals of paths act on the embedding.
struct StateSpace {
  std::vector<std::string> labels;
  std::vector<std::vector<double>> points;

  int size() const { return int(labels.size()); }

  // Scalar value of state i (first coordinate of the embedding).
  double value(int i) const { return points[i].empty() ? double(i) : points[i][0]; }

  static StateSpace indexed(int m);
  static StateSpace grid(const std::vector<double>& centers);
  // j-fold product of `base` with tuple embeddings, ordered with the first
  // coordinate slowest (state index = x1*m^{j-1} + ... + xj).
  static StateSpace power(const StateSpace& base, int j);
  static StateSpace product(const StateSpace& a, const StateSpace& b);
};

// A weight V >= 1 on a state space; defines the norm ||mu||_V = sum V|mu|.
struct WeightFunction {
  Eigen::VectorXd v;
  std::string name;

  WeightFunction() = default;
  WeightFunction(Eigen::VectorXd values, std::string n);
  static WeightFunction ones(int m, std::string n = "1");
  double operator()(int i) const { return v(i); }
  int size() const { return int(v.size()); }
};

// Row-stochastic transition matrix.  Construction validates: square, entries
// >= 0 (values above -1e-12 are clamped, anything lower is rejected), every
// row sum within `row_tol` of 1.  Renormalizing bad rows is refused by
// design -- a row that is off by more than the tolerance is a bug upstream,
// not something to patch over.
class TransitionKernel {
 public:
  explicit TransitionKernel(Eigen::MatrixXd P, double row_tol = 1e-12);

  const Eigen::MatrixXd& matrix() const { return P_; }
  int size() const { return int(P_.rows()); }

 private:
  Eigen::MatrixXd P_;
};

double total_mass(const Measure& mu);

// ||mu||_V = sum_x V(x) |mu(x)|.
double vnorm(const Measure& mu, const WeightFunction& V);

Measure apply_kernel(const Measure& mu, const TransitionKernel& P);

// P^n by repeated multiplication; the row-sum tolerance of the result is
// n * 1e-12 to account for accumulated rounding.
TransitionKernel kernel_power(const TransitionKernel& P, int n);

// V-weighted Dobrushin contraction coefficient,
//   Delta_V(P) = max_{x != y} ||delta_x P - delta_y P||_V / (V(x) + V(y)).
// The parallel version splits the pairwise max over rows; both versions
// compute every pair identically, so they agree bit for bit.
double dobrushin_coeff(const TransitionKernel& P, const WeightFunction& V);
double dobrushin_coeff_serial(const TransitionKernel& P, const WeightFunction& V);

// sup_x ||delta_x P - pi||_V / V(x); dominates Delta_V(P) when pi is
// invariant for P (band bound used by the decay diagnostics).
double ergodicity_bound(const TransitionKernel& P, const Measure& pi,
                        const WeightFunction& V);

}  // namespace locstat
