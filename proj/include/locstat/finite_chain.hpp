#pragma once
#include <cstddef>
#include <vector>

#include "locstat/kernel_family.hpp"
#include "locstat/measure.hpp"

namespace locstat {

// Unique invariant probability of P.  Solved directly (replace one equation
// of pi(P - I) = 0 by the normalization, LU + one step of iterative
// refinement); post-conditions pi >= 0, sum pi = 1, ||pi P - pi||_inf <=
// 1e-12 are verified.  For spaces up to 64 states eigenvalue-1 simplicity is
// checked spectrally (second-largest modulus must be below 1 - 1e-8); larger
// spaces rely on the solve itself (singular system, residual failure or
// negative mass all raise NonUniqueInvariant).
Measure invariant_measure(const TransitionKernel& P);

// Z = (I - Q + 1 pi)^{-1}.  On the zero-mass subspace Z inverts (I - Q);
// construction verifies Z (I - Q + 1 pi) = I to 1e-10.
struct FundamentalMatrix {
  Eigen::MatrixXd Z;
};
FundamentalMatrix fundamental_matrix(const TransitionKernel& P,
                                     const Measure& pi);

// Solve x (I - Q) = rhs for the zero-mass x given zero-mass rhs, via x =
// rhs Z.  The mass of rhs is checked.
Measure zero_mass_resolve(const FundamentalMatrix& fm, const Measure& rhs);

// pi_u and its first k parameter derivatives.
struct DerivativeBundle {
  double u = 0.0;
  std::vector<Measure> orders;  // orders[ell] = d^ell pi_u / du^ell
};

// Derivative recursion: with T_u^(s) the action of the s-th kernel
// derivative, f = pi_u satisfies
//   f^(ell) = sum_{s=1}^{ell} C(ell,s) (I - T_u)^{-1} [ T_u^(s) f^(ell-s) ],
// realized here with the fundamental matrix.  Each order's right-hand side
// has zero mass; this is asserted, not assumed.
DerivativeBundle derivative_recursion(const KernelFamily& fam, double u, int k);

// Independent check of the recursion: central finite differences of exact
// invariant measures at stencil nodes, one Richardson step from (h, h/2).
// Defaults: h = 1e-3 for ell = 1,2 and 5e-3 for ell = 3.
Measure fd_derivative_oracle(const KernelFamily& fam, double u, int ell,
                             double h = 0.0);

// Uniform Lagrange constant: sup over u in [0,1] of ||pi^(k)(u)||_{V_0},
// estimated by a grid max refined around the two best coarse cells (a plain
// grid max can sit a few 1e-4 below the true sup and flip a tight
// certificate the wrong way).
double derivative_sup_norm(const KernelFamily& fam, int k,
                           int grid_points = 101);

// Taylor-Lagrange certificate: the order-(k-1) expansion of pi at u must be
// within M |h|^k / k! of pi(u+h) in the grade-0 norm, where M is the
// uniform constant from derivative_sup_norm.
struct TaylorCheck {
  double remainder = 0.0;  // ||pi(u+h) - expansion||_{V_0}
  double M = 0.0;          // derivative_sup_norm(fam, k, grid_points)
  double bound = 0.0;      // M |h|^k / k!
  bool within = false;
};
TaylorCheck taylor_remainder_check(const KernelFamily& fam, double u, double h,
                                   int k, int grid_points = 101);

// The j-dimensional stationary law pi_{u,j}(x_1..x_j) =
// pi_u(x_1) Q_u(x_1,x_2) ... Q_u(x_{j-1},x_j) as a measure on the j-fold
// product space (first coordinate slowest).
struct ProductLaw {
  StateSpace space;
  Measure law;
};
ProductLaw j_dim_law(const KernelFamily& fam, double u, int j,
                     std::size_t cap = 1000000);

// Shift-and-append vectorization: the product-space family whose invariant
// measure is the j-dimensional law.  Transitions move (x_1..x_j) to
// (x_2..x_j, y) with y drawn from Q_u(x_j, .); derivative bundles inherit
// entrywise.  Product weights are coordinate sums of the base weights.
KernelFamily vectorize_family(const KernelFamily& fam, int j,
                              std::size_t cap = 1000000);

// Parameter derivatives of the j-dimensional law, computed by running the
// derivative recursion on the vectorized family.
DerivativeBundle j_dim_derivatives(const KernelFamily& fam, double u, int j,
                                   int k, std::size_t cap = 1000000);

// Forward marginals of the triangular array: mu_0 = pi_0 (invariant at
// u = 0), mu_t = mu_{t-1} Q_{t/n}; returns t = 0..n.
std::vector<Measure> forward_marginals(const KernelFamily& fam, int n);

// sup_t || mu_t - pi_{t/n} ||_V and its n-scaled version (the local
// stationarity error decays like 1/n).
struct StationarityGap {
  double sup_gap = 0.0;
  double scaled_gap = 0.0;  // n * sup_gap
  int argmax_t = 0;
};
StationarityGap local_stationarity_gap(const KernelFamily& fam, int n,
                                       const WeightFunction& V);

}  // namespace locstat
