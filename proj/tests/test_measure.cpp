#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "locstat/measure.hpp"
#include "locstat/rng.hpp"
#include "support.hpp"

using namespace locstat;

namespace {

TransitionKernel testbed_kernel(double u) {
  return testsup::testbed().eval(u);
}

TransitionKernel random_kernel(std::uint64_t seed, int m) {
  RngStream g(seed, 0, 0);
  Eigen::MatrixXd P(m, m);
  for (int i = 0; i < m; ++i) {
    double s = 0.0;
    for (int j = 0; j < m; ++j) {
      P(i, j) = 0.05 + g.u01();
      s += P(i, j);
    }
    P.row(i) /= s;
  }
  return TransitionKernel(std::move(P), 1e-9);
}

WeightFunction random_weight(std::uint64_t seed, int m) {
  RngStream g(seed, 1, 0);
  Eigen::VectorXd v(m);
  for (int i = 0; i < m; ++i) v(i) = 1.0 + 4.0 * g.u01();
  return WeightFunction(std::move(v), "rand");
}

Measure random_zero_mass(std::uint64_t seed, int m) {
  RngStream g(seed, 2, 0);
  Measure mu(m);
  for (int i = 0; i < m; ++i) mu(i) = g.u01() - 0.5;
  mu.array() -= mu.sum() / m;
  return mu;
}

}  // namespace

TEST_CASE("vnorm is the weighted absolute mass") {
  Measure mu(3);
  mu << 0.5, -0.25, 0.25;
  WeightFunction V(Eigen::Vector3d(1.0, 2.0, 4.0), "V");
  CHECK(vnorm(mu, V) == doctest::Approx(0.5 + 0.5 + 1.0).epsilon(1e-15));

  // ||delta_x - pi||_1 with V = 1 on two points and pi uniform equals 1.
  Measure diff(2);
  diff << 1.0 - 0.5, -0.5;
  CHECK(vnorm(diff, WeightFunction::ones(2)) == doctest::Approx(1.0));
}

TEST_CASE("transition kernel validation") {
  Eigen::MatrixXd good(2, 2);
  good << 0.7, 0.3, 0.5, 0.5;
  CHECK_NOTHROW(TransitionKernel{good});

  Eigen::MatrixXd bad = good;
  bad(0, 0) += 1e-9;  // row sum off by 1e-9 > 1e-12: refused, not renormalized
  CHECK_THROWS_AS(TransitionKernel{bad}, ContractViolation);

  Eigen::MatrixXd neg = good;
  neg(0, 0) = -0.1;
  neg(0, 1) = 1.1;
  CHECK_THROWS_AS(TransitionKernel{neg}, ContractViolation);

  Eigen::MatrixXd rect(2, 3);
  rect.setZero();
  CHECK_THROWS_AS(TransitionKernel{rect}, ContractViolation);
}

TEST_CASE("apply_kernel preserves mass and positivity") {
  const TransitionKernel P = random_kernel(31, 6);
  Measure mu = random_zero_mass(31, 6);
  CHECK(std::abs(total_mass(apply_kernel(mu, P))) < 1e-14);

  Measure prob(6);
  prob.setConstant(1.0 / 6.0);
  const Measure out = apply_kernel(prob, P);
  CHECK(total_mass(out) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(out.minCoeff() >= 0.0);
}

TEST_CASE("testbed dobrushin coefficient is |1-a-b|") {
  // At u = 0: rows (0.7, 0.3) and (0.5, 0.5), V = 1:
  // ||row1 - row2||_1 / 2 = (0.2 + 0.2)/2 = 0.2.
  const WeightFunction V1 = WeightFunction::ones(2);
  CHECK(dobrushin_coeff(testbed_kernel(0.0), V1) ==
        doctest::Approx(0.2).epsilon(1e-14));
  for (double u : {0.0, 0.25, 0.5, 0.9, 1.0}) {
    CHECK(dobrushin_coeff(testbed_kernel(u), V1) ==
          doctest::Approx(std::abs(testsup::tb_lambda(u))).epsilon(1e-13));
  }
}

TEST_CASE("kernel powers contract geometrically on the testbed") {
  const WeightFunction V1 = WeightFunction::ones(2);
  const TransitionKernel P = testbed_kernel(0.0);
  for (int n = 1; n <= 8; ++n) {
    const TransitionKernel Pn = kernel_power(P, n);
    CHECK(dobrushin_coeff(Pn, V1) ==
          doctest::Approx(std::pow(0.2, n)).epsilon(1e-10));
  }
}

TEST_CASE("dobrushin submultiplicativity on random kernels") {
  for (std::uint64_t s = 0; s < 25; ++s) {
    const int m = 3 + int(s % 5);
    const TransitionKernel P = random_kernel(1000 + s, m);
    const TransitionKernel Q = random_kernel(2000 + s, m);
    const WeightFunction V = random_weight(3000 + s, m);
    const TransitionKernel PQ(P.matrix() * Q.matrix(), 1e-9);
    const double dp = dobrushin_coeff(P, V), dq = dobrushin_coeff(Q, V);
    CHECK(dobrushin_coeff(PQ, V) <= dp * dq + 1e-12);
  }
}

TEST_CASE("zero-mass contraction bound") {
  for (std::uint64_t s = 0; s < 25; ++s) {
    const int m = 3 + int(s % 6);
    const TransitionKernel P = random_kernel(500 + s, m);
    const WeightFunction V = random_weight(600 + s, m);
    const double delta = dobrushin_coeff(P, V);
    for (std::uint64_t r = 0; r < 5; ++r) {
      const Measure mu = random_zero_mass(700 + 10 * s + r, m);
      CHECK(vnorm(apply_kernel(mu, P), V) <= delta * vnorm(mu, V) + 1e-12);
    }
    // The maximizing pair attains the coefficient.
    bool attained = false;
    for (int x = 0; x < m && !attained; ++x)
      for (int y = x + 1; y < m && !attained; ++y) {
        Measure pair = Measure::Zero(m);
        pair(x) = 1.0;
        pair(y) = -1.0;
        const double ratio =
            vnorm(apply_kernel(pair, P), V) / vnorm(pair, V);
        if (std::abs(ratio - delta) < 1e-12) attained = true;
      }
    CHECK(attained);
  }
}

TEST_CASE("ergodicity bound dominates the dobrushin coefficient") {
  // Band bound: Delta_V(P^n) <= sup_x ||delta_x P^n - pi||_V / V(x).
  const TransitionKernel P = testbed_kernel(0.0);
  Measure pi(2);
  pi << 0.625, 0.375;
  const WeightFunction V1 = WeightFunction::ones(2);
  const double bound = ergodicity_bound(P, pi, V1);
  // Brute force over both rows: row 0 gives 0.15, row 1 gives 0.25.
  CHECK(bound == doctest::Approx(0.25).epsilon(1e-14));
  CHECK(dobrushin_coeff(P, V1) <= bound + 1e-15);

  // Identity kernel with any non-degenerate pi: the bound is at least 1 and
  // equals 1 for pi = delta-free uniform on 2 states.
  const TransitionKernel I(Eigen::MatrixXd::Identity(2, 2));
  Measure unif(2);
  unif << 0.5, 0.5;
  CHECK(ergodicity_bound(I, unif, V1) == doctest::Approx(1.0));

  for (std::uint64_t s = 0; s < 10; ++s) {
    const int m = 3 + int(s % 4);
    const TransitionKernel R = random_kernel(4000 + s, m);
    // Power-iterate to the invariant for the check.
    Measure p = Measure::Constant(m, 1.0 / m);
    for (int it = 0; it < 2000; ++it) p = apply_kernel(p, R);
    const WeightFunction V = random_weight(4100 + s, m);
    CHECK(dobrushin_coeff(R, V) <= ergodicity_bound(R, p, V) + 1e-9);
  }
}

TEST_CASE("serial and parallel dobrushin agree bitwise") {
  for (std::uint64_t s = 0; s < 5; ++s) {
    const int m = 40 + int(8 * s);
    const TransitionKernel P = random_kernel(8000 + s, m);
    const WeightFunction V = random_weight(8100 + s, m);
    CHECK(dobrushin_coeff(P, V) == dobrushin_coeff_serial(P, V));
  }
}
