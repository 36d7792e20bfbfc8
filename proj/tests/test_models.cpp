#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "locstat/finite_chain.hpp"
#include "locstat/models.hpp"
#include "support.hpp"

using namespace locstat;

namespace {

double normal_cdf(double t) { return 0.5 * std::erfc(-t / std::sqrt(2.0)); }

Eigen::MatrixXd fd_matrix(const KernelFamily& fam, double u, double h) {
  return (fam.eval(u + h).matrix() - fam.eval(u - h).matrix()) / (2.0 * h);
}

DoeblinConfig small_doeblin() {
  DoeblinConfig cfg;
  cfg.base_measure = Eigen::Vector4d(0.1, 0.2, 0.3, 0.4);
  Eigen::MatrixXd g(4, 4);
  RngStream r(99, 0, 0);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) g(i, j) = 2.0 * r.u01() - 1.0;
  cfg.g = center_rows(g, cfg.base_measure);
  cfg.amplitude = 0.25;
  return cfg;
}

}  // namespace

// ---------------------------------------------------------------------------
// noise densities
// ---------------------------------------------------------------------------

TEST_CASE("density values at zero match closed forms") {
  NoiseDensity gauss{NoiseDensity::Type::Gaussian};
  CHECK(gauss.pdf(0.0) == doctest::Approx(0.3989422804014327).epsilon(1e-14));
  NoiseDensity logi{NoiseDensity::Type::Logistic};
  CHECK(logi.pdf(0.0) == doctest::Approx(0.25).epsilon(1e-15));
  NoiseDensity t5{NoiseDensity::Type::StudentT, 5.0};
  // t_5 density at 0 is 8 / (3 sqrt(5) pi).
  CHECK(t5.pdf(0.0) ==
        doctest::Approx(8.0 / (3.0 * std::sqrt(5.0) * M_PI)).epsilon(1e-14));
}

TEST_CASE("density derivatives agree with central differences") {
  const double h = 1e-5;
  for (NoiseDensity f :
       {NoiseDensity{NoiseDensity::Type::Gaussian},
        NoiseDensity{NoiseDensity::Type::Logistic},
        NoiseDensity{NoiseDensity::Type::StudentT, 5.0},
        NoiseDensity{NoiseDensity::Type::StudentT, 2.5}}) {
    for (double z : {-1.3, 0.4, 2.0}) {
      for (int s = 0; s < 3; ++s) {
        const double fd =
            (f.pdf_deriv(z + h, s) - f.pdf_deriv(z - h, s)) / (2.0 * h);
        CHECK(f.pdf_deriv(z, s + 1) == doctest::Approx(fd).epsilon(1e-7));
      }
    }
  }
}

TEST_CASE("moment checks recover known absolute moments") {
  NoiseDensity gauss{NoiseDensity::Type::Gaussian};
  auto m4 = noise_moment_check(gauss, 4.0, 0);
  CHECK(m4.finite);
  CHECK(m4.value == doctest::Approx(3.0).epsilon(1e-9));

  NoiseDensity logi{NoiseDensity::Type::Logistic};
  auto m2 = noise_moment_check(logi, 2.0, 0);
  CHECK(m2.finite);
  CHECK(m2.value == doctest::Approx(M_PI * M_PI / 3.0).epsilon(1e-9));

  NoiseDensity t5{NoiseDensity::Type::StudentT, 5.0};
  auto t4 = noise_moment_check(t5, 4.0, 0);
  CHECK(t4.finite);
  // The polynomial tail converges slowly; the value is a diagnostic, not a
  // precision quantity.
  CHECK(t4.value == doctest::Approx(25.0).epsilon(1e-4));
}

TEST_CASE("heavy tails are detected as divergent") {
  NoiseDensity t3{NoiseDensity::Type::StudentT, 3.0};
  CHECK_FALSE(noise_moment_check(t3, 4.0, 0).finite);  // E|y|^4 = inf for t_3
  NoiseDensity t5{NoiseDensity::Type::StudentT, 5.0};
  CHECK_FALSE(noise_moment_check(t5, 5.0, 0).finite);  // boundary case
  CHECK(noise_moment_check(t5, 4.5, 0).finite);
}

// ---------------------------------------------------------------------------
// pmf bundles
// ---------------------------------------------------------------------------

TEST_CASE("poisson bundle matches the closed form with derivatives") {
  // lambda(u) = 1.5 + 0.5u at u = 0.2.
  ScalarCurve lam = ScalarCurve::poly({1.5, 0.5});
  const PmfBundle pb = poisson_pmf_bundle(lam.jet(0.2), 12, 1);
  const double l = 1.6, lp = 0.5;
  const double e = std::exp(-l);
  CHECK(pb.rows(0, 0) == doctest::Approx(e).epsilon(1e-14));
  CHECK(pb.rows(0, 3) == doctest::Approx(e * l * l * l / 6.0).epsilon(1e-14));
  // d/du p_j = e^{-l} l^{j-1} (j - l) / j! * l'.
  CHECK(pb.rows(1, 0) == doctest::Approx(-e * lp).epsilon(1e-13));
  CHECK(pb.rows(1, 3) ==
        doctest::Approx(e * l * l * (3.0 - l) / 6.0 * lp).epsilon(1e-13));
}

TEST_CASE("binomial bundle matches the closed form with derivatives") {
  // alpha(u) = 0.3 + 0.2u at u = 0.5: alpha = 0.4, alpha' = 0.2, count 5.
  ScalarCurve al = ScalarCurve::poly({0.3, 0.2});
  const PmfBundle pb = binomial_pmf_bundle(al.jet(0.5), 5, 10, 1);
  CHECK(pb.rows(0, 1) ==
        doctest::Approx(5.0 * 0.4 * std::pow(0.6, 4)).epsilon(1e-14));
  CHECK(pb.rows(0, 2) ==
        doctest::Approx(10.0 * 0.16 * std::pow(0.6, 3)).epsilon(1e-14));
  // d/du C(5,1) a (1-a)^4 = 5 [(1-a)^4 - 4a(1-a)^3] a'.
  const double d1 =
      5.0 * (std::pow(0.6, 4) - 4.0 * 0.4 * std::pow(0.6, 3)) * 0.2;
  CHECK(pb.rows(1, 1) == doctest::Approx(d1).epsilon(1e-13));
  double mass = 0.0;
  for (int j = 0; j <= 10; ++j) mass += pb.rows(0, j);
  CHECK(mass == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("tail folding closes rows exactly") {
  ScalarCurve lam = ScalarCurve::poly({2.0, 1.0});
  PmfBundle pb = poisson_pmf_bundle(lam.jet(0.3), 10, 2);
  // Absorbed mass = upper tail of Poisson(2.3) beyond 10.
  double cdf = 0.0, term = std::exp(-2.3);
  for (int j = 0; j <= 10; ++j) {
    cdf += term;
    term *= 2.3 / (j + 1);
  }
  const double absorbed = fold_tail_into_top(pb);
  CHECK(absorbed == doctest::Approx(1.0 - cdf).epsilon(1e-10));
  for (int ell = 0; ell <= 2; ++ell) {
    double s = 0.0;
    for (int j = 0; j <= 10; ++j) s += pb.rows(ell, j);
    CHECK(std::abs(s - (ell == 0 ? 1.0 : 0.0)) <= 1e-14);
  }
}

// ---------------------------------------------------------------------------
// INAR / INARCH
// ---------------------------------------------------------------------------

TEST_CASE("inar(1) rows match hand-computed entries") {
  InarConfig cfg;
  cfg.p = 1;
  cfg.thinning = {{ThinningSpec::Type::Bernoulli, ScalarCurve::constant(0.5)}};
  cfg.immigration_mean = ScalarCurve::constant(1.0);
  cfg.truncation_N = 25;
  cfg.loss_tol = 1e-5;  // hand checks only touch the bottom entries
  const KernelFamily fam = build_inar(cfg);
  const Eigen::MatrixXd Q = fam.eval(0.7).matrix();
  const double e = std::exp(-1.0);
  CHECK(Q(0, 0) == doctest::Approx(e).epsilon(1e-14));        // Poisson(1) at 0
  CHECK(Q(1, 0) == doctest::Approx(0.5 * e).epsilon(1e-14));  // no survivor
  CHECK(Q(1, 1) == doctest::Approx(e).epsilon(1e-14));  // 0.5e + 0.5e
}

TEST_CASE("inar(1) parameter derivative matches the product rule") {
  InarConfig cfg;
  cfg.p = 1;
  cfg.thinning = {
      {ThinningSpec::Type::Bernoulli, ScalarCurve::poly({0.3, 0.2})}};
  cfg.immigration_mean = ScalarCurve::constant(1.0);
  cfg.truncation_N = 25;
  cfg.loss_tol = 1e-5;
  const KernelFamily fam = build_inar(cfg);
  // P(0 | 1)(u) = (1 - alpha(u)) e^{-1}, so its u-derivative is -0.2 e^{-1}.
  const Eigen::MatrixXd D = fam.deriv(0.25, 1);
  CHECK(D(1, 0) == doctest::Approx(-0.2 * std::exp(-1.0)).epsilon(1e-13));
}

TEST_CASE("inar bundles agree with finite differences") {
  InarConfig cfg;
  cfg.p = 1;
  cfg.thinning = {
      {ThinningSpec::Type::Bernoulli, ScalarCurve::poly({0.3, 0.2})}};
  cfg.immigration_mean = ScalarCurve::poly({0.8, 0.3});
  cfg.truncation_N = 70;  // sized for the tight default loss tolerance
  const KernelFamily fam = build_inar(cfg);
  const Eigen::MatrixXd D = fam.deriv(0.4, 1);
  const Eigen::MatrixXd F = fd_matrix(fam, 0.4, 1e-4);
  CHECK((D - F).cwiseAbs().maxCoeff() <= 1e-7);
}

TEST_CASE("a too-coarse caller truncation is rejected at build") {
  InarConfig cfg;
  cfg.p = 1;
  cfg.thinning = {{ThinningSpec::Type::Bernoulli, ScalarCurve::constant(0.5)}};
  cfg.immigration_mean = ScalarCurve::constant(1.0);
  cfg.truncation_N = 5;
  CHECK_THROWS_AS((void)build_inar(cfg), TruncationTooCoarse);
}

TEST_CASE("suggested truncation is sane and buildable") {
  InarConfig cfg;
  cfg.p = 1;
  cfg.thinning = {
      {ThinningSpec::Type::Bernoulli, ScalarCurve::poly({0.4, 0.1})}};
  cfg.immigration_mean = ScalarCurve::poly({0.8, 0.2});
  const int N = suggest_truncation(cfg);
  CHECK(N >= 8);
  CHECK(N <= 120);
  cfg.truncation_N = N;
  const KernelFamily fam = build_inar(cfg);
  CHECK(fam.space().size() == N + 1);
  const Measure pi = invariant_measure(fam.eval(0.5));
  CHECK(pi(N) + pi(N - 1) <= 1e-9);
}

TEST_CASE("inarch convolution build equals the direct poisson row") {
  InarchConfig cfg;
  cfg.alpha0 = ScalarCurve::poly({0.5, 0.2});
  cfg.alpha = {ScalarCurve::constant(0.25), ScalarCurve::poly({0.1, 0.05})};
  cfg.truncation_N = 25;
  // Absorption is applied identically on both paths, so the comparison does
  // not need a tight truncation.
  cfg.loss_tol = 1e-4;
  const KernelFamily fam = build_inarch(cfg);
  const int m = cfg.truncation_N + 1;
  REQUIRE(fam.space().size() == m * m);
  const auto B = fam.bundle(0.6, 3);
  for (int x : {0, 1, 7, 12 * m + 5, 20 * m + 20, m * m - 1}) {
    const std::vector<int> lags = {x % m, x / m};  // most recent first
    PmfBundle direct = inarch_direct_row(cfg, 0.6, lags, 3);
    fold_tail_into_top(direct);
    const int colbase = (x % m) * m;
    for (int ell = 0; ell <= 3; ++ell)
      for (int y = 0; y < m; ++y)
        CHECK(std::abs(B[ell](x, colbase + y) - direct.rows(ell, y)) <=
              1e-12);
  }
}

TEST_CASE("inar load >= 1 is rejected") {
  InarConfig cfg;
  cfg.p = 2;
  cfg.thinning = {{ThinningSpec::Type::Bernoulli, ScalarCurve::constant(0.6)},
                  {ThinningSpec::Type::Poisson, ScalarCurve::constant(0.5)}};
  cfg.immigration_mean = ScalarCurve::constant(1.0);
  CHECK_THROWS_AS((void)suggest_truncation(cfg), ModelInvariantViolated);
}

// ---------------------------------------------------------------------------
// TvAR / SETAR discretizer
// ---------------------------------------------------------------------------

TEST_CASE("gaussian ar(1) rows match normal cdf differences") {
  TvarConfig cfg;
  cfg.mean.type = TvarMean::Type::Linear;
  cfg.mean.a = {ScalarCurve::constant(0.5)};
  cfg.disc = {10.0, 201, 1e-6};
  const KernelFamily fam = build_tvar(cfg);
  const Eigen::MatrixXd Q = fam.eval(0.3).matrix();
  const auto& nodes = fam.space().points;
  const double h2 = 0.05;
  const int i = 130;  // node 3.0, mean 1.5
  CHECK(nodes[i][0] == doctest::Approx(3.0));
  for (int j = 60; j <= 140; j += 8) {
    const double c = nodes[j][0];
    const double expect =
        normal_cdf(c + h2 - 1.5) - normal_cdf(c - h2 - 1.5);
    CHECK(Q(i, j) == doctest::Approx(expect).epsilon(1e-10));
  }
  // Remainder closure: each probability row sums to 1 essentially exactly,
  // each derivative row to 0.
  const auto B = fam.bundle(0.3, 3);
  for (int r : {0, 57, 100, 200}) {
    CHECK(std::abs(B[0].row(r).sum() - 1.0) <= 1e-13);
    for (int ell = 1; ell <= 3; ++ell)
      CHECK(std::abs(B[ell].row(r).sum()) <= 1e-12);
  }
}

TEST_CASE("setar bundles agree with finite differences") {
  TvarConfig cfg;
  cfg.mean.type = TvarMean::Type::Setar;
  cfg.mean.a_plus = ScalarCurve::poly({0.5, -0.2});
  cfg.mean.a_minus = ScalarCurve::poly({0.3, 0.1});
  cfg.disc = {10.0, 201, 1e-6};
  const KernelFamily fam = build_tvar(cfg);
  const Eigen::MatrixXd D = fam.deriv(0.5, 1);
  const Eigen::MatrixXd F = fd_matrix(fam, 0.5, 1e-4);
  CHECK((D - F).cwiseAbs().maxCoeff() <= 1e-6);
}

TEST_CASE("fine-grid setar on a narrower domain stays consistent") {
  TvarConfig cfg;
  cfg.mean.type = TvarMean::Type::Setar;
  cfg.mean.a_plus = ScalarCurve::poly({0.5, -0.2});
  cfg.mean.a_minus = ScalarCurve::poly({0.3, 0.1});
  cfg.sigma = ScalarCurve::poly({1.0, 0.2});
  cfg.disc = {8.0, 801, 1e-3};  // boundary mass ~ Phi(-4), absorbed by design
  const KernelFamily fam = build_tvar(cfg);
  const Eigen::MatrixXd D = fam.deriv(0.5, 1);
  const Eigen::MatrixXd F = fd_matrix(fam, 0.5, 1e-4);
  CHECK((D - F).cwiseAbs().maxCoeff() <= 1e-4);
}

TEST_CASE("tvar(2) builds on the tuple space and differentiates correctly") {
  TvarConfig cfg;
  cfg.mean.type = TvarMean::Type::Linear;
  cfg.mean.a = {ScalarCurve::poly({0.25, 0.05}), ScalarCurve::constant(0.1)};
  cfg.disc = {8.0, 41, 1e-6};
  const KernelFamily fam = build_tvar(cfg);
  CHECK(fam.space().size() == 41 * 41);
  const Measure pi = invariant_measure(fam.eval(0.5));
  CHECK(pi.sum() == doctest::Approx(1.0).epsilon(1e-12));
  const Eigen::MatrixXd D = fam.deriv(0.5, 1);
  const Eigen::MatrixXd F = fd_matrix(fam, 0.5, 1e-4);
  CHECK((D - F).cwiseAbs().maxCoeff() <= 1e-6);
}

TEST_CASE("tvar contract violations are rejected") {
  TvarConfig cfg;
  cfg.mean.type = TvarMean::Type::Linear;
  cfg.mean.a = {ScalarCurve::constant(1.1)};  // not a contraction
  cfg.disc = {10.0, 51, 1e-6};
  CHECK_THROWS_AS((void)build_tvar(cfg), ModelInvariantViolated);

  TvarConfig heavy;
  heavy.mean.a = {ScalarCurve::constant(0.4)};
  heavy.noise = {NoiseDensity::Type::StudentT, 3.0};  // E|y|^4 diverges
  heavy.disc = {10.0, 51, 1e-6};
  CHECK_THROWS_AS((void)build_tvar(heavy), ModelInvariantViolated);

  TvarConfig narrow;
  narrow.mean.a = {ScalarCurve::constant(0.5)};
  narrow.disc = {2.0, 21, 1e-6};  // grid far too narrow for the tails
  CHECK_THROWS_AS((void)build_tvar(narrow), TruncationTooCoarse);
}

// ---------------------------------------------------------------------------
// Doeblin family
// ---------------------------------------------------------------------------

TEST_CASE("doeblin invariant at u = 0 is the base measure") {
  const DoeblinConfig cfg = small_doeblin();
  const KernelFamily fam = build_doeblin(cfg);
  // sin(0) = 0, so Q_0(x, .) = mu for every x.
  const Measure pi = invariant_measure(fam.eval(0.0));
  for (int i = 0; i < 4; ++i)
    CHECK(pi(i) == doctest::Approx(cfg.base_measure(i)).epsilon(1e-12));
  // dQ/du at 0 = amplitude * 2 pi * g(x,y) mu(y).
  const Eigen::MatrixXd D = fam.deriv(0.0, 1);
  for (int x = 0; x < 4; ++x)
    for (int y = 0; y < 4; ++y)
      CHECK(D(x, y) == doctest::Approx(cfg.amplitude * 2.0 * M_PI *
                                       cfg.g(x, y) * cfg.base_measure(y))
                           .epsilon(1e-12));
}

TEST_CASE("doeblin floor and centering are enforced") {
  DoeblinConfig cfg = small_doeblin();
  CHECK(doeblin_density_floor(cfg) > 0.0);
  DoeblinConfig loud = cfg;
  loud.amplitude = 1.0 / cfg.g.cwiseAbs().maxCoeff() + 0.5;
  CHECK_THROWS_AS((void)build_doeblin(loud), ModelInvariantViolated);
  DoeblinConfig off = cfg;
  off.g(1, 2) += 0.3;  // breaks the centering
  CHECK_THROWS_AS((void)build_doeblin(off), ModelInvariantViolated);
}

// ---------------------------------------------------------------------------
// random environment chain
// ---------------------------------------------------------------------------

TEST_CASE("random environment family is stochastic and differentiable") {
  RandomEnvConfig cfg;
  cfg.a0 = ScalarCurve::poly({-0.2, 0.5});
  cfg.a1 = ScalarCurve::poly({0.8, -0.3});
  cfg.beta = ScalarCurve::sine(0.3, 0.2, 1.0, 0.0);
  const KernelFamily fam = build_random_env(cfg);
  CHECK(fam.space().size() == 2 * cfg.env_bins);
  const Measure pi = invariant_measure(fam.eval(0.4));
  CHECK(pi.minCoeff() >= 0.0);
  const Eigen::MatrixXd D = fam.deriv(0.4, 1);
  const Eigen::MatrixXd F = fd_matrix(fam, 0.4, 1e-4);
  CHECK((D - F).cwiseAbs().maxCoeff() <= 1e-6);
}

// ---------------------------------------------------------------------------
// condition report / weights
// ---------------------------------------------------------------------------

TEST_CASE("condition report certifies the reference families") {
  const auto rep = sc_condition_report(testsup::testbed(), 3, 0.05);
  CHECK(rep.all_pass);
  bool saw_drift = false;
  for (const auto& c : rep.checks)
    if (c.name == "window_drift") {
      saw_drift = true;
      CHECK(c.value < 1.0);
    }
  CHECK(saw_drift);

  const auto drep = sc_condition_report(build_doeblin(small_doeblin()), 2);
  CHECK(drep.all_pass);
}

TEST_CASE("condition report certifies a discretized autoregression") {
  TvarConfig cfg;
  cfg.mean.a = {ScalarCurve::poly({0.3, 0.1})};
  cfg.disc = {10.0, 101, 1e-5};
  const auto rep = sc_condition_report(build_tvar(cfg), 1, 0.1, 5);
  CHECK(rep.all_pass);
}

TEST_CASE("exponential weights behave") {
  const StateSpace sp = StateSpace::grid({-2.0, -1.0, 0.0, 1.0, 2.0});
  const WeightFunction w = exp_weight(sp, 0.5);
  CHECK(w(0) == doctest::Approx(std::exp(1.0)));
  CHECK(w(2) == doctest::Approx(1.0));
  CHECK_THROWS_AS((void)exp_weight(sp, 600.0), ContractViolation);
}

// ---------------------------------------------------------------------------
// native samplers
// ---------------------------------------------------------------------------

TEST_CASE("gaussian ar(1) sampler starts in its stationary law") {
  TvarConfig cfg;
  cfg.mean.a = {ScalarCurve::constant(0.6)};
  const ModelSampler s = tvar_sampler(cfg);
  CHECK(s.default_burn_in == 0);
  double sum = 0.0, sq = 0.0;
  const int n = 20000;
  for (int r = 0; r < n; ++r) {
    RngStream g(2024, std::uint32_t(r), 0);
    const double x = s.initial(g)[0];
    sum += x;
    sq += x * x;
  }
  const double var = sq / n - (sum / n) * (sum / n);
  CHECK(var == doctest::Approx(1.0 / 0.64).epsilon(0.05));
}

TEST_CASE("inar sampler produces integer non-negative states") {
  InarConfig cfg;
  cfg.p = 2;
  cfg.thinning = {{ThinningSpec::Type::Bernoulli, ScalarCurve::constant(0.3)},
                  {ThinningSpec::Type::Poisson, ScalarCurve::constant(0.1)}};
  cfg.immigration_mean = ScalarCurve::constant(1.2);
  const ModelSampler s = inar_sampler(cfg);
  CHECK(s.integer_states);
  RngStream g(7, 0, 0);
  std::vector<double> lags = {3.0, 1.0};
  for (int t = 0; t < 200; ++t) {
    const double x = s.step(lags, 0.5, g);
    CHECK(x >= 0.0);
    CHECK(x == std::floor(x));
    lags[1] = lags[0];
    lags[0] = x;
  }
}
