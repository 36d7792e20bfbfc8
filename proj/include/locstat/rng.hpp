#pragma once
#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include "locstat/errors.hpp"

namespace locstat {

// Philox4x32-10 counter-based generator (Salmon, Moraes, Dror, Shaw 2011).
// Output depends only on (key, counter), never on call order, which is what
// makes parallel simulation bit-identical to the serial reference: every
// random variate is addressed by (master seed, replicate, t, draw index).
struct Philox4x32 {
  using Counter = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  static constexpr std::uint32_t kM0 = 0xD2511F53u;
  static constexpr std::uint32_t kM1 = 0xCD9E8D57u;
  static constexpr std::uint32_t kW0 = 0x9E3779B9u;
  static constexpr std::uint32_t kW1 = 0xBB67AE85u;

  static Counter block(Counter c, Key k) {
    for (int round = 0; round < 10; ++round) {
      const std::uint64_t p0 = std::uint64_t(kM0) * c[0];
      const std::uint64_t p1 = std::uint64_t(kM1) * c[2];
      const std::uint32_t hi0 = std::uint32_t(p0 >> 32), lo0 = std::uint32_t(p0);
      const std::uint32_t hi1 = std::uint64_t(p1) >> 32, lo1 = std::uint32_t(p1);
      c = {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
      k[0] += kW0;
      k[1] += kW1;
    }
    return c;
  }
};

// One logical stream of draws, addressed by (seed, replicate, t, tag).  The
// draw index runs inside the philox counter, so a stream can hand out any
// number of variates (rejection samplers included) while staying independent
// of every other (replicate, t) pair.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint32_t replicate, std::uint32_t t,
            std::uint32_t tag = 0)
      : key_{std::uint32_t(seed), std::uint32_t(seed >> 32)},
        base_{0, t, replicate, tag} {}

  std::uint64_t next_u64() {
    Philox4x32::Counter c = base_;
    c[0] = draw_++;
    const auto r = Philox4x32::block(c, key_);
    return (std::uint64_t(r[0]) << 32) | r[1];
  }

  // Uniform on [0,1) with 53 random bits.
  double u01() { return double(next_u64() >> 11) * 0x1.0p-53; }

  std::uint32_t draws_used() const { return draw_; }

 private:
  Philox4x32::Key key_;
  Philox4x32::Counter base_;
  std::uint32_t draw_ = 0;
};

// Inverse normal CDF (Acklam's rational approximation) polished with one
// Halley step against erfc; accurate to ~1e-15 which keeps the single-draw
// contract for Gaussian variates.
inline double inverse_normal_cdf(double p) {
  if (!(p > 0.0 && p < 1.0))
    throw ContractViolation("inverse_normal_cdf: p outside (0,1)");
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                 -2.759285104469687e+02, 1.383577518672690e+02,
                                 -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                 -1.556989798598866e+02, 6.680131188771972e+01,
                                 -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                 -2.400758277161838e+00, -2.549732539343734e+00,
                                 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                 2.445134137142996e+00, 3.754408661907416e+00};
  const double plow = 0.02425;
  double x;
  if (p < plow) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - plow) {
    const double q = p - 0.5, r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) *
        q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log(1.0 - p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  // One Halley step on Phi(x) - p = 0.
  const double e = 0.5 * std::erfc(-x / std::sqrt(2.0)) - p;
  const double u = e * std::sqrt(2.0 * M_PI) * std::exp(x * x / 2.0);
  x = x - u / (1.0 + x * u / 2.0);
  return x;
}

inline double draw_normal(RngStream& g) {
  double p;
  do {
    p = g.u01();
  } while (p <= 0.0);
  return inverse_normal_cdf(p);
}

// Standard logistic via inverse CDF.
inline double draw_logistic(RngStream& g) {
  double p;
  do {
    p = g.u01();
  } while (p <= 0.0 || p >= 1.0);
  return std::log(p / (1.0 - p));
}

inline bool draw_bernoulli(RngStream& g, double prob) { return g.u01() < prob; }

inline long draw_binomial(RngStream& g, long n, double prob) {
  long s = 0;
  for (long i = 0; i < n; ++i) s += g.u01() < prob ? 1 : 0;
  return s;
}

// Knuth's multiplicative method; means are desk-scale so the O(lambda) loop
// is fine, large means are split exactly.
inline long draw_poisson(RngStream& g, double lambda) {
  if (lambda < 0.0) throw ContractViolation("draw_poisson: negative mean");
  long total = 0;
  while (lambda > 30.0) {
    double half = lambda / 2.0;
    // Poisson(a+b) = Poisson(a) + Poisson(b); recurse on halves.
    total += draw_poisson(g, half);
    lambda -= half;
  }
  const double limit = std::exp(-lambda);
  long k = 0;
  double prod = g.u01();
  while (prod > limit) {
    ++k;
    prod *= g.u01();
  }
  return total + k;
}

// Marsaglia-Tsang squeeze method for shape >= 1, boosted below 1.
inline double draw_gamma(RngStream& g, double shape) {
  if (shape <= 0.0) throw ContractViolation("draw_gamma: shape <= 0");
  if (shape < 1.0) {
    const double u = g.u01();
    return draw_gamma(g, shape + 1.0) * std::pow(u, 1.0 / shape);
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x, v;
    do {
      x = draw_normal(g);
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = g.u01();
    if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
    if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v)))
      return d * v;
  }
}

inline double draw_student_t(RngStream& g, double nu) {
  const double z = draw_normal(g);
  const double chi2 = 2.0 * draw_gamma(g, nu / 2.0);
  return z / std::sqrt(chi2 / nu);
}

// Inversion sampling from a finite pmf (row of a transition kernel).
inline int draw_categorical(RngStream& g, const double* pmf, int m) {
  const double u = g.u01();
  double acc = 0.0;
  for (int i = 0; i < m; ++i) {
    acc += pmf[i];
    if (u < acc) return i;
  }
  return m - 1;  // guard against rounding at the top end
}

}  // namespace locstat
