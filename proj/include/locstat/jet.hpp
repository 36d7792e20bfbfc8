#pragma once
#include <array>
#include <cmath>

#include "locstat/errors.hpp"

namespace locstat {

// Truncated Taylor expansion of a scalar curve u -> f(u): value plus raw
// derivatives up to order 3.  All kernel families carry analytic parameter
// derivatives through this type, so bundle matrices are exact by
// construction (no symbolic differentiation, no finite differences).
struct Jet {
  static constexpr int kMax = 3;
  std::array<double, kMax + 1> d{0.0, 0.0, 0.0, 0.0};  // d[i] = f^(i)

  Jet() = default;
  explicit Jet(double v) { d[0] = v; }
  Jet(double v, double d1, double d2 = 0.0, double d3 = 0.0) : d{v, d1, d2, d3} {}

  static Jet constant(double v) { return Jet(v); }
  // The identity curve u -> u.
  static Jet variable(double u) { return Jet(u, 1.0); }

  double value() const { return d[0]; }

  Jet operator-() const { return {-d[0], -d[1], -d[2], -d[3]}; }

  Jet& operator+=(const Jet& o) {
    for (int i = 0; i <= kMax; ++i) d[i] += o.d[i];
    return *this;
  }
  Jet& operator-=(const Jet& o) {
    for (int i = 0; i <= kMax; ++i) d[i] -= o.d[i];
    return *this;
  }

  friend Jet operator+(Jet a, const Jet& b) { return a += b; }
  friend Jet operator-(Jet a, const Jet& b) { return a -= b; }
  friend Jet operator+(Jet a, double c) { a.d[0] += c; return a; }
  friend Jet operator+(double c, Jet a) { a.d[0] += c; return a; }
  friend Jet operator-(Jet a, double c) { a.d[0] -= c; return a; }
  friend Jet operator-(double c, const Jet& a) { return -a + c; }

  friend Jet operator*(const Jet& a, double c) {
    return {a.d[0] * c, a.d[1] * c, a.d[2] * c, a.d[3] * c};
  }
  friend Jet operator*(double c, const Jet& a) { return a * c; }
  friend Jet operator/(const Jet& a, double c) { return a * (1.0 / c); }

  // Leibniz product rule.
  friend Jet operator*(const Jet& a, const Jet& b) {
    Jet r;
    r.d[0] = a.d[0] * b.d[0];
    r.d[1] = a.d[1] * b.d[0] + a.d[0] * b.d[1];
    r.d[2] = a.d[2] * b.d[0] + 2.0 * a.d[1] * b.d[1] + a.d[0] * b.d[2];
    r.d[3] = a.d[3] * b.d[0] + 3.0 * a.d[2] * b.d[1] + 3.0 * a.d[1] * b.d[2] +
             a.d[0] * b.d[3];
    return r;
  }

  // Quotient: solve f = h*g order by order for h.
  friend Jet operator/(const Jet& f, const Jet& g) {
    if (g.d[0] == 0.0) throw ContractViolation("jet division by zero value");
    Jet h;
    const double inv = 1.0 / g.d[0];
    h.d[0] = f.d[0] * inv;
    h.d[1] = (f.d[1] - h.d[0] * g.d[1]) * inv;
    h.d[2] = (f.d[2] - h.d[0] * g.d[2] - 2.0 * h.d[1] * g.d[1]) * inv;
    h.d[3] = (f.d[3] - h.d[0] * g.d[3] - 3.0 * h.d[1] * g.d[2] -
              3.0 * h.d[2] * g.d[1]) * inv;
    return h;
  }
};

// Faa di Bruno up to order 3: outer[s] = F^(s) evaluated at w.value().
inline Jet jet_compose(const std::array<double, 4>& outer, const Jet& w) {
  Jet r;
  const double w1 = w.d[1], w2 = w.d[2], w3 = w.d[3];
  r.d[0] = outer[0];
  r.d[1] = outer[1] * w1;
  r.d[2] = outer[2] * w1 * w1 + outer[1] * w2;
  r.d[3] = outer[3] * w1 * w1 * w1 + 3.0 * outer[2] * w1 * w2 + outer[1] * w3;
  return r;
}

inline Jet jet_exp(const Jet& w) {
  const double e = std::exp(w.d[0]);
  return jet_compose({e, e, e, e}, w);
}

inline Jet jet_sin(const Jet& w) {
  const double s = std::sin(w.d[0]), c = std::cos(w.d[0]);
  return jet_compose({s, c, -s, -c}, w);
}

inline Jet jet_cos(const Jet& w) {
  const double s = std::sin(w.d[0]), c = std::cos(w.d[0]);
  return jet_compose({c, -s, -c, s}, w);
}

// Integer power by repeated multiplication (exponents stay small here).
inline Jet jet_pow(const Jet& w, int n) {
  if (n < 0) throw ContractViolation("jet_pow: negative exponent");
  Jet r = Jet::constant(1.0);
  for (int i = 0; i < n; ++i) r = r * w;
  return r;
}

}  // namespace locstat
