#pragma once
// Shared fixtures for the test suite.  The two-state family here has closed
// forms for everything (invariant law, derivatives, contraction), so most
// expected values below are exact.
#include <cmath>

#include "locstat/kernel_family.hpp"

namespace testsup {

// a(u) = 0.3 + 0.4u, b(u) = 0.5 - 0.2u.
inline locstat::KernelFamily testbed() { return locstat::two_state_testbed(); }

inline double tb_a(double u) { return 0.3 + 0.4 * u; }
inline double tb_b(double u) { return 0.5 - 0.2 * u; }

// pi_u = (b, a) / (a + b).
inline double tb_pi0(double u) { return tb_b(u) / (tb_a(u) + tb_b(u)); }
inline double tb_pi1(double u) { return tb_a(u) / (tb_a(u) + tb_b(u)); }

// pi_1(u) = (0.3 + 0.4u)/(0.8 + 0.2u); derivatives in closed form.
inline double tb_pi1_deriv(double u, int ell) {
  const double d = 0.8 + 0.2 * u;
  switch (ell) {
    case 0:
      return (0.3 + 0.4 * u) / d;
    case 1:
      return 0.26 / (d * d);
    case 2:
      return -0.104 / (d * d * d);
    case 3:
      return 0.0624 / (d * d * d * d);
  }
  return 0.0;
}

// Second eigenvalue of the testbed kernel: 1 - a - b = 0.2(1 - u).
inline double tb_lambda(double u) { return 0.2 * (1.0 - u); }

}  // namespace testsup
