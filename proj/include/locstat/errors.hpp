#pragma once
#include <stdexcept>
#include <string>

namespace locstat {

// Base class for all library errors.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// A caller violated a documented precondition / invariant (bad dimensions,
// non-stochastic rows, u outside [0,1], ...).
struct ContractViolation : Error {
  using Error::Error;
};

// Eigenvalue 1 of a transition matrix is not simple within tolerance, or the
// invariant-measure solve could not produce a unique nonnegative solution.
struct NonUniqueInvariant : Error {
  using Error::Error;
};

// A finite-difference stencil would leave the parameter interval [0,1].
struct StencilOutOfDomain : Error {
  using Error::Error;
};

// A product state space exceeds the configured entry cap.
struct ProductSpaceTooLarge : Error {
  using Error::Error;
};

// Truncation / discretization loses more mass than the configured bound.
struct TruncationTooCoarse : Error {
  using Error::Error;
};

// A model definition violates its own standing assumptions (contraction sum
// >= 1, non-integrable noise moment, density below its floor, ...).
struct ModelInvariantViolated : Error {
  using Error::Error;
};

// No minorization measure exists on the candidate small set (eta == 0).
struct NoMinorization : Error {
  using Error::Error;
};

// The local-polynomial design matrix is singular (fewer active design points
// than coefficients).
struct DesignSingular : Error {
  using Error::Error;
};

// Malformed configuration input (JSON schema problems). CLI maps this to
// exit code 2.
struct ConfigError : Error {
  using Error::Error;
};

}  // namespace locstat
