#pragma once

#include <stdexcept>
#include <string>

namespace rdme {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bad argument values (non-positive bandwidth, alpha outside (0,1), ...).
struct InvalidParameterError : Error {
  using Error::Error;
};

// Malformed input data (CSV rows, invariant violations at construction).
struct DataError : Error {
  using Error::Error;
};

// Estimation is not possible on this sample: support check failed, no
// feasible bandwidth, or the estimand is undefined.
struct IdentificationError : Error {
  using Error::Error;
};

// First-stage jump is zero, so the ratio estimand is undefined.
struct WeakFirstStageError : IdentificationError {
  using IdentificationError::IdentificationError;
};

// Operation called with a configuration it does not support (e.g. the
// worst-case bias formula requires a local linear fit).
struct UnsupportedConfigError : Error {
  using Error::Error;
};

// Two estimates that must share a window/design do not.
struct PairingError : Error {
  using Error::Error;
};

// Config file problems.
struct ConfigError : Error {
  using Error::Error;
};

// Iterative solver failed to converge.
struct SolverError : Error {
  using Error::Error;
};

// Numerical routine (quadrature, root finding) failed its tolerance.
struct NumericError : Error {
  using Error::Error;
};

}  // namespace rdme
