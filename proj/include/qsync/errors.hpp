#pragma once

#include <stdexcept>
#include <string>

namespace qsync {

/// Malformed or inconsistent input: bad dimensions, out-of-range parameters,
/// unknown config keys.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A design condition cannot be met, e.g. Ts*b0 >= 1 or rho <= q.
class FeasibilityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The plant is not hyper-minimum-phase, so no passifying (P, K) exists.
class StructuralInfeasibility : public FeasibilityError {
 public:
  using FeasibilityError::FeasibilityError;
};

}  // namespace qsync
