#pragma once

#include <stdexcept>
#include <string>

namespace sfmot {

/// Malformed file contents (bad column count, unparseable number, truncation).
struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Invalid configuration or calibration.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Inputs that are well-formed but inconsistent with each other.
struct InputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A caller broke an operation's precondition (e.g. flow not aligned with its cloud).
struct ContractViolation : std::logic_error {
  using std::logic_error::logic_error;
};

}  // namespace sfmot
