#pragma once

#include <stdexcept>
#include <string>

namespace eses {

// Invalid or inconsistent configuration (bad key, non-positive size, ...).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Caller passed arguments outside an operation's contract.
struct UsageError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Mathematically degenerate input (zero window, flat transfer curve, ...).
struct DomainError : std::domain_error {
  using std::domain_error::domain_error;
};

}  // namespace eses
