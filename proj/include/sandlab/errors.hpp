#pragma once

#include <stdexcept>
#include <string>

namespace sandlab {

/// Requested object exceeds a configured size budget (site count, enumeration cap, ...).
class CapacityError : public std::runtime_error {
 public:
  explicit CapacityError(const std::string& what) : std::runtime_error(what) {}
};

/// A config or argument failed validation; the message names the offending field.
class ValidationError : public std::invalid_argument {
 public:
  explicit ValidationError(const std::string& what) : std::invalid_argument(what) {}
};

/// A linear solve violated its residual contract.
class SolverError : public std::runtime_error {
 public:
  explicit SolverError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace sandlab
