#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace annealed {

/// Invalid arguments or an ill-formed ensemble/factor description.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A precondition on the mathematical objects does not hold
/// (e.g. the uniform point is not a fixed point).
class PreconditionError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// A message update produced an all-zero vector.
class DegenerateMessageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A computation would exceed its configured size or enumeration budget.
class BudgetExceeded : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// No type distribution with the requested marginals exists inside the
/// support of the factor. `certificate` is a separating direction.
class InfeasibleError : public std::runtime_error {
 public:
  InfeasibleError(const std::string& what, std::vector<double> certificate)
      : std::runtime_error(what), certificate_(std::move(certificate)) {}
  const std::vector<double>& certificate() const noexcept { return certificate_; }

 private:
  std::vector<double> certificate_;
};

/// No stationary point could be located.
class NumericalFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace annealed
