#pragma once

#include <stdexcept>
#include <string>

namespace mesorm {

// Exception families map one-to-one onto the CLI exit codes:
// UsageError -> 1, ModelError -> 2, NumericalError -> 3.

class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Input violates a modelling assumption (regularity, realizability, ...).
class ModelError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Iterative solver or quadrature failed to reach its tolerance.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace mesorm
