#pragma once

#include <stdexcept>
#include <string>

namespace moe {

// Raised when a computation cannot meet its accuracy budget at the configured
// truncation (e.g. too much probability mass leaves the Fock window). The CLI
// maps this to exit code 2; precondition violations use std::invalid_argument
// and map to exit code 1.
class TruncationError : public std::runtime_error {
  public:
    explicit TruncationError(const std::string& what) : std::runtime_error(what) {}
};

// Raised when a numerical routine fails internally (lost positivity, failed
// convergence) in a way that retrying with different resources cannot fix.
class NumericalError : public std::runtime_error {
  public:
    explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

} // namespace moe
