#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace cfl {

/// Raised when a function argument violates its documented precondition.
class InvalidParameter : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Malformed input data (CSV rows, labels, shard sizes).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or incomplete experiment configuration.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An iterative solver hit its iteration cap before reaching the requested
/// tolerance. Carries the best residual seen so callers can tell a mis-set
/// Lipschitz bound from a cap that is merely too small.
class NonConvergence : public std::runtime_error {
 public:
  NonConvergence(const std::string& what, double best_residual, std::size_t iterations)
      : std::runtime_error(what), best_residual_(best_residual), iterations_(iterations) {}

  double best_residual() const noexcept { return best_residual_; }
  std::size_t iterations() const noexcept { return iterations_; }

 private:
  double best_residual_;
  std::size_t iterations_;
};

}  // namespace cfl
