#pragma once

#include <stdexcept>
#include <string>

namespace spurious {

// Bad input files, inconsistent datasets, infeasible episodes.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Missing or malformed configuration / command-line values.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-finite activations, losses, gradients or parameter updates.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace spurious
