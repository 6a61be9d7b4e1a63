#pragma once

#include <stdexcept>
#include <string>

namespace splitrank {

/// Malformed input data: missing columns, bad cells, invariant violations.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration or hyperparameters. The CLI maps this to exit code 1.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// An estimation step could not produce a result (single-arm data, weak
/// instrument, ...). The CLI maps this to exit code 2.
class EstimationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace splitrank
