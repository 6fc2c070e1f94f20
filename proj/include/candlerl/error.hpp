#pragma once

#include <stdexcept>
#include <string>

namespace candlerl {

/// Malformed or unusable input data (bad CSV, too-short series, empty split).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration or parameter combination.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shape or numeric failure inside a computation.
class ComputeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace candlerl
