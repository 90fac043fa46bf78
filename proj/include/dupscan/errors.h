#pragma once

#include <stdexcept>
#include <string>

namespace dupscan {

// Bad or inconsistent input data: missing files, malformed records,
// unknown ids. The CLI maps these to exit code 2.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A persisted feature index was built with a different backend
// configuration or for a different corpus.
class StaleIndexError : public DataError {
 public:
  using DataError::DataError;
};

// External inference graph is unreadable or does not fit the backend
// contract.
class ModelError : public DataError {
 public:
  using DataError::DataError;
};

// Invalid configuration values (out-of-range thresholds, unknown keys).
class ConfigError : public DataError {
 public:
  using DataError::DataError;
};

// No non-degenerate affine model with at least three inliers exists.
class AlignmentError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace dupscan
