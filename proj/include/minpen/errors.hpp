#pragma once

#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace minpen {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input data: dimension mismatches, degenerate columns, bad labels.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Invalid parameters or configuration (negative penalties, enumeration caps).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// An iterative solver hit its iteration cap or diverged. Carries the last iterate.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, Eigen::MatrixXd last_iterate)
      : Error(what), last_iterate_(std::move(last_iterate)) {}

  const Eigen::MatrixXd& last_iterate() const noexcept { return last_iterate_; }

 private:
  Eigen::MatrixXd last_iterate_;
};

/// Post-selection inference could not be carried out (singular blocks, empty truncation).
class InferenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace minpen
