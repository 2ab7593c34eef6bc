#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>

#include <Eigen/Core>

namespace npmean {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A sample or configuration breaks one of its invariants.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Malformed input file. `row()` is the 1-based data row (header excluded), 0 for header problems.
class ParseError : public ValidationError {
 public:
  ParseError(const std::string& what, std::size_t row)
      : ValidationError(what), row_(row) {}
  std::size_t row() const noexcept { return row_; }

 private:
  std::size_t row_;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Iterative solver stopped without meeting its tolerance.
class ConvergenceError : public Error {
 public:
  explicit ConvergenceError(const std::string& what,
                            std::optional<Eigen::VectorXd> last_iterate = std::nullopt)
      : Error(what), last_(std::move(last_iterate)) {}
  const std::optional<Eigen::VectorXd>& last_iterate() const noexcept { return last_; }

 private:
  std::optional<Eigen::VectorXd> last_;
};

/// Quasi-complete separation in a logistic fit.
class SeparationError : public ConvergenceError {
 public:
  using ConvergenceError::ConvergenceError;
};

class SingularityError : public Error {
 public:
  using Error::Error;
};

/// The requested model cannot be identified from the data (e.g. a constant regressor).
class DegenerateModelError : public Error {
 public:
  using Error::Error;
};

class InsufficientDataError : public Error {
 public:
  using Error::Error;
};

}  // namespace npmean
