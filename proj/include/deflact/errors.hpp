#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace deflact {

/// Vector sizes do not match an operator or tuple.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Invalid solver or generator parameters, detected before any work is done.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A set of vectors (or their image under an operator) lost linear independence.
class RankDeficiencyError : public std::runtime_error {
 public:
  RankDeficiencyError(const std::string& what, std::size_t column)
      : std::runtime_error(what), column_(column) {}

  std::size_t column() const noexcept { return column_; }

 private:
  std::size_t column_;
};

/// An iteration produced non-finite values. Carries the last finite iterate.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(const std::string& what, Eigen::VectorXd last_finite, std::size_t iteration)
      : std::runtime_error(what), last_finite_(std::move(last_finite)), iteration_(iteration) {}

  const Eigen::VectorXd& last_finite() const noexcept { return last_finite_; }
  std::size_t iteration() const noexcept { return iteration_; }

 private:
  Eigen::VectorXd last_finite_;
  std::size_t iteration_;
};

/// Malformed or unreadable file.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace deflact
