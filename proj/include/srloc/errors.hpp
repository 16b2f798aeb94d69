#pragma once

#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace srloc {

/// Invalid argument or violated precondition at an API boundary.
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Sensor geometry cannot determine the target (collinear, coincident, too few sensors).
class DegenerateGeometryError : public std::runtime_error {
 public:
  DegenerateGeometryError(const std::string& what, double condition_estimate)
      : std::runtime_error(what), condition_estimate_(condition_estimate) {}

  double condition_estimate() const { return condition_estimate_; }

 private:
  double condition_estimate_;
};

/// Q + lambda*D is numerically singular at the requested multiplier.
class NearBoundaryError : public std::runtime_error {
 public:
  NearBoundaryError(const std::string& what, double lambda)
      : std::runtime_error(what), lambda_(lambda) {}

  double lambda() const { return lambda_; }

 private:
  double lambda_;
};

/// The secular equation has no sign change on the admissible interval (GTRS hard case).
class NoRootError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Iteration budget exhausted; carries the best iterate found so far.
class ConvergenceError : public std::runtime_error {
 public:
  ConvergenceError(const std::string& what, Eigen::VectorXd best_iterate)
      : std::runtime_error(what), best_iterate_(std::move(best_iterate)) {}

  const Eigen::VectorXd& best_iterate() const { return best_iterate_; }

 private:
  Eigen::VectorXd best_iterate_;
};

/// Solver failure inside an iterative estimator, tagged with the outer iteration.
class EstimatorError : public std::runtime_error {
 public:
  EstimatorError(const std::string& what, int iteration)
      : std::runtime_error(what), iteration_(iteration) {}

  int iteration() const { return iteration_; }

 private:
  int iteration_;
};

/// Malformed measurement file; row and column are 1-based, 0 when not applicable.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, int row, int column)
      : std::runtime_error(what), row_(row), column_(column) {}

  int row() const { return row_; }
  int column() const { return column_; }

 private:
  int row_;
  int column_;
};

/// Experiment spec document does not match the schema. `pointer` is an RFC 6901
/// path, empty when the problem concerns the document as a whole.
class SchemaError : public std::runtime_error {
 public:
  SchemaError(const std::string& pointer, const std::string& message)
      : std::runtime_error(pointer.empty() ? message : pointer + ": " + message),
        pointer_(pointer) {}

  const std::string& pointer() const { return pointer_; }

 private:
  std::string pointer_;
};

/// Systemic campaign failure (too many degenerate trials).
class CampaignError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace srloc
