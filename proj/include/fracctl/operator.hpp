#pragma once

#include <memory>
#include <stdexcept>
#include <string>

#include "fracctl/grid.hpp"

namespace fracctl {

/// Repeated solves of (A + diag(w)) v = r for one fixed potential w.
class ShiftedSolver {
 public:
  virtual ~ShiftedSolver() = default;
  virtual GridFunction solve(const GridFunction& rhs) const = 0;
};

/// Discrete self-adjoint positive fractional operator A acting on nodal
/// values. Symmetric as a matrix, hence self-adjoint for `inner`.
class FractionalOperator {
 public:
  virtual ~FractionalOperator() = default;

  virtual const Grid& grid() const = 0;
  /// Fractional order s in (0,1).
  virtual double order() const = 0;
  virtual std::string backend() const = 0;

  virtual GridFunction apply(const GridFunction& u) const = 0;
  /// Prepares solves with A + diag(potential); potential must be >= 0.
  virtual std::unique_ptr<ShiftedSolver> factorize_shifted(const GridFunction& potential) const = 0;

  GridFunction solve_shifted(const GridFunction& potential, const GridFunction& rhs) const {
    return factorize_shifted(potential)->solve(rhs);
  }
};

using OperatorPtr = std::shared_ptr<const FractionalOperator>;

/// Raised when an iterative or direct linear solve cannot meet its contract.
class LinearSolveError : public std::runtime_error {
 public:
  LinearSolveError(const std::string& what, double residual)
      : std::runtime_error(what), residual_(residual) {}
  double residual() const { return residual_; }

 private:
  double residual_;
};

}  // namespace fracctl
