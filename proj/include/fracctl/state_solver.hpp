#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "fracctl/grid.hpp"
#include "fracctl/nonlinearity.hpp"
#include "fracctl/operator.hpp"

namespace fracctl {

struct StateSolveOptions {
  /// Stop once ||A u + f(u) - z||_2 <= tol * (1 + ||z||_2).
  double tol = 1e-10;
  int max_newton = 50;
  int max_fixed_point = 10000;
  /// One extra Newton step after the tolerance is met, kept only if it
  /// lowers the residual. Derivative checks rely on states near roundoff.
  bool polish = true;
  std::optional<GridFunction> initial_guess;
};

struct StateSolveReport {
  GridFunction u;
  int iterations = 0;
  double final_residual = 0.0;
  std::string backend;
  /// "newton" or "fixed-point".
  std::string method;
  /// Residual before the first step and after every accepted step.
  std::vector<double> newton_history;
  bool converged = false;
  bool restarted_from_zero = false;
};

class StateSolveError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// ||A u + f(u) - z||_2 in the discrete L^2 norm.
double state_residual(const FractionalOperator& op, const Nonlinearity& nl, const GridFunction& u,
                      const GridFunction& z);

/// Solves A u + f(., u) = z. Damped Newton with the exact Jacobian
/// A + diag(f_u(u)) and Armijo backtracking on the residual norm, started
/// from the linear solution; order-0 nonlinearities use a shifted
/// fixed-point iteration instead. Exhausting the iteration budget returns
/// the best iterate with converged = false.
StateSolveReport solve_state(const FractionalOperator& op, const Nonlinearity& nl,
                             const GridFunction& z, const StateSolveOptions& options = {});

struct TwoNormGap {
  /// 2 when N < 4s, +infinity otherwise.
  double p_tilde = 2.0;
  /// Integrability regime for the data: "p>N/(2s)", "p>1" or "p=1".
  std::string regime;
  /// N/(2s) for the first regime, 1 otherwise.
  double p_threshold = 1.0;
};

TwoNormGap two_norm_gap(int dimension, double s);

struct LipschitzProbeReport {
  /// max ||u1-u2||_inf / ||z1-z2||_p
  double max_ratio_linf = 0.0;
  /// max ||u1-u2||_{H^s} / ||z1-z2||_{H^-s}; spectral backend only.
  std::optional<double> max_ratio_hs;
  std::size_t evaluated = 0;
  std::size_t skipped = 0;
};

LipschitzProbeReport lipschitz_probe(const FractionalOperator& op, const Nonlinearity& nl,
                                     const std::vector<std::pair<GridFunction, GridFunction>>& pairs,
                                     double p, const StateSolveOptions& options = {});

struct LinfBoundReport {
  /// max ||u||_inf / ||z||_p
  double max_ratio = 0.0;
  std::size_t evaluated = 0;
  std::size_t skipped = 0;
};

LinfBoundReport linf_bound_probe(const FractionalOperator& op, const Nonlinearity& nl,
                                 const std::vector<GridFunction>& z_samples, double p,
                                 const StateSolveOptions& options = {});

}  // namespace fracctl
