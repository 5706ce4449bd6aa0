#pragma once

#include <memory>
#include <optional>

#include "fracctl/grid.hpp"
#include "fracctl/nonlinearity.hpp"
#include "fracctl/operator.hpp"
#include "fracctl/state_solver.hpp"

namespace fracctl {

/// Reduced cost 1/2 ||S(z) - u_d||^2 + mu/2 ||z||^2 and its derivatives at a
/// fixed control z. Gradients and Hessian actions are returned as discrete
/// L^2 Riesz representatives (nodal fields).
///
/// The adjoint and the factorization of A + diag(f_u(u)) are computed on
/// first use and cached until the control changes; a context is meant to be
/// used from one thread.
class SensitivityContext {
 public:
  SensitivityContext(OperatorPtr op, Nonlinearity nl, GridFunction u_d, double mu,
                     GridFunction z, StateSolveOptions state_options = {});

  /// Moves to a new control; the previous state seeds the Newton solve.
  void set_control(GridFunction z);

  const FractionalOperator& op() const { return *op_; }
  const Nonlinearity& nonlinearity() const { return nl_; }
  double mu() const { return mu_; }
  const GridFunction& target() const { return u_d_; }
  const GridFunction& control() const { return z_; }
  const GridFunction& state() const { return state_report_.u; }
  const StateSolveReport& state_report() const { return state_report_; }

  double cost() const;

  /// S'(z) zeta: (A + f_u(u)) u_zeta = zeta.
  GridFunction solve_linearized(const GridFunction& zeta) const;
  /// S''(z)[zeta1, zeta2]: (A + f_u(u)) w = -f_uu(u) u_zeta1 u_zeta2.
  GridFunction solve_second(const GridFunction& zeta1, const GridFunction& zeta2) const;
  /// (A + f_u(u)) phi = u - u_d, cached.
  const GridFunction& solve_adjoint() const;
  const GridFunction& adjoint() const { return solve_adjoint(); }

  /// phi + mu z.
  GridFunction reduced_gradient() const;
  /// mu zeta + (A + f_u)^{-1} [(1 - phi f_uu(u)) S'(z) zeta].
  GridFunction hessian_vec(const GridFunction& zeta) const;

 private:
  const ShiftedSolver& linearized_solver() const;
  void solve_current_state(std::optional<GridFunction> warm_start);

  OperatorPtr op_;
  Nonlinearity nl_;
  GridFunction u_d_;
  double mu_;
  GridFunction z_;
  StateSolveOptions state_options_;
  StateSolveReport state_report_;

  mutable std::unique_ptr<ShiftedSolver> solver_;
  mutable std::optional<GridFunction> adjoint_;
  mutable std::optional<GridFunction> curvature_weight_;  // 1 - phi f_uu(u)
};

/// J(z1) - J(z0) formed from field differences, so the roundoff scales with
/// the step rather than with |J|.
double cost_difference(double mu, const GridFunction& u_d, const GridFunction& u0, const GridFunction& z0,
                       const GridFunction& u1, const GridFunction& z1);

/// Raised when a state solve needed for a cost or derivative fails.
class SensitivityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace fracctl
