#include "fracctl/sensitivity.hpp"

#include <stdexcept>

namespace fracctl {

SensitivityContext::SensitivityContext(OperatorPtr op, Nonlinearity nl, GridFunction u_d, double mu,
                                       GridFunction z, StateSolveOptions state_options)
    : op_(std::move(op)),
      nl_(std::move(nl)),
      u_d_(std::move(u_d)),
      mu_(mu),
      z_(std::move(z)),
      state_options_(std::move(state_options)) {
  if (!op_) throw std::invalid_argument("sensitivity context needs an operator");
  if (!(mu_ > 0.0)) throw std::invalid_argument("mu must be positive");
  require_same_grid(op_->grid(), u_d_.grid(), "SensitivityContext target");
  require_same_grid(op_->grid(), z_.grid(), "SensitivityContext control");
  solve_current_state(std::nullopt);
}

void SensitivityContext::solve_current_state(std::optional<GridFunction> warm_start) {
  StateSolveOptions opts = state_options_;
  if (warm_start) opts.initial_guess = std::move(warm_start);
  state_report_ = solve_state(*op_, nl_, z_, opts);
  if (!state_report_.converged && opts.initial_guess) {
    opts.initial_guess.reset();
    state_report_ = solve_state(*op_, nl_, z_, opts);
  }
  if (!state_report_.converged) {
    throw SensitivityError("state solve did not converge (residual " +
                           std::to_string(state_report_.final_residual) + ")");
  }
  solver_.reset();
  adjoint_.reset();
  curvature_weight_.reset();
}

void SensitivityContext::set_control(GridFunction z) {
  require_same_grid(op_->grid(), z.grid(), "SensitivityContext::set_control");
  z_ = std::move(z);
  solve_current_state(state_report_.u);
}

double SensitivityContext::cost() const {
  const GridFunction misfit = state() - u_d_;
  return 0.5 * inner(misfit, misfit) + 0.5 * mu_ * inner(z_, z_);
}

const ShiftedSolver& SensitivityContext::linearized_solver() const {
  if (!solver_) solver_ = op_->factorize_shifted(eval_field(nl_, state(), 1));
  return *solver_;
}

GridFunction SensitivityContext::solve_linearized(const GridFunction& zeta) const {
  return linearized_solver().solve(zeta);
}

GridFunction SensitivityContext::solve_second(const GridFunction& zeta1, const GridFunction& zeta2) const {
  const GridFunction u1 = solve_linearized(zeta1);
  const GridFunction u2 = solve_linearized(zeta2);
  const GridFunction fuu = eval_field(nl_, state(), 2);
  GridFunction rhs(op_->grid());
  rhs.values() = -(fuu.values().array() * u1.values().array() * u2.values().array()).matrix();
  return linearized_solver().solve(rhs);
}

const GridFunction& SensitivityContext::solve_adjoint() const {
  if (!adjoint_) adjoint_ = linearized_solver().solve(state() - u_d_);
  return *adjoint_;
}

GridFunction SensitivityContext::reduced_gradient() const {
  GridFunction g = solve_adjoint();
  g.values() += mu_ * z_.values();
  return g;
}

GridFunction SensitivityContext::hessian_vec(const GridFunction& zeta) const {
  if (!curvature_weight_) {
    const GridFunction fuu = eval_field(nl_, state(), 2);
    GridFunction w(op_->grid(), 1.0);
    w.values() -= (solve_adjoint().values().array() * fuu.values().array()).matrix();
    curvature_weight_ = std::move(w);
  }
  const GridFunction u1 = solve_linearized(zeta);
  GridFunction hz = linearized_solver().solve(hadamard(*curvature_weight_, u1));
  hz.values() += mu_ * zeta.values();
  return hz;
}

double cost_difference(double mu, const GridFunction& u_d, const GridFunction& u0, const GridFunction& z0,
                       const GridFunction& u1, const GridFunction& z1) {
  GridFunction su = u1 + u0;
  su.values() -= 2.0 * u_d.values();
  return 0.5 * inner(u1 - u0, su) + 0.5 * mu * inner(z1 - z0, z1 + z0);
}

}  // namespace fracctl
