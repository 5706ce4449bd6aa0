#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fracctl/grid.hpp"
#include "fracctl/nonlinearity.hpp"
#include "fracctl/operator.hpp"
#include "fracctl/sensitivity.hpp"
#include "fracctl/state_solver.hpp"

namespace fracctl {

/// min 1/2 ||u - u_d||^2 + mu/2 ||z||^2 subject to A u + f(u) = z and
/// z_a <= z <= z_b.
struct ControlProblem {
  OperatorPtr op;
  Nonlinearity nl;
  double mu = 1.0;
  GridFunction u_d;
  Box box;

  ControlProblem(OperatorPtr op, Nonlinearity nl, double mu, GridFunction u_d, Box box);

  const Grid& grid() const { return op->grid(); }
};

struct OptimizerOptions {
  /// Stop when ||z - Pi(-phi/mu)||_inf <= tol.
  double tol = 1e-8;
  int max_iter = 500;
  StateSolveOptions state = [] {
    StateSolveOptions o;
    o.tol = 1e-12;
    return o;
  }();
};

using NodeMask = std::vector<bool>;

struct ActiveSet {
  double tau = 0.0;
  NodeMask mask;
};

struct SscReport {
  double tau = 0.0;
  /// Smallest Rayleigh quotient of the Hessian on the nodes outside A_tau;
  /// +inf when that subspace is empty.
  double delta_est = 0.0;
  bool empty_cone = false;
  std::size_t cone_dimension = 0;
  int lanczos_steps = 0;
  /// ||H y - delta_est y|| for the extremal Ritz vector.
  double ritz_residual = 0.0;
};

struct GrowthSampleReport {
  double rho = 0.0;
  double beta = 0.0;
  /// Norm used for the ball B_rho: 2 or +inf.
  double ball_norm = 2.0;
  std::size_t samples = 0;
  std::size_t evaluated = 0;
  std::size_t violations = 0;
  std::size_t degenerate = 0;
  std::size_t failed = 0;
  /// min (J(z) - J(zbar)) / ||z - zbar||^2 over evaluated samples.
  double margin_min = 0.0;
};

struct OptimalityReport {
  GridFunction control;
  GridFunction state;
  GridFunction adjoint;
  double cost = 0.0;
  double kkt_residual = 0.0;
  int iterations = 0;
  /// "projected-gradient" or "semismooth-newton".
  std::string method;
  bool converged = false;
  std::vector<double> cost_history;
  std::vector<double> residual_history;
  /// Semismooth Newton iterations that fell back to a gradient step.
  int fallback_steps = 0;
  std::vector<ActiveSet> active_sets;
  std::optional<SscReport> ssc;
  std::optional<GrowthSampleReport> growth;
};

/// ||z - Pi(-phi/mu)||_inf.
double kkt_residual(const ControlProblem& problem, const GridFunction& z, const GridFunction& phi);

/// Projected gradient with Barzilai-Borwein steps and Armijo backtracking
/// on the reduced cost.
OptimalityReport projected_gradient(const ControlProblem& problem, const GridFunction& z0,
                                    const OptimizerOptions& options = {});

/// Semismooth Newton on z - Pi(-phi(z)/mu) = 0; inactive-set Newton systems
/// are solved with CG on Hessian-vector products. Steps that do not reduce
/// the residual are replaced by a projected gradient step.
OptimalityReport semismooth_newton(const ControlProblem& problem, const GridFunction& z0,
                                   const OptimizerOptions& options = {});

struct FirstOrderReport {
  double residual_linf = 0.0;
  /// min over random feasible v of inner(phi + mu z, v - z).
  double vi_min = 0.0;
  /// mu times the largest ||v - z||_1 among the sampled directions; at a
  /// point with residual r, vi_min >= -r vi_scale.
  double vi_scale = 0.0;
  /// Nodes where |phi + mu z| exceeds sign_threshold but z is not at the
  /// bound the sign of the multiplier dictates (up to the activity tolerance).
  std::size_t sign_violations = 0;
  double sign_threshold = 0.0;
};

FirstOrderReport first_order_residual(const ControlProblem& problem, const GridFunction& z,
                                      const OptimizerOptions& options = {}, std::uint64_t seed = 1,
                                      int directions = 100);

/// Nodewise activity tolerance 1e-9 (1 + |z_b - z_a|).
double activity_tolerance(const Box& box, std::size_t node);

/// phi + mu z at the state/adjoint of z.
GridFunction multiplier(const ControlProblem& problem, const GridFunction& z,
                        const OptimizerOptions& options = {});

/// |multiplier| > tau, taken literally.
NodeMask strongly_active_set(const GridFunction& multiplier, double tau);
/// As above, restricted to nodes where zbar sits on a bound (within the
/// activity tolerance). Off the bounds the exact multiplier vanishes and the
/// computed one is only the KKT residual, so those nodes never count.
NodeMask strongly_active_set(const ControlProblem& problem, const GridFunction& zbar,
                             const GridFunction& multiplier, double tau);
NodeMask strongly_active_set(const ControlProblem& problem, const GridFunction& zbar, double tau,
                             const OptimizerOptions& options = {});

/// Nodewise projection onto the tau-critical cone: 0 on A_tau, positive part
/// where zbar = z_a, negative part where zbar = z_b, identity elsewhere.
GridFunction critical_cone_project(const ControlProblem& problem, const GridFunction& zbar,
                                   const GridFunction& multiplier, double tau, const GridFunction& v);
GridFunction critical_cone_project(const ControlProblem& problem, const GridFunction& zbar, double tau,
                                   const GridFunction& v, const OptimizerOptions& options = {});

/// Lanczos estimate of the smallest eigenvalue of the reduced Hessian
/// restricted to the nodes outside A_tau (the linear hull of the critical
/// cone). `iters` >= cone dimension gives the exact minimum.
SscReport ssc_probe(const ControlProblem& problem, const GridFunction& zbar, double tau, int iters,
                    const OptimizerOptions& options = {}, std::uint64_t seed = 1);

/// Samples feasible z in B_rho(zbar) (norm per two_norm_gap) and counts
/// violations of J(z) >= J(zbar) + beta ||z - zbar||^2 - 10 state_tol.
GrowthSampleReport quadratic_growth_sample(const ControlProblem& problem, const GridFunction& zbar,
                                           double rho, double beta, std::size_t n_samples,
                                           const OptimizerOptions& options = {},
                                           std::uint64_t seed = 1);

}  // namespace fracctl
