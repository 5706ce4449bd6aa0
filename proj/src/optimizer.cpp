#include "fracctl/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

#include <Eigen/Eigenvalues>

namespace fracctl {

namespace {

constexpr double kArmijoSlope = 1e-4;
constexpr int kMaxBacktracks = 40;
constexpr int kNewtonBacktracks = 10;
constexpr double kMinStep = 1e-8;
constexpr double kMaxStep = 1e8;

// Absolute allowance for roundoff in a cost comparison.
double cost_slack(double cost) { return 1e-13 * (1.0 + std::abs(cost)); }

GridFunction fixed_point_residual(const ControlProblem& problem, const GridFunction& z,
                                  const GridFunction& phi) {
  GridFunction w = phi;
  w *= -1.0 / problem.mu;
  return z - project_box(w, problem.box);
}

SensitivityContext make_context(const ControlProblem& problem, const GridFunction& z,
                                const OptimizerOptions& options) {
  return SensitivityContext(problem.op, problem.nl, problem.u_d, problem.mu, z, options.state);
}

void finish_report(OptimalityReport& report, const ControlProblem& problem, const SensitivityContext& ctx) {
  report.control = ctx.control();
  report.state = ctx.state();
  report.adjoint = ctx.adjoint();
  report.cost = ctx.cost();
  report.kkt_residual = kkt_residual(problem, report.control, report.adjoint);
}

// One projected gradient step with Armijo backtracking along the projection
// arc. On success ctx holds the new iterate; otherwise it is restored.
bool projected_step(const ControlProblem& problem, SensitivityContext& ctx, double& alpha) {
  const GridFunction z = ctx.control();
  const GridFunction u = ctx.state();
  const GridFunction g = ctx.reduced_gradient();
  const double cost = ctx.cost();
  for (int bt = 0; bt <= kMaxBacktracks; ++bt) {
    GridFunction trial = z;
    trial.values() -= alpha * g.values();
    trial = project_box(trial, problem.box);
    const GridFunction d = trial - z;
    if (lp_norm(d, INFINITY) == 0.0) break;
    ctx.set_control(trial);
    const double change = cost_difference(problem.mu, problem.u_d, u, z, ctx.state(), trial);
    if (change <= kArmijoSlope * inner(g, d) + cost_slack(cost)) return true;
    alpha *= 0.5;
  }
  ctx.set_control(z);
  return false;
}

// CG on v -> (H v) restricted to the free nodes.
GridFunction restricted_cg(const SensitivityContext& ctx, const NodeMask& free, const GridFunction& rhs,
                           int max_iter, double rel_tol) {
  auto restrict_to = [&](GridFunction v) {
    for (std::size_t i = 0; i < v.size(); ++i)
      if (!free[i]) v[i] = 0.0;
    return v;
  };
  GridFunction x(rhs.grid());
  GridFunction r = restrict_to(rhs);
  GridFunction p = r;
  double rr = r.values().squaredNorm();
  const double stop = rel_tol * rel_tol * rr;
  for (int it = 0; it < max_iter && rr > stop; ++it) {
    const GridFunction hp = restrict_to(ctx.hessian_vec(p));
    const double curvature = p.values().dot(hp.values());
    if (!(curvature > 0.0)) break;  // not positive definite on the free set
    const double a = rr / curvature;
    x.values() += a * p.values();
    r.values() -= a * hp.values();
    const double rr_next = r.values().squaredNorm();
    p.values() = r.values() + (rr_next / rr) * p.values();
    rr = rr_next;
  }
  return x;
}

}  // namespace

ControlProblem::ControlProblem(OperatorPtr op_in, Nonlinearity nl_in, double mu_in, GridFunction u_d_in,
                               Box box_in)
    : op(std::move(op_in)), nl(std::move(nl_in)), mu(mu_in), u_d(std::move(u_d_in)), box(std::move(box_in)) {
  if (!op) throw std::invalid_argument("control problem needs an operator");
  if (!(mu > 0.0) || !std::isfinite(mu)) throw std::invalid_argument("mu must be positive");
  require_same_grid(op->grid(), u_d.grid(), "ControlProblem target");
  require_same_grid(op->grid(), box.grid(), "ControlProblem box");
  if (!u_d.all_finite()) throw std::invalid_argument("target u_d must be finite");
}

double kkt_residual(const ControlProblem& problem, const GridFunction& z, const GridFunction& phi) {
  return lp_norm(fixed_point_residual(problem, z, phi), INFINITY);
}

OptimalityReport projected_gradient(const ControlProblem& problem, const GridFunction& z0,
                                    const OptimizerOptions& options) {
  if (!(options.tol > 0.0)) throw std::invalid_argument("optimizer tolerance must be positive");
  OptimalityReport report;
  report.method = "projected-gradient";
  SensitivityContext ctx = make_context(problem, project_box(z0, problem.box), options);

  double alpha = 1.0 / problem.mu;
  double res = kkt_residual(problem, ctx.control(), ctx.adjoint());
  report.cost_history.push_back(ctx.cost());
  report.residual_history.push_back(res);

  while (res > options.tol && report.iterations < options.max_iter) {
    const GridFunction z_prev = ctx.control();
    const GridFunction g_prev = ctx.reduced_gradient();
    if (!projected_step(problem, ctx, alpha)) break;
    ++report.iterations;

    const GridFunction s = ctx.control() - z_prev;
    const GridFunction y = ctx.reduced_gradient() - g_prev;
    const double sy = inner(s, y);
    alpha = sy > 0.0 ? inner(s, s) / sy : 1.0 / problem.mu;
    alpha = std::clamp(alpha, kMinStep, kMaxStep);

    res = kkt_residual(problem, ctx.control(), ctx.adjoint());
    report.cost_history.push_back(ctx.cost());
    report.residual_history.push_back(res);
  }
  report.converged = res <= options.tol;
  finish_report(report, problem, ctx);
  return report;
}

OptimalityReport semismooth_newton(const ControlProblem& problem, const GridFunction& z0,
                                   const OptimizerOptions& options) {
  if (!(options.tol > 0.0)) throw std::invalid_argument("optimizer tolerance must be positive");
  if (problem.nl.differentiability_order() < 2) {
    throw std::invalid_argument("semismooth Newton needs a twice differentiable nonlinearity");
  }
  OptimalityReport report;
  report.method = "semismooth-newton";
  SensitivityContext ctx = make_context(problem, project_box(z0, problem.box), options);
  const std::size_t m = ctx.control().size();
  const GridFunction& za = problem.box.lower();
  const GridFunction& zb = problem.box.upper();

  GridFunction resid = fixed_point_residual(problem, ctx.control(), ctx.adjoint());
  double res = lp_norm(resid, INFINITY);
  report.cost_history.push_back(ctx.cost());
  report.residual_history.push_back(res);

  while (res > options.tol && report.iterations < options.max_iter) {
    const GridFunction z = ctx.control();
    const GridFunction g = ctx.reduced_gradient();
    NodeMask free(m, false);
    GridFunction step(z.grid());
    for (std::size_t i = 0; i < m; ++i) {
      const double w = -ctx.adjoint()[i] / problem.mu;
      if (w > za[i] && w < zb[i]) {
        free[i] = true;
      } else {
        step[i] = -resid[i];
      }
    }
    // H_II d_I = -g_I - H_IA d_A
    GridFunction rhs = -g;
    const GridFunction coupling = ctx.hessian_vec(step);
    for (std::size_t i = 0; i < m; ++i) {
      rhs[i] = free[i] ? rhs[i] - coupling[i] : 0.0;
    }
    const GridFunction d_free = restricted_cg(ctx, free, rhs, static_cast<int>(m) + 10, 1e-13);
    for (std::size_t i = 0; i < m; ++i)
      if (free[i]) step[i] = d_free[i];

    // Full step if it lowers the residual or the cost; otherwise Armijo on
    // the cost along the projected arc z(t) = Pi(z + t step).
    const GridFunction u = ctx.state();
    const double cost = ctx.cost();
    GridFunction trial_resid(z.grid());
    double trial_res = INFINITY;
    bool accepted = false;
    double t = 1.0;
    for (int bt = 0; bt <= kNewtonBacktracks && !accepted; ++bt, t *= 0.5) {
      GridFunction trial = z;
      trial.values() += t * step.values();
      trial = project_box(trial, problem.box);
      const GridFunction d = trial - z;
      const double slope = inner(g, d);
      if (bt > 0 && !(slope < 0.0)) break;
      ctx.set_control(trial);
      trial_resid = fixed_point_residual(problem, ctx.control(), ctx.adjoint());
      trial_res = lp_norm(trial_resid, INFINITY);
      const double change = cost_difference(problem.mu, problem.u_d, u, z, ctx.state(), trial);
      accepted = (bt == 0 && trial_res < res) || change <= kArmijoSlope * slope + cost_slack(cost);
    }
    if (!accepted) {
      ctx.set_control(z);
      double alpha = 1.0 / problem.mu;
      if (!projected_step(problem, ctx, alpha)) break;
      ++report.fallback_steps;
      trial_resid = fixed_point_residual(problem, ctx.control(), ctx.adjoint());
      trial_res = lp_norm(trial_resid, INFINITY);
    }
    ++report.iterations;
    resid = std::move(trial_resid);
    res = trial_res;
    report.cost_history.push_back(ctx.cost());
    report.residual_history.push_back(res);
  }
  report.converged = res <= options.tol;
  finish_report(report, problem, ctx);
  return report;
}

double activity_tolerance(const Box& box, std::size_t node) {
  return 1e-9 * (1.0 + std::abs(box.upper()[node] - box.lower()[node]));
}

GridFunction multiplier(const ControlProblem& problem, const GridFunction& z, const OptimizerOptions& options) {
  return make_context(problem, z, options).reduced_gradient();
}

FirstOrderReport first_order_residual(const ControlProblem& problem, const GridFunction& z,
                                      const OptimizerOptions& options, std::uint64_t seed, int directions) {
  const SensitivityContext ctx = make_context(problem, z, options);
  const GridFunction g = ctx.reduced_gradient();
  FirstOrderReport report;
  report.residual_linf = kkt_residual(problem, z, ctx.adjoint());

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  const double scale = std::max(1.0, lp_norm(z, INFINITY));
  report.vi_min = std::numeric_limits<double>::infinity();
  for (int k = 0; k < directions; ++k) {
    GridFunction v = z;
    for (std::size_t i = 0; i < v.size(); ++i) v[i] += scale * unit(rng);
    v = project_box(v, problem.box);
    const GridFunction d = v - z;
    report.vi_min = std::min(report.vi_min, inner(g, d));
    report.vi_scale = std::max(report.vi_scale, problem.mu * lp_norm(d, 1.0));
  }

  report.sign_threshold = 10.0 * problem.mu * options.tol;
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double eps = activity_tolerance(problem.box, i);
    if (g[i] > report.sign_threshold && std::abs(z[i] - problem.box.lower()[i]) > eps) ++report.sign_violations;
    if (g[i] < -report.sign_threshold && std::abs(z[i] - problem.box.upper()[i]) > eps) ++report.sign_violations;
  }
  return report;
}

NodeMask strongly_active_set(const GridFunction& multiplier, double tau) {
  if (!(tau >= 0.0)) throw std::invalid_argument("tau must be nonnegative");
  NodeMask mask(multiplier.size());
  for (std::size_t i = 0; i < multiplier.size(); ++i) mask[i] = std::abs(multiplier[i]) > tau;
  return mask;
}

NodeMask strongly_active_set(const ControlProblem& problem, const GridFunction& zbar,
                             const GridFunction& multiplier, double tau) {
  require_same_grid(problem.grid(), zbar.grid(), "strongly_active_set");
  NodeMask mask = strongly_active_set(multiplier, tau);
  for (std::size_t i = 0; i < mask.size(); ++i) {
    const double eps = activity_tolerance(problem.box, i);
    const bool on_bound = std::abs(zbar[i] - problem.box.lower()[i]) <= eps ||
                          std::abs(zbar[i] - problem.box.upper()[i]) <= eps;
    mask[i] = mask[i] && on_bound;
  }
  return mask;
}

NodeMask strongly_active_set(const ControlProblem& problem, const GridFunction& zbar, double tau,
                             const OptimizerOptions& options) {
  return strongly_active_set(problem, zbar, multiplier(problem, zbar, options), tau);
}

GridFunction critical_cone_project(const ControlProblem& problem, const GridFunction& zbar,
                                   const GridFunction& multiplier, double tau, const GridFunction& v) {
  require_same_grid(problem.grid(), v.grid(), "critical_cone_project");
  const NodeMask active = strongly_active_set(problem, zbar, multiplier, tau);
  GridFunction out = v;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double eps = activity_tolerance(problem.box, i);
    const bool at_lower = std::abs(zbar[i] - problem.box.lower()[i]) <= eps;
    const bool at_upper = std::abs(zbar[i] - problem.box.upper()[i]) <= eps;
    if (active[i] || (at_lower && at_upper)) {
      out[i] = 0.0;
    } else if (at_lower) {
      out[i] = std::max(v[i], 0.0);
    } else if (at_upper) {
      out[i] = std::min(v[i], 0.0);
    }
  }
  return out;
}

GridFunction critical_cone_project(const ControlProblem& problem, const GridFunction& zbar, double tau,
                                   const GridFunction& v, const OptimizerOptions& options) {
  return critical_cone_project(problem, zbar, multiplier(problem, zbar, options), tau, v);
}

SscReport ssc_probe(const ControlProblem& problem, const GridFunction& zbar, double tau, int iters,
                    const OptimizerOptions& options, std::uint64_t seed) {
  if (problem.nl.differentiability_order() < 2) {
    throw std::invalid_argument("second-order probe needs a twice differentiable nonlinearity");
  }
  const SensitivityContext ctx = make_context(problem, zbar, options);
  const NodeMask active = strongly_active_set(problem, zbar, ctx.reduced_gradient(), tau);
  std::vector<std::size_t> free;
  for (std::size_t i = 0; i < active.size(); ++i)
    if (!active[i]) free.push_back(i);

  SscReport report;
  report.tau = tau;
  report.cone_dimension = free.size();
  if (free.empty()) {
    report.empty_cone = true;
    report.delta_est = std::numeric_limits<double>::infinity();
    return report;
  }

  const auto dim = static_cast<Eigen::Index>(free.size());
  auto apply = [&](const Eigen::VectorXd& x) {
    GridFunction v(problem.grid());
    for (Eigen::Index k = 0; k < dim; ++k) v[free[static_cast<std::size_t>(k)]] = x[k];
    const GridFunction hv = ctx.hessian_vec(v);
    Eigen::VectorXd y(dim);
    for (Eigen::Index k = 0; k < dim; ++k) y[k] = hv[free[static_cast<std::size_t>(k)]];
    return y;
  };

  const int steps = static_cast<int>(std::min<Eigen::Index>(iters > 0 ? iters : dim, dim));
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  Eigen::VectorXd q(dim);
  for (Eigen::Index k = 0; k < dim; ++k) q[k] = normal(rng);
  q.normalize();

  // Lanczos with full reorthogonalization.
  Eigen::MatrixXd basis(dim, steps);
  std::vector<double> alpha, beta;
  double norm_scale = 0.0;
  int done = 0;
  for (int j = 0; j < steps; ++j) {
    basis.col(j) = q;
    Eigen::VectorXd w = apply(q);
    const double a = q.dot(w);
    alpha.push_back(a);
    norm_scale = std::max(norm_scale, w.norm());
    for (int pass = 0; pass < 2; ++pass) w -= basis.leftCols(j + 1) * (basis.leftCols(j + 1).transpose() * w);
    ++done;
    const double b = w.norm();
    if (j + 1 == steps || b <= 1e-13 * norm_scale) break;  // invariant subspace
    beta.push_back(b);
    q = w / b;
  }

  Eigen::MatrixXd t = Eigen::MatrixXd::Zero(done, done);
  for (int j = 0; j < done; ++j) {
    t(j, j) = alpha[static_cast<std::size_t>(j)];
    if (j + 1 < done) t(j, j + 1) = t(j + 1, j) = beta[static_cast<std::size_t>(j)];
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(t);
  report.lanczos_steps = done;
  report.delta_est = eig.eigenvalues()[0];
  const Eigen::VectorXd y = basis.leftCols(done) * eig.eigenvectors().col(0);
  report.ritz_residual = (apply(y) - report.delta_est * y).norm();
  return report;
}

GrowthSampleReport quadratic_growth_sample(const ControlProblem& problem, const GridFunction& zbar,
                                           double rho, double beta, std::size_t n_samples,
                                           const OptimizerOptions& options, std::uint64_t seed) {
  if (!(rho > 0.0)) throw std::invalid_argument("rho must be positive");
  GrowthSampleReport report;
  report.rho = rho;
  report.beta = beta;
  report.samples = n_samples;
  report.ball_norm = two_norm_gap(problem.grid().dimension(), problem.op->order()).p_tilde;
  report.margin_min = std::numeric_limits<double>::infinity();

  const SensitivityContext base = make_context(problem, zbar, options);
  const GridFunction mult = base.reduced_gradient();
  const double slack = 10.0 * options.state.tol;

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (std::size_t k = 0; k < n_samples; ++k) {
    GridFunction d(problem.grid());
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = normal(rng);
    const double radius = rho * (1.0 - unit(rng));  // in (0, rho]
    if (k % 2 == 1) {
      GridFunction cone = critical_cone_project(problem, zbar, mult, 0.0, d);
      if (lp_norm(cone, INFINITY) > 0.0) d = std::move(cone);
    }
    d *= radius / lp_norm(d, report.ball_norm);
    const GridFunction z = project_box(zbar + d, problem.box);
    const GridFunction dz = z - zbar;
    const double dist2 = inner(dz, dz);
    if (dist2 == 0.0) {
      ++report.degenerate;
      continue;
    }
    StateSolveOptions state = options.state;
    state.initial_guess = base.state();
    StateSolveReport solved;
    try {
      solved = solve_state(*problem.op, problem.nl, z, state);
    } catch (const std::exception&) {
      ++report.failed;
      continue;
    }
    if (!solved.converged) {
      ++report.failed;
      continue;
    }
    const double gain = cost_difference(problem.mu, problem.u_d, base.state(), zbar, solved.u, z);
    ++report.evaluated;
    if (gain < beta * dist2 - slack) ++report.violations;
    report.margin_min = std::min(report.margin_min, gain / dist2);
  }
  return report;
}

}  // namespace fracctl
