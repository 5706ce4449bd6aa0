#include "fracctl/state_solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "fracctl/spectral_op.hpp"

namespace fracctl {

namespace {

constexpr double kArmijoSlope = 1e-4;
constexpr int kMaxBacktracks = 30;

GridFunction residual_field(const FractionalOperator& op, const Nonlinearity& nl,
                            const GridFunction& u, const GridFunction& z) {
  GridFunction r = op.apply(u);
  if (!nl.is_zero()) r += eval_field(nl, u, 0);
  r -= z;
  return r;
}

struct NewtonOutcome {
  GridFunction u;
  std::vector<double> history;
  int iterations = 0;
  bool converged = false;
};

NewtonOutcome damped_newton(const FractionalOperator& op, const Nonlinearity& nl,
                            const GridFunction& z, GridFunction u, double target,
                            const StateSolveOptions& options) {
  NewtonOutcome out;
  GridFunction r = residual_field(op, nl, u, z);
  double rnorm = lp_norm(r, 2.0);
  if (!std::isfinite(rnorm)) throw StateSolveError("non-finite residual at the initial guess");
  out.history.push_back(rnorm);

  bool polished = !options.polish;
  while (out.iterations < options.max_newton) {
    if (rnorm <= target) {
      if (polished || rnorm == 0.0) break;
      polished = true;
    }
    const GridFunction jac = eval_field(nl, u, 1);
    const GridFunction step = op.solve_shifted(jac, -r);

    double alpha = 1.0;
    bool accepted = false;
    for (int bt = 0; bt <= kMaxBacktracks; ++bt) {
      GridFunction trial = u;
      trial.values() += alpha * step.values();
      GridFunction trial_r = residual_field(op, nl, trial, z);
      const double trial_norm = lp_norm(trial_r, 2.0);
      if (std::isfinite(trial_norm) && trial_norm <= (1.0 - kArmijoSlope * alpha) * rnorm) {
        u = std::move(trial);
        r = std::move(trial_r);
        rnorm = trial_norm;
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!accepted) break;  // stagnation: no step reduces the residual
    ++out.iterations;
    out.history.push_back(rnorm);
  }
  out.converged = rnorm <= target;
  out.u = std::move(u);
  return out;
}

// Upper bound for the slope of f over [-range, range] from difference
// quotients on a uniform sample at every node.
double slope_bound(const Nonlinearity& nl, std::size_t nodes, double range) {
  constexpr int kSamples = 200;
  double rho = 0.0;
  for (std::size_t x = 0; x < nodes; ++x) {
    double prev = nl.f(x, -range);
    for (int k = 1; k <= kSamples; ++k) {
      const double t0 = -range + 2.0 * range * (k - 1) / kSamples;
      const double t1 = -range + 2.0 * range * k / kSamples;
      const double cur = nl.f(x, t1);
      rho = std::max(rho, (cur - prev) / (t1 - t0));
      prev = cur;
    }
  }
  return rho;
}

}  // namespace

double state_residual(const FractionalOperator& op, const Nonlinearity& nl, const GridFunction& u,
                      const GridFunction& z) {
  return lp_norm(residual_field(op, nl, u, z), 2.0);
}

StateSolveReport solve_state(const FractionalOperator& op, const Nonlinearity& nl,
                             const GridFunction& z, const StateSolveOptions& options) {
  if (!(options.tol > 0.0)) throw std::invalid_argument("state tolerance must be positive");
  require_same_grid(op.grid(), z.grid(), "solve_state");
  if (!z.all_finite()) throw StateSolveError("non-finite control");
  const double target = options.tol * (1.0 + lp_norm(z, 2.0));
  const GridFunction zero_potential(op.grid());

  StateSolveReport report;
  report.backend = op.backend();

  if (nl.is_zero()) {
    report.method = "newton";
    report.u = op.solve_shifted(zero_potential, z);
    report.final_residual = state_residual(op, nl, report.u, z);
    report.newton_history = {report.final_residual};
    report.converged = report.final_residual <= target;
    return report;
  }

  GridFunction start = options.initial_guess ? *options.initial_guess
                                             : op.solve_shifted(zero_potential, z);
  require_same_grid(op.grid(), start.grid(), "solve_state initial guess");

  if (nl.differentiability_order() >= 1) {
    report.method = "newton";
    NewtonOutcome outcome = damped_newton(op, nl, z, start, target, options);
    if (!outcome.converged && !options.initial_guess) {
      NewtonOutcome retry = damped_newton(op, nl, z, GridFunction(op.grid()), target, options);
      report.restarted_from_zero = true;
      if (retry.converged || retry.history.back() < outcome.history.back()) outcome = std::move(retry);
    }
    report.u = std::move(outcome.u);
    report.iterations = outcome.iterations;
    report.newton_history = std::move(outcome.history);
    report.final_residual = report.newton_history.back();
    report.converged = outcome.converged;
    return report;
  }

  // Shifted fixed point (A + rho I) u_next = z - f(u) + rho u.
  report.method = "fixed-point";
  const std::size_t nodes = std::max<std::size_t>(nl.node_count(), 1);
  GridFunction u = std::move(start);
  double range = 2.0 * lp_norm(u, INFINITY) + 1.0;
  double rho = std::max(slope_bound(nl, nodes, range), 1e-12);
  auto solver = op.factorize_shifted(GridFunction(op.grid(), rho));
  double rnorm = state_residual(op, nl, u, z);
  report.newton_history.push_back(rnorm);
  int it = 0;
  for (; it < options.max_fixed_point && rnorm > target; ++it) {
    GridFunction rhs = z - eval_field(nl, u, 0);
    rhs.values() += rho * u.values();
    u = solver->solve(rhs);
    if (!u.all_finite()) throw StateSolveError("non-finite fixed-point iterate");
    const double sup = lp_norm(u, INFINITY);
    if (sup > 0.5 * range) {
      range = 2.0 * sup + 1.0;
      const double next = slope_bound(nl, nodes, range);
      if (next > rho) {
        rho = next;
        solver = op.factorize_shifted(GridFunction(op.grid(), rho));
      }
    }
    rnorm = state_residual(op, nl, u, z);
    report.newton_history.push_back(rnorm);
  }
  report.u = std::move(u);
  report.iterations = it;
  report.final_residual = rnorm;
  report.converged = rnorm <= target;
  return report;
}

TwoNormGap two_norm_gap(int dimension, double s) {
  if (dimension < 1) throw std::invalid_argument("dimension must be positive");
  if (!(s > 0.0 && s < 1.0)) throw std::invalid_argument("s must lie in (0,1)");
  TwoNormGap gap;
  const double n = dimension;
  gap.p_tilde = n < 4.0 * s ? 2.0 : std::numeric_limits<double>::infinity();
  if (n > 2.0 * s) {
    gap.regime = "p>N/(2s)";
    gap.p_threshold = n / (2.0 * s);
  } else if (n == 2.0 * s) {
    gap.regime = "p>1";
    gap.p_threshold = 1.0;
  } else {
    gap.regime = "p=1";
    gap.p_threshold = 1.0;
  }
  return gap;
}

LipschitzProbeReport lipschitz_probe(const FractionalOperator& op, const Nonlinearity& nl,
                                     const std::vector<std::pair<GridFunction, GridFunction>>& pairs,
                                     double p, const StateSolveOptions& options) {
  const auto* spectral = dynamic_cast<const SpectralOperator*>(&op);
  LipschitzProbeReport report;
  if (spectral) report.max_ratio_hs = 0.0;
  const double s = op.order();
  for (const auto& [z1, z2] : pairs) {
    const GridFunction dz = z1 - z2;
    const double dz_p = lp_norm(dz, p);
    if (dz_p == 0.0) {
      ++report.skipped;
      continue;
    }
    const StateSolveReport r1 = solve_state(op, nl, z1, options);
    const StateSolveReport r2 = solve_state(op, nl, z2, options);
    if (!r1.converged || !r2.converged) throw StateSolveError("state solve failed inside lipschitz_probe");
    const GridFunction du = r1.u - r2.u;
    report.max_ratio_linf = std::max(report.max_ratio_linf, lp_norm(du, INFINITY) / dz_p);
    if (spectral) {
      const double ratio = spectral->hs_norm(du, s) / spectral->hs_norm(dz, -s);
      report.max_ratio_hs = std::max(*report.max_ratio_hs, ratio);
    }
    ++report.evaluated;
  }
  return report;
}

LinfBoundReport linf_bound_probe(const FractionalOperator& op, const Nonlinearity& nl,
                                 const std::vector<GridFunction>& z_samples, double p,
                                 const StateSolveOptions& options) {
  LinfBoundReport report;
  for (const auto& z : z_samples) {
    const double zp = lp_norm(z, p);
    if (zp == 0.0) {
      ++report.skipped;
      continue;
    }
    const StateSolveReport r = solve_state(op, nl, z, options);
    if (!r.converged) throw StateSolveError("state solve failed inside linf_bound_probe");
    report.max_ratio = std::max(report.max_ratio, lp_norm(r.u, INFINITY) / zp);
    ++report.evaluated;
  }
  return report;
}

}  // namespace fracctl
