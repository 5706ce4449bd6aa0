#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>
#include <random>

#include <Eigen/Dense>

#include "fracctl/integral_op.hpp"
#include "fracctl/optimizer.hpp"
#include "fracctl/spectral_op.hpp"

using namespace fracctl;

namespace {

constexpr double kPi = std::numbers::pi;

GridFunction random_function(const Grid& grid, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> normal;
  GridFunction u(grid);
  for (std::size_t i = 0; i < u.size(); ++i) u[i] = scale * normal(rng);
  return u;
}

// Box-constrained linear-quadratic problem solved with dense matrices only:
// B = L^{-s} from the three-point Laplacian on (0,1), then a primal-dual
// active set iteration on z = clamp((B u_d - B^2 z) / mu), verified at exit.
Eigen::VectorXd dense_lq_solution(int n, double s, double mu, const Eigen::VectorXd& u_d, double lo, double hi) {
  const double h = 1.0 / (n + 1);
  Eigen::MatrixXd lap = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    lap(i, i) = 2.0 / (h * h);
    if (i > 0) lap(i, i - 1) = -1.0 / (h * h);
    if (i + 1 < n) lap(i, i + 1) = -1.0 / (h * h);
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(lap);
  const Eigen::VectorXd d = eig.eigenvalues().array().pow(-s);
  const Eigen::MatrixXd b = eig.eigenvectors() * d.asDiagonal() * eig.eigenvectors().transpose();
  const Eigen::MatrixXd b2 = b * b;
  const Eigen::VectorXd c = b * u_d;
  const Eigen::MatrixXd q = b2 + mu * Eigen::MatrixXd::Identity(n, n);

  Eigen::VectorXd z = Eigen::VectorXd::Zero(n);
  std::vector<int> state(n, 0), previous(n, 2);
  for (int it = 0; it < 100 && state != previous; ++it) {
    previous = state;
    const Eigen::VectorXd p = (c - b2 * z) / mu;
    for (int i = 0; i < n; ++i) state[i] = p[i] < lo ? -1 : (p[i] > hi ? 1 : 0);
    std::vector<int> free;
    for (int i = 0; i < n; ++i) {
      if (state[i] == 0) free.push_back(i);
      else z[i] = state[i] < 0 ? lo : hi;
    }
    const int m = static_cast<int>(free.size());
    Eigen::MatrixXd qff(m, m);
    Eigen::VectorXd rhs(m);
    for (int a = 0; a < m; ++a) {
      rhs[a] = c[free[a]];
      for (int i = 0; i < n; ++i) {
        if (state[i] != 0) rhs[a] -= q(free[a], i) * z[i];
      }
      for (int bb = 0; bb < m; ++bb) qff(a, bb) = q(free[a], free[bb]);
    }
    const Eigen::VectorXd zf = qff.llt().solve(rhs);
    for (int a = 0; a < m; ++a) z[free[a]] = zf[a];
  }
  const Eigen::VectorXd p = (c - b2 * z) / mu;
  const double res = (z - p.cwiseMax(lo).cwiseMin(hi)).cwiseAbs().maxCoeff();
  REQUIRE(res < 1e-11);
  return z;
}

struct LqSetup {
  std::shared_ptr<SpectralOperator> op;
  ControlProblem problem;
};

LqSetup linear_problem(int n, double s, double mu, double lo, double hi) {
  auto op = std::make_shared<SpectralOperator>(Grid::interval(0, 1, n), EllipticCoefficient::constant(1.0), s);
  const Grid& g = op->grid();
  const GridFunction u_d = GridFunction::sample(g, [](double x, double) { return 2.0 * std::sin(2 * kPi * x) + x; });
  return LqSetup{op, ControlProblem(op, Nonlinearity::zero(), mu, u_d, Box::constant(g, lo, hi))};
}

ControlProblem cubic_problem(int n, double s, double mu) {
  const Grid g = Grid::interval(0, 1, n);
  auto op = std::make_shared<IntegralOperator>(g, s);
  const GridFunction u_d = GridFunction::sample(g, [](double x, double) { return 3.0 * std::sin(kPi * x) * (1 - 2 * x); });
  return ControlProblem(op, PowerLaw::constant(g, 1.0, 3.0).as_nonlinearity(), mu, u_d, Box::constant(g, -4.0, 6.0));
}

std::size_t count(const NodeMask& m) { return static_cast<std::size_t>(std::count(m.begin(), m.end(), true)); }

}  // namespace

TEST_CASE("linear-quadratic optimum matches the dense active-set solution") {
  const int n = 32;
  const double s = 0.5;
  const double mu = 1e-2;
  const double lo = -0.5;
  const double hi = 0.8;
  const LqSetup lq = linear_problem(n, s, mu, lo, hi);
  const Eigen::VectorXd oracle = dense_lq_solution(n, s, mu, lq.problem.u_d.values(), lo, hi);
  std::size_t at_bound = 0;
  for (int i = 0; i < n; ++i) at_bound += (oracle[i] == lo || oracle[i] == hi);
  CHECK(at_bound > 0);
  CHECK(at_bound < static_cast<std::size_t>(n));

  const GridFunction expected(lq.op->grid(), oracle);
  const GridFunction z0(lq.op->grid());
  const OptimalityReport pg = projected_gradient(lq.problem, z0);
  const OptimalityReport ssn = semismooth_newton(lq.problem, z0);
  CHECK(pg.converged);
  CHECK(ssn.converged);
  CHECK(lp_norm(pg.control - expected, 2.0) < 1e-6);
  CHECK(lp_norm(ssn.control - expected, 2.0) < 1e-6);
  CHECK(ssn.iterations <= 8);
}

TEST_CASE("open box and zero target give the zero control") {
  std::mt19937_64 rng(2);
  auto op = std::make_shared<SpectralOperator>(Grid::interval(0, 1, 24), EllipticCoefficient::constant(1.0), 0.3);
  const Grid& g = op->grid();
  const ControlProblem p(op, PowerLaw::constant(g, 1.0, 3.0).as_nonlinearity(), 0.1, GridFunction(g),
                         Box::constant(g, -1e6, 1e6));
  const GridFunction z0 = random_function(g, rng);
  CHECK(lp_norm(projected_gradient(p, z0).control, INFINITY) <= 1e-8);
  CHECK(lp_norm(semismooth_newton(p, z0).control, INFINITY) <= 1e-8);
  const OptimalityReport at_zero = semismooth_newton(p, GridFunction(g));
  CHECK(at_zero.iterations == 0);
  CHECK(at_zero.converged);
}

TEST_CASE("semismooth Newton and projected gradient agree on a nonlinear problem") {
  const ControlProblem p = cubic_problem(48, 0.4, 1e-3);
  OptimizerOptions o;
  o.tol = 1e-9;
  const OptimalityReport pg = projected_gradient(p, GridFunction(p.grid()), o);
  const OptimalityReport ssn = semismooth_newton(p, GridFunction(p.grid()), o);
  REQUIRE(pg.converged);
  REQUIRE(ssn.converged);
  CHECK(ssn.method == "semismooth-newton");
  CHECK(pg.method == "projected-gradient");
  // both meet the fixed-point tolerance; the residual map is contractive
  // with constant below 1 near the solution, so the iterates agree to O(tol)
  CHECK(lp_norm(pg.control - ssn.control, INFINITY) <= 2e-9 / std::min(1.0, p.mu * 1e3));
  CHECK(ssn.iterations <= 15);
  CHECK(ssn.iterations < pg.iterations);

  const OptimalityReport restart = semismooth_newton(p, ssn.control, o);
  CHECK(restart.iterations == 0);
}

TEST_CASE("reported quantities are consistent") {
  const ControlProblem p = cubic_problem(32, 0.6, 1e-2);
  const OptimalityReport r = projected_gradient(p, GridFunction(p.grid(), 1.0));
  REQUIRE(r.converged);
  CHECK(p.box.contains(r.control));
  // recompute state, adjoint and KKT residual from scratch
  const SensitivityContext ctx(p.op, p.nl, p.u_d, p.mu, r.control, OptimizerOptions{}.state);
  CHECK(lp_norm(ctx.state() - r.state, INFINITY) <= 1e-10 * (1 + lp_norm(r.state, INFINITY)));
  CHECK(lp_norm(ctx.adjoint() - r.adjoint, INFINITY) <= 1e-10 * (1 + lp_norm(r.adjoint, INFINITY)));
  CHECK(std::abs(kkt_residual(p, r.control, ctx.adjoint()) - r.kkt_residual) <= 1e-12);
  CHECK(r.kkt_residual <= 1e-8);
  CHECK(ctx.cost() == doctest::Approx(r.cost).epsilon(1e-12));
  // monotone descent up to the line-search slack
  REQUIRE(r.cost_history.size() >= 2);
  for (std::size_t k = 1; k < r.cost_history.size(); ++k) {
    CHECK(r.cost_history[k] <= r.cost_history[k - 1] + 1e-13 * (1 + std::abs(r.cost_history[k - 1])));
  }
  CHECK(r.residual_history.back() == doctest::Approx(r.kkt_residual));
}

TEST_CASE("first-order conditions at the computed optimum") {
  const ControlProblem p = cubic_problem(32, 0.6, 1e-2);
  const OptimalityReport r = semismooth_newton(p, GridFunction(p.grid()));
  REQUIRE(r.converged);
  const FirstOrderReport f = first_order_residual(p, r.control, {}, 3, 200);
  CHECK(f.residual_linf <= 1e-8);
  CHECK(f.vi_min >= -f.residual_linf * f.vi_scale - 1e-14);
  CHECK(f.sign_violations == 0);

  // a clearly non-optimal control is detected
  const FirstOrderReport bad = first_order_residual(p, GridFunction(p.grid(), 2.0), {}, 3, 200);
  CHECK(bad.residual_linf > 1e-3);
  CHECK(bad.vi_min < 0.0);
}

TEST_CASE("strongly active sets are nested and the cone projection is idempotent") {
  const ControlProblem p = cubic_problem(48, 0.4, 1e-3);
  const OptimalityReport r = semismooth_newton(p, GridFunction(p.grid()));
  REQUIRE(r.converged);
  const GridFunction m = multiplier(p, r.control);
  const std::vector<double> taus{0.0, 1e-4, 1e-3, 1e-2, 1e-1};
  for (std::size_t k = 1; k < taus.size(); ++k) {
    const NodeMask small = strongly_active_set(p, r.control, m, taus[k - 1]);
    const NodeMask large = strongly_active_set(p, r.control, m, taus[k]);
    for (std::size_t i = 0; i < small.size(); ++i) CHECK((!large[i] || small[i]));
  }
  const NodeMask a0 = strongly_active_set(p, r.control, m, 0.0);
  CHECK(count(a0) > 0);
  CHECK(count(a0) < a0.size());
  for (std::size_t i = 0; i < a0.size(); ++i) {
    if (a0[i]) CHECK((r.control[i] == p.box.lower()[i] || r.control[i] == p.box.upper()[i]));
  }
  CHECK(count(strongly_active_set(p, r.control, m, 1e9)) == 0);
  CHECK(count(strongly_active_set(GridFunction(p.grid()), 0.0)) == 0);
  CHECK_THROWS_AS(strongly_active_set(m, -1.0), std::invalid_argument);

  std::mt19937_64 rng(4);
  for (double tau : taus) {
    for (int t = 0; t < 5; ++t) {
      const GridFunction v = random_function(p.grid(), rng);
      const GridFunction c = critical_cone_project(p, r.control, m, tau, v);
      CHECK(critical_cone_project(p, r.control, m, tau, c).values() == c.values());
      const NodeMask active = strongly_active_set(p, r.control, m, tau);
      for (std::size_t i = 0; i < c.size(); ++i) {
        if (active[i]) CHECK(c[i] == 0.0);
        if (r.control[i] == p.box.lower()[i]) CHECK(c[i] >= 0.0);
        if (r.control[i] == p.box.upper()[i]) CHECK(c[i] <= 0.0);
      }
    }
  }
}

TEST_CASE("second-order probe") {
  const double mu = 1e-2;
  const LqSetup lq = linear_problem(32, 0.5, mu, -0.5, 0.8);
  const OptimalityReport r = semismooth_newton(lq.problem, GridFunction(lq.op->grid()));
  REQUIRE(r.converged);
  // linear state: H = mu + A^{-2}, so every Rayleigh quotient exceeds mu
  for (double tau : {0.0, 1e-3}) {
    const SscReport ssc = ssc_probe(lq.problem, r.control, tau, 100);
    CHECK_FALSE(ssc.empty_cone);
    CHECK(ssc.delta_est >= mu - 1e-8);
    CHECK(ssc.cone_dimension > 0);
  }
  // exact minimum over the free nodes, from the dense restriction
  const SscReport full = ssc_probe(lq.problem, r.control, 0.0, 1000);
  const NodeMask active = strongly_active_set(lq.problem, r.control, 0.0);
  std::vector<std::size_t> free;
  for (std::size_t i = 0; i < active.size(); ++i) {
    if (!active[i]) free.push_back(i);
  }
  const SensitivityContext ctx(lq.problem.op, lq.problem.nl, lq.problem.u_d, mu, r.control);
  Eigen::MatrixXd hff(free.size(), free.size());
  for (std::size_t b = 0; b < free.size(); ++b) {
    GridFunction e(lq.op->grid());
    e[free[b]] = 1.0;
    const GridFunction he = ctx.hessian_vec(e);
    for (std::size_t a = 0; a < free.size(); ++a) hff(a, b) = he[free[a]];
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (hff + hff.transpose()), Eigen::EigenvaluesOnly);
  CHECK(full.delta_est == doctest::Approx(eig.eigenvalues()[0]).epsilon(1e-8));

  // pinned box with every multiplier nonzero: empty cone
  const Grid& g = lq.op->grid();
  const ControlProblem pinned(lq.op, Nonlinearity::zero(), mu, GridFunction(g), Box::constant(g, 1.0, 1.0));
  const SscReport empty = ssc_probe(pinned, GridFunction(g, 1.0), 0.0, 10);
  CHECK(empty.empty_cone);
  CHECK(std::isinf(empty.delta_est));
}

TEST_CASE("quadratic growth sampling") {
  const double mu = 1e-2;
  const LqSetup lq = linear_problem(32, 0.5, mu, -0.5, 0.8);
  const OptimalityReport r = semismooth_newton(lq.problem, GridFunction(lq.op->grid()));
  REQUIRE(r.converged);
  const GrowthSampleReport g = quadratic_growth_sample(lq.problem, r.control, 0.1, mu / 4, 200);
  CHECK(g.samples == 200);
  CHECK(g.violations == 0);
  CHECK(g.failed == 0);
  CHECK(g.evaluated + g.degenerate == g.samples);
  CHECK(g.ball_norm == 2.0);
  CHECK(g.margin_min >= mu / 2 - 1e-6);

  // a control that is not a minimizer violates growth in some direction
  const GrowthSampleReport off = quadratic_growth_sample(lq.problem, GridFunction(lq.op->grid()), 0.1, mu / 4, 200);
  CHECK(off.violations > 0);
}

TEST_CASE("invalid problems") {
  auto op = std::make_shared<SpectralOperator>(Grid::interval(0, 1, 8), EllipticCoefficient::constant(1.0), 0.5);
  const Grid& g = op->grid();
  CHECK_THROWS_AS(ControlProblem(op, Nonlinearity::zero(), 0.0, GridFunction(g), Box::constant(g, 0, 1)),
                  std::invalid_argument);
  CHECK_THROWS_AS(ControlProblem(nullptr, Nonlinearity::zero(), 1.0, GridFunction(g), Box::constant(g, 0, 1)),
                  std::invalid_argument);
  const ControlProblem lipschitz(op, PowerLaw::constant(g, 1.0, 1.5).as_nonlinearity(), 1.0, GridFunction(g),
                                 Box::constant(g, 0, 1));
  CHECK_THROWS_AS(semismooth_newton(lipschitz, GridFunction(g)), std::invalid_argument);
  CHECK(projected_gradient(lipschitz, GridFunction(g, 0.5)).converged);
}
