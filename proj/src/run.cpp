#include "fracctl/run.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "fracctl/integral_op.hpp"
#include "fracctl/optimizer.hpp"
#include "fracctl/sensitivity.hpp"
#include "fracctl/spectral_op.hpp"
#include "fracctl/state_solver.hpp"

namespace fracctl {

using nlohmann::ordered_json;

namespace {

// Raised when a solver stops short of its tolerance (exit code 2).
class NotConverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-finite values are omitted rather than written as null.
void put(ordered_json& j, const char* key, double v) {
  if (std::isfinite(v)) j[key] = v;
}

ordered_json history_json(const std::vector<double>& values) {
  ordered_json arr = ordered_json::array();
  for (double v : values) arr.push_back(v);
  return arr;
}

GridFunction random_field(const Grid& grid, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  GridFunction v(grid);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = normal(rng);
  return v;
}

// Builds a value and rethrows construction failures as config errors.
template <class F>
auto at_path(const std::string& path, F&& make) {
  try {
    return make();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(path, e.what());
  } catch (const std::domain_error& e) {
    throw ConfigError(path, e.what());
  }
}

struct Context {
  const RunConfig& cfg;
  std::uint64_t seed;
  ordered_json report;
  std::vector<Check> checks;
  std::vector<std::pair<std::string, std::string>> files;
  bool converged = true;

  void check(const std::string& name, bool pass) { checks.push_back({name, pass}); }
};

ControlProblem build_problem(const RunConfig& cfg) {
  const ProblemSpec& p = cfg.problem;
  const Grid grid = p.op.grid();
  OperatorPtr op = at_path("problem.operator", [&] { return p.op.build(grid); });
  Nonlinearity nl = at_path("problem.nonlinearity", [&] { return p.nl.build(grid); });
  GridFunction target = at_path("problem.target", [&] { return p.target.realize(grid); });
  Box box = at_path("problem.bounds", [&] { return Box(p.lower.realize(grid), p.upper.realize(grid)); });
  return at_path("problem", [&] { return ControlProblem(op, nl, p.mu, target, box); });
}

OptimizerOptions optimizer_options(const RunConfig& cfg) {
  OptimizerOptions o;
  o.tol = cfg.solver.tol;
  o.max_iter = cfg.solver.max_iter;
  o.state.tol = cfg.solver.state_tol;
  o.state.max_newton = cfg.solver.max_newton;
  return o;
}

ordered_json problem_json(const RunConfig& cfg) {
  const ProblemSpec& p = cfg.problem;
  ordered_json j;
  j["backend"] = p.op.backend;
  j["s"] = p.op.s;
  j["domain"] = domain_to_json(p.op.domain);
  j["n"] = p.op.n;
  j["mu"] = p.mu;
  ordered_json nl;
  nl["kind"] = p.nl.kind;
  if (p.nl.kind == "power_law") {
    nl["q"] = p.nl.q;
    nl["b"] = p.nl.b;
  }
  j["nonlinearity"] = nl;
  return j;
}

ordered_json state_json(const StateSolveReport& r) {
  ordered_json j;
  j["backend"] = r.backend;
  j["method"] = r.method;
  j["converged"] = r.converged;
  j["iterations"] = r.iterations;
  j["final_residual"] = r.final_residual;
  j["restarted_from_zero"] = r.restarted_from_zero;
  j["residual_history"] = history_json(r.newton_history);
  return j;
}

ordered_json ssc_json(const SscReport& r) {
  ordered_json j;
  j["tau"] = r.tau;
  j["cone_dimension"] = r.cone_dimension;
  j["empty_cone"] = r.empty_cone;
  put(j, "delta_est", r.delta_est);
  j["lanczos_steps"] = r.lanczos_steps;
  j["ritz_residual"] = r.ritz_residual;
  return j;
}

ordered_json growth_json(const GrowthSampleReport& r) {
  ordered_json j;
  j["rho"] = r.rho;
  j["beta"] = r.beta;
  j["ball_norm"] = std::isfinite(r.ball_norm) ? ordered_json(r.ball_norm) : ordered_json("inf");
  j["samples"] = r.samples;
  j["evaluated"] = r.evaluated;
  j["violations"] = r.violations;
  j["degenerate"] = r.degenerate;
  j["failed"] = r.failed;
  put(j, "margin_min", r.margin_min);
  return j;
}

ordered_json optimality_json(const OptimalityReport& r) {
  ordered_json j;
  j["method"] = r.method;
  j["converged"] = r.converged;
  j["iterations"] = r.iterations;
  if (r.method == "semismooth-newton") j["fallback_steps"] = r.fallback_steps;
  j["cost"] = r.cost;
  j["kkt_residual"] = r.kkt_residual;
  j["residual_history"] = history_json(r.residual_history);
  j["cost_history"] = history_json(r.cost_history);
  if (!r.active_sets.empty()) {
    ordered_json sets = ordered_json::array();
    for (const auto& a : r.active_sets) {
      ordered_json s;
      s["tau"] = a.tau;
      ordered_json nodes = ordered_json::array();
      for (std::size_t i = 0; i < a.mask.size(); ++i)
        if (a.mask[i]) nodes.push_back(i);
      s["count"] = nodes.size();
      s["nodes"] = nodes;
      sets.push_back(s);
    }
    j["active_sets"] = sets;
  }
  if (r.ssc) j["ssc"] = ssc_json(*r.ssc);
  if (r.growth) j["growth"] = growth_json(*r.growth);
  return j;
}

void add_fields(Context& ctx, const GridFunction* control, const GridFunction* state, const GridFunction* adjoint) {
  if (control) ctx.files.emplace_back("control.csv", to_csv(*control, "z"));
  if (state) ctx.files.emplace_back("state.csv", to_csv(*state, "u"));
  if (adjoint) ctx.files.emplace_back("adjoint.csv", to_csv(*adjoint, "phi"));
}

OptimalityReport solve_control(Context& ctx, const ControlProblem& problem) {
  const OptimizerOptions opts = optimizer_options(ctx.cfg);
  const GridFunction z0 = ctx.cfg.control.realize(problem.grid());
  OptimalityReport r = ctx.cfg.solver.method == "semismooth-newton" ? semismooth_newton(problem, z0, opts)
                                                                     : projected_gradient(problem, z0, opts);
  const GridFunction mult = r.adjoint + problem.mu * r.control;
  for (double tau : ctx.cfg.probes.tau) r.active_sets.push_back({tau, strongly_active_set(problem, r.control, mult, tau)});
  if (!r.converged) ctx.converged = false;
  ctx.check("optimizer_converged", r.converged);
  ctx.check("kkt_residual_within_tol", r.kkt_residual <= opts.tol);
  add_fields(ctx, &r.control, &r.state, &r.adjoint);
  return r;
}

// delta_est drives beta = delta/4 unless beta is configured; an empty cone
// falls back to mu/4.
double growth_beta(const RunConfig& cfg, const SscReport& ssc) {
  if (cfg.probes.beta) return *cfg.probes.beta;
  return std::isfinite(ssc.delta_est) ? ssc.delta_est / 4.0 : cfg.problem.mu / 4.0;
}

void ssc_checks(Context& ctx, const ControlProblem& problem, const SscReport& ssc) {
  if (ssc.empty_cone) {
    ctx.check("ssc_positive", true);
  } else if (problem.nl.is_zero()) {
    ctx.check("ssc_at_least_mu", ssc.delta_est >= problem.mu - 1e-8);
  } else {
    ctx.check("ssc_positive", ssc.delta_est > 0.0);
  }
}

void run_solve_state(Context& ctx) {
  const RunConfig& cfg = ctx.cfg;
  const ControlProblem problem = build_problem(cfg);
  const GridFunction z = cfg.control.realize(problem.grid());
  StateSolveOptions opts;
  opts.tol = cfg.solver.state_tol;
  opts.max_newton = cfg.solver.max_newton;
  const StateSolveReport r = solve_state(*problem.op, problem.nl, z, opts);
  ctx.report["state_solve"] = state_json(r);
  ctx.converged = r.converged;
  ctx.check("state_converged", r.converged);
  add_fields(ctx, &z, &r.u, nullptr);
}

void run_solve_control(Context& ctx) {
  const ControlProblem problem = build_problem(ctx.cfg);
  OptimalityReport r = solve_control(ctx, problem);
  if (ctx.cfg.probes.second_order && r.converged && problem.nl.differentiability_order() >= 2) {
    const OptimizerOptions opts = optimizer_options(ctx.cfg);
    r.ssc = ssc_probe(problem, r.control, ctx.cfg.probes.ssc_tau, ctx.cfg.probes.ssc_iters, opts, ctx.seed);
    ssc_checks(ctx, problem, *r.ssc);
    r.growth = quadratic_growth_sample(problem, r.control, ctx.cfg.probes.rho, growth_beta(ctx.cfg, *r.ssc),
                                       ctx.cfg.probes.growth_samples, opts, ctx.seed);
    ctx.check("growth_no_violations", r.growth->violations == 0 && r.growth->evaluated > 0);
  }
  ctx.report["optimality"] = optimality_json(r);
}

void run_check_kkt(Context& ctx) {
  const ControlProblem problem = build_problem(ctx.cfg);
  OptimalityReport r = solve_control(ctx, problem);
  ctx.report["optimality"] = optimality_json(r);
  const OptimizerOptions opts = optimizer_options(ctx.cfg);
  const FirstOrderReport fo =
      first_order_residual(problem, r.control, opts, ctx.seed, static_cast<int>(ctx.cfg.probes.vi_directions));
  ordered_json j;
  j["residual_linf"] = fo.residual_linf;
  put(j, "vi_min", fo.vi_min);
  j["vi_scale"] = fo.vi_scale;
  j["sign_threshold"] = fo.sign_threshold;
  j["sign_violations"] = fo.sign_violations;
  ctx.report["first_order"] = j;
  ctx.check("first_order_residual_within_tol", fo.residual_linf <= opts.tol);
  ctx.check("kkt_residual_recomputed", std::abs(fo.residual_linf - r.kkt_residual) <= 1e-12);
  ctx.check("variational_inequality", !(fo.vi_min < -10.0 * opts.tol * fo.vi_scale));
  ctx.check("sign_pattern", fo.sign_violations == 0);
}

void run_check_ssc(Context& ctx) {
  const ControlProblem problem = build_problem(ctx.cfg);
  OptimalityReport r = solve_control(ctx, problem);
  if (r.converged) {
    r.ssc = ssc_probe(problem, r.control, ctx.cfg.probes.ssc_tau, ctx.cfg.probes.ssc_iters,
                      optimizer_options(ctx.cfg), ctx.seed);
    ssc_checks(ctx, problem, *r.ssc);
  }
  ctx.report["optimality"] = optimality_json(r);
}

void run_check_growth_quadratic(Context& ctx) {
  const ControlProblem problem = build_problem(ctx.cfg);
  OptimalityReport r = solve_control(ctx, problem);
  if (r.converged) {
    const OptimizerOptions opts = optimizer_options(ctx.cfg);
    r.ssc = ssc_probe(problem, r.control, ctx.cfg.probes.ssc_tau, ctx.cfg.probes.ssc_iters, opts, ctx.seed);
    ssc_checks(ctx, problem, *r.ssc);
    r.growth = quadratic_growth_sample(problem, r.control, ctx.cfg.probes.rho, growth_beta(ctx.cfg, *r.ssc),
                                       ctx.cfg.probes.growth_samples, opts, ctx.seed);
    ctx.check("growth_no_violations", r.growth->violations == 0 && r.growth->evaluated > 0);
  }
  ctx.report["optimality"] = optimality_json(r);
}

void run_check_gradient(Context& ctx) {
  const RunConfig& cfg = ctx.cfg;
  const ControlProblem problem = build_problem(cfg);
  const OptimizerOptions opts = optimizer_options(cfg);
  const GridFunction z = cfg.control.realize(problem.grid());
  const SensitivityContext sens(problem.op, problem.nl, problem.u_d, problem.mu, z, opts.state);

  // Directions sized like the control, so the steps act as relative steps.
  const double scale = std::max(1.0, lp_norm(z, INFINITY));
  std::mt19937_64 rng(ctx.seed);
  const GridFunction v = scale * random_field(problem.grid(), rng);
  const GridFunction w = scale * random_field(problem.grid(), rng);
  const GridFunction g = sens.reduced_gradient();
  const double directional = inner(g, v);

  StateSolveOptions state = opts.state;
  state.initial_guess = sens.state();
  auto solve_at = [&](const GridFunction& zz) {
    const StateSolveReport r = solve_state(*problem.op, problem.nl, zz, state);
    if (!r.converged) throw NotConverged("state solve failed during the derivative check");
    return r.u;
  };

  ordered_json grad_rows = ordered_json::array();
  std::vector<double> grad_err;
  for (double h : cfg.probes.gradient_steps) {
    const GridFunction zp = z + h * v;
    const GridFunction zm = z - h * v;
    const double fd = cost_difference(problem.mu, problem.u_d, solve_at(zm), zm, solve_at(zp), zp) / (2.0 * h);
    const double err = std::abs(fd - directional) / std::max(std::abs(directional), 1e-300);
    grad_err.push_back(err);
    ordered_json row;
    row["h"] = h;
    row["finite_difference"] = fd;
    row["relative_error"] = err;
    grad_rows.push_back(row);
  }

  const GridFunction hv = sens.hessian_vec(v);
  const GridFunction hw = sens.hessian_vec(w);
  const double a = inner(hv, w);
  const double b = inner(v, hw);
  const double symmetry = std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300});

  ordered_json hess_rows = ordered_json::array();
  std::vector<double> hess_err;
  for (double h : cfg.probes.hessian_steps) {
    SensitivityContext plus(problem.op, problem.nl, problem.u_d, problem.mu, z + h * v, state);
    SensitivityContext minus(problem.op, problem.nl, problem.u_d, problem.mu, z - h * v, state);
    GridFunction fd = plus.reduced_gradient() - minus.reduced_gradient();
    fd *= 1.0 / (2.0 * h);
    const double err = lp_norm(fd - hv, 2.0) / std::max(lp_norm(hv, 2.0), 1e-300);
    hess_err.push_back(err);
    ordered_json row;
    row["h"] = h;
    row["relative_error"] = err;
    hess_rows.push_back(row);
  }

  auto orders = [](const std::vector<double>& steps, const std::vector<double>& errs) {
    std::vector<double> out;
    for (std::size_t i = 1; i < errs.size(); ++i) out.push_back(std::log(errs[i - 1] / errs[i]) / std::log(steps[i - 1] / steps[i]));
    return out;
  };
  const auto grad_orders = orders(cfg.probes.gradient_steps, grad_err);
  const auto hess_orders = orders(cfg.probes.hessian_steps, hess_err);

  ordered_json j;
  j["directional_derivative"] = directional;
  j["gradient"] = grad_rows;
  j["gradient_orders"] = history_json(grad_orders);
  j["hessian_symmetry"] = symmetry;
  j["hessian"] = hess_rows;
  j["hessian_orders"] = history_json(hess_orders);
  ctx.report["derivatives"] = j;

  ctx.check("gradient_error", grad_err.back() <= 1e-5);
  ctx.check("gradient_order", std::all_of(grad_orders.begin(), grad_orders.end(),
                                          [](double p) { return std::abs(p - 2.0) <= 0.2; }));
  ctx.check("hessian_symmetry", symmetry <= 1e-10);
  ctx.check("hessian_order", std::all_of(hess_orders.begin(), hess_orders.end(),
                                         [](double p) { return std::abs(p - 2.0) <= 0.3; }));
  add_fields(ctx, &z, &sens.state(), &sens.adjoint());
}

ordered_json witness_json(const Witness& w) {
  ordered_json j;
  j["node"] = w.node;
  j["xi"] = w.xi;
  j["eta"] = w.eta;
  return j;
}

void run_check_growth_condition(Context& ctx) {
  const RunConfig& cfg = ctx.cfg;
  const Grid grid = cfg.problem.op.grid();
  const Nonlinearity nl = at_path("problem.nonlinearity", [&] { return cfg.problem.nl.build(grid); });
  if (!cfg.probes.growth_c && !nl.growth_constant()) {
    throw ConfigError("probes.growth_c", "the nonlinearity has no growth constant; set one");
  }
  const double c = cfg.probes.growth_c ? *cfg.probes.growth_c : *nl.growth_constant();
  SamplingOptions sampling;
  sampling.samples = cfg.probes.condition_samples;
  sampling.range = cfg.probes.condition_range;
  sampling.seed = ctx.seed;

  const GrowthReport growth = check_growth(nl, c, sampling);
  ordered_json g;
  g["c"] = c;
  g["pass"] = growth.pass;
  put(g, "worst_ratio", growth.worst_ratio);
  g["samples"] = growth.samples;
  g["violations"] = growth.violations;
  if (growth.witness) g["witness"] = witness_json(*growth.witness);
  ctx.report["growth_condition"] = g;

  const MonotoneOddReport mono = check_monotone_odd(nl, sampling);
  ordered_json m;
  m["pass"] = mono.pass;
  m["zero_at_origin"] = mono.zero_at_origin;
  m["odd"] = mono.odd;
  m["increasing"] = mono.increasing;
  m["worst_oddness"] = mono.worst_oddness;
  if (mono.monotonicity_witness) m["witness"] = witness_json(*mono.monotonicity_witness);
  ctx.report["monotone_odd"] = m;

  if (cfg.problem.nl.kind == "power_law") {
    const Delta2Report d2 = check_delta2(PowerLaw::constant(grid, cfg.problem.nl.b, cfg.problem.nl.q), sampling);
    ordered_json d;
    d["pass"] = d2.pass;
    d["c1"] = d2.c1;
    d["worst_relative_deviation"] = d2.worst_relative_deviation;
    ctx.report["delta2"] = d;
    ctx.check("delta2", d2.pass);
  }
  if (cfg.probes.expect_growth_pass) {
    ctx.check("growth_condition_holds", growth.pass);
  } else {
    ctx.check("growth_condition_fails_with_witness", !growth.pass && growth.witness.has_value());
  }
  ctx.check("monotone_odd", mono.pass);
}

void run_convergence_study(Context& ctx) {
  const RunConfig& cfg = ctx.cfg;
  std::vector<ConvergenceRow> rows;
  if (cfg.study.oracle == "getoor") {
    if (cfg.problem.op.backend != "integral") {
      throw ConfigError("study.oracle", "the Getoor oracle needs the integral backend");
    }
    rows = getoor_study(cfg.problem.op, cfg.study.n);
  } else {
    if (cfg.problem.op.backend != "spectral" || cfg.problem.op.coefficient.size() != 1) {
      throw ConfigError("study.oracle", "the manufactured study needs the spectral backend with a constant coefficient");
    }
    rows = manufactured_study(cfg.problem.op, cfg.problem.nl, cfg.study.n, cfg.solver.state_tol);
  }
  ordered_json table = ordered_json::array();
  bool decreasing = true;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    ordered_json row;
    row["n"] = rows[i].n;
    row["h"] = rows[i].h;
    row["error_linf"] = rows[i].error_linf;
    row["error_l2"] = rows[i].error_l2;
    if (rows[i].order) put(row, "order", *rows[i].order);
    table.push_back(row);
    if (i > 0 && !(rows[i].error_linf < rows[i - 1].error_linf)) decreasing = false;
  }
  ordered_json j;
  j["oracle"] = cfg.study.oracle;
  j["rows"] = table;
  ctx.report["convergence"] = j;
  ctx.check("error_decreasing", decreasing);
  ctx.files.emplace_back("convergence.csv", convergence_csv(rows));
}

void run_operator_oracle(Context& ctx) {
  const RunConfig& cfg = ctx.cfg;
  const Grid grid = cfg.problem.op.grid();
  const OperatorPtr op = at_path("problem.operator", [&] { return cfg.problem.op.build(grid); });
  ordered_json j;
  j["backend"] = op->backend();
  if (const auto* sp = dynamic_cast<const SpectralOperator*>(op.get())) {
    const double s = sp->order();
    double eigen_err = 0.0;
    for (std::size_t k = 0; k < sp->mode_count(); ++k) {
      const GridFunction phi = sp->eigenvector(k);
      const double lam = std::pow(sp->eigenvalues()[static_cast<Eigen::Index>(k)], s);
      const GridFunction diff = sp->apply_power(phi, s) - lam * phi;
      eigen_err = std::max(eigen_err, lp_norm(diff, INFINITY) / (lam * lp_norm(phi, INFINITY)));
    }
    std::mt19937_64 rng(ctx.seed);
    const GridFunction u = random_field(grid, rng);
    const GridFunction twice = sp->apply_power(sp->apply_power(u, s), s);
    const GridFunction direct = sp->apply_power(u, 2.0 * s);
    const double semigroup = lp_norm(twice - direct, 2.0) / lp_norm(direct, 2.0);
    const GridFunction back = sp->apply_power(sp->apply_power(u, s), -s);
    const double inverse = lp_norm(back - u, 2.0) / lp_norm(u, 2.0);
    j["eigen_backend"] = sp->eigen_backend() == SpectralBackend::AnalyticSine ? "analytic-sine" : "dense-eig";
    j["modes"] = sp->mode_count();
    j["eigen_identity_error"] = eigen_err;
    j["semigroup_error"] = semigroup;
    j["inverse_error"] = inverse;
    ctx.check("eigen_identity", eigen_err <= 1e-10);
    ctx.check("semigroup", semigroup <= 1e-10);
    ctx.check("inverse", inverse <= 1e-10);
    ctx.files.emplace_back("spectrum.csv", sp->spectrum_csv());
  } else if (const auto* io = dynamic_cast<const IntegralOperator*>(op.get())) {
    const Eigen::MatrixXd& k = io->stiffness();
    const double asym = (k - k.transpose()).cwiseAbs().maxCoeff();
    const double lmin = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(k, Eigen::EigenvaluesOnly).eigenvalues()[0];
    const auto rows = getoor_study(cfg.problem.op, {grid.nodes_per_axis()});
    j["normalization"] = io->normalization();
    j["stiffness_asymmetry"] = asym;
    j["stiffness_min_eigenvalue"] = lmin;
    j["getoor_constant"] = getoor_constant(io->order());
    j["getoor_center_error"] = rows.front().error_linf;
    ctx.check("stiffness_symmetric", asym == 0.0);
    ctx.check("stiffness_positive_definite", lmin > 0.0);
    ctx.files.emplace_back("stiffness.csv", io->stiffness_csv());
  }
  ctx.report["operator"] = j;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

}  // namespace

double getoor_constant(double s) {
  return std::pow(2.0, 2.0 * s) * std::tgamma(0.5 + s) * std::tgamma(1.0 + s) / std::tgamma(0.5);
}

std::vector<ConvergenceRow> getoor_study(const OperatorSpec& spec, const std::vector<int>& sizes) {
  std::vector<ConvergenceRow> rows;
  const double target = getoor_constant(spec.s);
  const AxisBounds ax = spec.domain.axes[0];
  const double center = 0.5 * (ax.lo + ax.hi);
  const double quarter = 0.25 * ax.length();
  for (int n : sizes) {
    const Grid grid(spec.domain, n);
    const IntegralOperator op(grid, spec.s, IntegralOptions{.gauss_points = spec.gauss_points});
    const GridFunction u = GridFunction::sample(grid, [&](double x, double) {
      return std::pow(std::max((x - ax.lo) * (ax.hi - x), 0.0), spec.s);
    });
    const GridFunction au = op.apply(u);
    ConvergenceRow row;
    row.n = n;
    row.h = grid.spacing(0);
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < grid.size(); ++i) {
      if (std::abs(grid.coordinate(i, 0) - center) > quarter) continue;
      const double e = std::abs(au[i] - target) / target;
      row.error_linf = std::max(row.error_linf, e);
      sum += e * e;
      ++count;
    }
    row.error_l2 = std::sqrt(sum * row.h);
    rows.push_back(row);
  }
  for (std::size_t i = 1; i < rows.size(); ++i) {
    rows[i].order = std::log(rows[i - 1].error_linf / rows[i].error_linf) / std::log(rows[i - 1].h / rows[i].h);
  }
  return rows;
}

std::vector<ConvergenceRow> manufactured_study(const OperatorSpec& spec, const NonlinearitySpec& nl_spec,
                                               const std::vector<int>& sizes, double state_tol) {
  std::vector<ConvergenceRow> rows;
  const Domain& d = spec.domain;
  double lambda = 0.0;
  for (int axis = 0; axis < d.dimension(); ++axis) {
    const double l = d.axes[static_cast<std::size_t>(axis)].length();
    lambda += std::numbers::pi * std::numbers::pi / (l * l);
  }
  lambda *= spec.coefficient[0];
  const double scale = std::pow(lambda, spec.s);
  for (int n : sizes) {
    const Grid grid(d, n);
    const OperatorPtr op = spec.build(grid);
    const Nonlinearity nl = nl_spec.build(grid);
    const GridFunction exact = GridFunction::sample(grid, [&](double x, double y) {
      double v = std::sin(std::numbers::pi * (x - d.axes[0].lo) / d.axes[0].length());
      if (d.dimension() == 2) v *= std::sin(std::numbers::pi * (y - d.axes[1].lo) / d.axes[1].length());
      return v;
    });
    GridFunction z = scale * exact;
    if (!nl.is_zero()) z += eval_field(nl, exact, 0);
    StateSolveOptions opts;
    opts.tol = state_tol;
    const StateSolveReport r = solve_state(*op, nl, z, opts);
    if (!r.converged) throw NotConverged("state solve failed in the manufactured study at n = " + std::to_string(n));
    ConvergenceRow row;
    row.n = n;
    row.h = grid.spacing(0);
    row.error_linf = lp_norm(r.u - exact, INFINITY);
    row.error_l2 = lp_norm(r.u - exact, 2.0);
    rows.push_back(row);
  }
  for (std::size_t i = 1; i < rows.size(); ++i) {
    rows[i].order = std::log(rows[i - 1].error_linf / rows[i].error_linf) / std::log(rows[i - 1].h / rows[i].h);
  }
  return rows;
}

std::string convergence_csv(const std::vector<ConvergenceRow>& rows) {
  std::ostringstream out;
  out << "# columns: n (nodes per axis), h (mesh size), error_linf, error_l2, order (observed, vs previous row)\n";
  out << "n,h,error_linf,error_l2,order\n";
  for (const auto& r : rows) {
    out << r.n << ',' << format_double(r.h) << ',' << format_double(r.error_linf) << ','
        << format_double(r.error_l2) << ',' << (r.order ? format_double(*r.order) : std::string()) << '\n';
  }
  return out.str();
}

RunResult run(RunConfig config, const RunOptions& options) {
  RunResult result;
  if (options.experiment) {
    const auto& names = experiment_names();
    if (std::find(names.begin(), names.end(), *options.experiment) == names.end()) {
      result.exit_code = kExitInvalidConfig;
      result.message = "experiment: unknown experiment '" + *options.experiment + "'";
      return result;
    }
    config.experiment = *options.experiment;
  }
  if (options.seed) config.seed = *options.seed;
  if (options.out) config.output_dir = *options.out;
  result.output_dir = config.output_dir;

  Context ctx{config, config.seed, {}, {}, {}, true};
  ctx.report["experiment"] = config.experiment;
  ctx.report["seed"] = config.seed;
  ctx.report["problem"] = problem_json(config);

  try {
    const std::string& e = config.experiment;
    if (e == "solve-state") run_solve_state(ctx);
    else if (e == "solve-control") run_solve_control(ctx);
    else if (e == "check-gradient") run_check_gradient(ctx);
    else if (e == "check-kkt") run_check_kkt(ctx);
    else if (e == "check-ssc") run_check_ssc(ctx);
    else if (e == "check-growth-quadratic") run_check_growth_quadratic(ctx);
    else if (e == "check-growth-condition") run_check_growth_condition(ctx);
    else if (e == "convergence-study") run_convergence_study(ctx);
    else run_operator_oracle(ctx);
  } catch (const ConfigError& e) {
    result.exit_code = kExitInvalidConfig;
    result.message = e.what();
    return result;
  } catch (const NotConverged& e) {
    ctx.converged = false;
    result.message = e.what();
  } catch (const StateSolveError& e) {
    ctx.converged = false;
    result.message = e.what();
  } catch (const SensitivityError& e) {
    ctx.converged = false;
    result.message = e.what();
  } catch (const LinearSolveError& e) {
    ctx.converged = false;
    result.message = e.what();
  } catch (const std::exception& e) {
    result.exit_code = kExitFailure;
    result.message = e.what();
    return result;
  }

  ordered_json checks = ordered_json::array();
  bool all_pass = true;
  for (const auto& c : ctx.checks) {
    ordered_json row;
    row["name"] = c.name;
    row["pass"] = c.pass;
    checks.push_back(row);
    all_pass = all_pass && c.pass;
  }
  ctx.report["converged"] = ctx.converged;
  ctx.report["checks"] = checks;
  if (!result.message.empty()) ctx.report["error"] = result.message;

  try {
    std::filesystem::create_directories(config.output_dir);
    write_text(config.output_dir / "report.json", ctx.report.dump(2) + "\n");
    for (const auto& [name, text] : ctx.files) write_text(config.output_dir / name, text);
  } catch (const std::exception& e) {
    result.exit_code = kExitFailure;
    result.message = e.what();
    return result;
  }

  result.report = std::move(ctx.report);
  result.checks = std::move(ctx.checks);
  if (!ctx.converged) {
    result.exit_code = kExitNotConverged;
    if (result.message.empty()) result.message = "solver did not converge";
  } else if (options.assert_checks && !all_pass) {
    result.exit_code = kExitCheckFailed;
    for (const auto& c : result.checks)
      if (!c.pass) result.message += (result.message.empty() ? "failed checks: " : ", ") + c.name;
  }
  return result;
}

RunResult run_file(const std::filesystem::path& config_path, const RunOptions& options) {
  try {
    return run(load_config(config_path), options);
  } catch (const ConfigError& e) {
    RunResult result;
    result.exit_code = kExitInvalidConfig;
    result.message = e.what();
    return result;
  }
}

}  // namespace fracctl
