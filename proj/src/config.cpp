#include "fracctl/config.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <set>

#include "fracctl/integral_op.hpp"
#include "fracctl/spectral_op.hpp"

namespace fracctl {

using nlohmann::json;

ConfigError::ConfigError(const std::string& path, const std::string& message)
    : std::runtime_error(path.empty() ? message : path + ": " + message), path_(path) {}

namespace {

std::string join(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

// Object reader that remembers which keys were consumed so leftovers can be
// reported as unknown.
class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_, "expected an object");
  }

  const std::string& path() const { return path_; }
  std::string at(const std::string& key) const { return join(path_, key); }

  const json* find(const std::string& key) {
    used_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  const json& require(const std::string& key) {
    const json* v = find(key);
    if (!v) throw ConfigError(at(key), "missing required key");
    return *v;
  }

  double number(const std::string& key, double fallback) {
    const json* v = find(key);
    return v ? as_number(*v, at(key)) : fallback;
  }

  std::optional<double> optional_number(const std::string& key) {
    const json* v = find(key);
    if (!v || v->is_null()) return std::nullopt;
    return as_number(*v, at(key));
  }

  int integer(const std::string& key, int fallback) {
    const json* v = find(key);
    return v ? as_integer(*v, at(key)) : fallback;
  }

  bool boolean(const std::string& key, bool fallback) {
    const json* v = find(key);
    if (!v) return fallback;
    if (!v->is_boolean()) throw ConfigError(at(key), "expected a boolean");
    return v->get<bool>();
  }

  std::string string(const std::string& key, const std::string& fallback) {
    const json* v = find(key);
    if (!v) return fallback;
    if (!v->is_string()) throw ConfigError(at(key), "expected a string");
    return v->get<std::string>();
  }

  std::vector<double> numbers(const std::string& key, std::vector<double> fallback) {
    const json* v = find(key);
    if (!v) return fallback;
    if (!v->is_array()) throw ConfigError(at(key), "expected an array of numbers");
    std::vector<double> out;
    for (std::size_t i = 0; i < v->size(); ++i) out.push_back(as_number((*v)[i], at(key) + "[" + std::to_string(i) + "]"));
    return out;
  }

  std::vector<int> integers(const std::string& key, std::vector<int> fallback) {
    const json* v = find(key);
    if (!v) return fallback;
    if (!v->is_array()) throw ConfigError(at(key), "expected an array of integers");
    std::vector<int> out;
    for (std::size_t i = 0; i < v->size(); ++i) out.push_back(as_integer((*v)[i], at(key) + "[" + std::to_string(i) + "]"));
    return out;
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!used_.count(it.key())) throw ConfigError(at(it.key()), "unknown key");
    }
  }

  static double as_number(const json& v, const std::string& path) {
    if (!v.is_number()) throw ConfigError(path, "expected a number");
    const double d = v.get<double>();
    if (!std::isfinite(d)) throw ConfigError(path, "expected a finite number");
    return d;
  }

  static int as_integer(const json& v, const std::string& path) {
    if (!v.is_number_integer()) throw ConfigError(path, "expected an integer");
    return v.get<int>();
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> used_;
};

FieldSpec parse_field(const json& j, const std::string& path, const std::filesystem::path& base_dir) {
  FieldSpec spec;
  if (j.is_number()) {
    spec.constant = Reader::as_number(j, path);
    return spec;
  }
  Reader r(j, path);
  const int kinds = int(j.contains("constant")) + int(j.contains("sine")) + int(j.contains("values")) +
                    int(j.contains("file"));
  if (kinds != 1) throw ConfigError(path, "exactly one of constant, sine, values, file is required");
  if (j.contains("constant")) {
    spec.kind = FieldSpec::Kind::Constant;
    spec.constant = r.number("constant", 0.0);
  } else if (j.contains("sine")) {
    spec.kind = FieldSpec::Kind::Sine;
    Reader sine(r.require("sine"), r.at("sine"));
    spec.amplitude = sine.number("amplitude", 1.0);
    spec.modes = sine.integers("modes", {1});
    if (spec.modes.empty() || spec.modes.size() > 2) throw ConfigError(sine.at("modes"), "expected one or two modes");
    for (int k : spec.modes)
      if (k < 1) throw ConfigError(sine.at("modes"), "modes must be positive");
    sine.finish();
  } else if (j.contains("values")) {
    spec.kind = FieldSpec::Kind::Values;
    spec.values = r.numbers("values", {});
  } else {
    spec.kind = FieldSpec::Kind::File;
    spec.file = r.string("file", "");
    if (spec.file.is_relative() && !base_dir.empty()) spec.file = base_dir / spec.file;
  }
  r.finish();
  return spec;
}

OperatorSpec parse_operator(const json& j, const std::string& path) {
  OperatorSpec spec;
  Reader r(j, path);
  spec.backend = r.string("backend", spec.backend);
  if (spec.backend != "spectral" && spec.backend != "integral") {
    throw ConfigError(r.at("backend"), "expected 'spectral' or 'integral'");
  }
  spec.s = r.number("s", spec.s);
  if (!(spec.s > 0.0 && spec.s < 1.0)) throw ConfigError(r.at("s"), "s must lie in (0,1)");
  if (const json* d = r.find("domain")) {
    try {
      spec.domain = domain_from_json(*d);
    } catch (const std::exception& e) {
      throw ConfigError(r.at("domain"), e.what());
    }
  }
  spec.n = r.integer("n", spec.n);
  if (spec.n < 1) throw ConfigError(r.at("n"), "n must be positive");
  if (const json* c = r.find("coefficient")) {
    const std::string cpath = r.at("coefficient");
    if (c->is_number()) {
      spec.coefficient = {Reader::as_number(*c, cpath)};
    } else {
      Reader cr(*c, cpath);
      if (c->contains("constant") == c->contains("polynomial")) {
        throw ConfigError(cpath, "exactly one of constant, polynomial is required");
      }
      if (c->contains("constant")) {
        spec.coefficient = {cr.number("constant", 1.0)};
      } else {
        spec.coefficient = cr.numbers("polynomial", {});
        if (spec.coefficient.empty()) throw ConfigError(cr.at("polynomial"), "empty polynomial");
      }
      spec.coefficient_floor = cr.number("floor", spec.coefficient_floor);
      if (!(spec.coefficient_floor > 0.0)) throw ConfigError(cr.at("floor"), "floor must be positive");
      cr.finish();
    }
    if (spec.coefficient.size() == 1 && !(spec.coefficient[0] > 0.0)) {
      throw ConfigError(cpath, "coefficient must be positive");
    }
  }
  spec.gauss_points = r.integer("gauss_points", spec.gauss_points);
  if (spec.gauss_points < 1) throw ConfigError(r.at("gauss_points"), "need at least one point");
  spec.force_dense = r.boolean("force_dense", spec.force_dense);
  r.finish();
  if (spec.backend == "integral" && spec.domain.dimension() != 1) {
    throw ConfigError(path, "the integral backend supports intervals only");
  }
  if (spec.domain.dimension() == 2 && spec.coefficient.size() != 1) {
    throw ConfigError(join(path, "coefficient"), "a variable coefficient needs an interval domain");
  }
  if (spec.coefficient.size() > 1) {
    // Nodes and cell midpoints, as sampled by the assembly.
    const AxisBounds ax = spec.domain.axes[0];
    const double h = ax.length() / (spec.n + 1);
    for (int k = 0; k <= 2 * spec.n + 2; ++k) {
      const double x = ax.lo + 0.5 * k * h;
      double a = 0.0;
      for (auto it = spec.coefficient.rbegin(); it != spec.coefficient.rend(); ++it) a = a * x + *it;
      if (!(a >= spec.coefficient_floor)) {
        throw ConfigError(join(path, "coefficient"), "a(" + format_double(x) + ") = " + format_double(a) +
                                                         " is below the ellipticity floor");
      }
    }
  }
  return spec;
}

NonlinearitySpec parse_nonlinearity(const json& j, const std::string& path) {
  NonlinearitySpec spec;
  Reader r(j, path);
  spec.kind = r.string("kind", spec.kind);
  if (spec.kind == "power_law") {
    spec.q = r.number("q", spec.q);
    spec.b = r.number("b", spec.b);
    if (!(spec.q >= 1.0)) throw ConfigError(r.at("q"), "q must be at least 1");
    if (!(spec.b > 0.0)) throw ConfigError(r.at("b"), "b must be positive");
  } else if (spec.kind != "zero") {
    throw ConfigError(r.at("kind"), "expected 'zero' or 'power_law'");
  }
  r.finish();
  return spec;
}

ProblemSpec parse_problem(const json& j, const std::string& path, const std::filesystem::path& base_dir) {
  ProblemSpec spec;
  Reader r(j, path);
  spec.op = parse_operator(r.require("operator"), r.at("operator"));
  if (const json* nl = r.find("nonlinearity")) spec.nl = parse_nonlinearity(*nl, r.at("nonlinearity"));
  spec.mu = r.number("mu", spec.mu);
  if (!(spec.mu > 0.0)) throw ConfigError(r.at("mu"), "mu must be positive");
  if (const json* t = r.find("target")) spec.target = parse_field(*t, r.at("target"), base_dir);
  if (const json* b = r.find("bounds")) {
    Reader br(*b, r.at("bounds"));
    if (const json* lo = br.find("lower")) spec.lower = parse_field(*lo, br.at("lower"), base_dir);
    if (const json* hi = br.find("upper")) spec.upper = parse_field(*hi, br.at("upper"), base_dir);
    br.finish();
  }
  r.finish();

  // Static invariants that need the grid: field shapes and box feasibility.
  const Grid grid = spec.op.grid();
  auto realize = [&](const FieldSpec& f, const std::string& fpath) {
    try {
      return f.realize(grid);
    } catch (const std::exception& e) {
      throw ConfigError(fpath, e.what());
    }
  };
  realize(spec.target, join(path, "target"));
  const GridFunction lower = realize(spec.lower, join(path, "bounds.lower"));
  const GridFunction upper = realize(spec.upper, join(path, "bounds.upper"));
  try {
    Box(lower, upper);
  } catch (const std::exception& e) {
    throw ConfigError(join(path, "bounds"), e.what());
  }
  return spec;
}

SolverSpec parse_solver(const json& j, const std::string& path) {
  SolverSpec spec;
  Reader r(j, path);
  spec.method = r.string("method", spec.method);
  if (spec.method != "projected-gradient" && spec.method != "semismooth-newton") {
    throw ConfigError(r.at("method"), "expected 'projected-gradient' or 'semismooth-newton'");
  }
  spec.tol = r.number("tol", spec.tol);
  if (!(spec.tol > 0.0)) throw ConfigError(r.at("tol"), "tol must be positive");
  spec.max_iter = r.integer("max_iter", spec.max_iter);
  if (spec.max_iter < 0) throw ConfigError(r.at("max_iter"), "max_iter must be nonnegative");
  spec.state_tol = r.number("state_tol", spec.state_tol);
  if (!(spec.state_tol > 0.0)) throw ConfigError(r.at("state_tol"), "state_tol must be positive");
  spec.max_newton = r.integer("max_newton", spec.max_newton);
  if (spec.max_newton < 1) throw ConfigError(r.at("max_newton"), "max_newton must be positive");
  r.finish();
  return spec;
}

std::size_t parse_count(Reader& r, const std::string& key, std::size_t fallback) {
  const int v = r.integer(key, static_cast<int>(fallback));
  if (v < 0) throw ConfigError(r.at(key), "must be nonnegative");
  return static_cast<std::size_t>(v);
}

std::vector<double> parse_positive_list(Reader& r, const std::string& key, std::vector<double> fallback) {
  auto out = r.numbers(key, std::move(fallback));
  if (out.empty()) throw ConfigError(r.at(key), "must not be empty");
  for (double v : out)
    if (!(v > 0.0)) throw ConfigError(r.at(key), "entries must be positive");
  return out;
}

ProbeSpec parse_probes(const json& j, const std::string& path) {
  ProbeSpec spec;
  Reader r(j, path);
  spec.tau = r.numbers("tau", spec.tau);
  for (double t : spec.tau)
    if (!(t >= 0.0)) throw ConfigError(r.at("tau"), "tau values must be nonnegative");
  spec.ssc_tau = r.number("ssc_tau", spec.ssc_tau);
  if (!(spec.ssc_tau >= 0.0)) throw ConfigError(r.at("ssc_tau"), "ssc_tau must be nonnegative");
  spec.ssc_iters = r.integer("ssc_iters", spec.ssc_iters);
  if (spec.ssc_iters < 0) throw ConfigError(r.at("ssc_iters"), "ssc_iters must be nonnegative");
  spec.second_order = r.boolean("second_order", spec.second_order);
  spec.rho = r.number("rho", spec.rho);
  if (!(spec.rho > 0.0)) throw ConfigError(r.at("rho"), "rho must be positive");
  spec.beta = r.optional_number("beta");
  spec.growth_samples = parse_count(r, "growth_samples", spec.growth_samples);
  spec.growth_c = r.optional_number("growth_c");
  spec.expect_growth_pass = r.boolean("expect_growth_pass", spec.expect_growth_pass);
  spec.condition_samples = parse_count(r, "condition_samples", spec.condition_samples);
  spec.condition_range = r.number("condition_range", spec.condition_range);
  if (!(spec.condition_range > 0.0)) throw ConfigError(r.at("condition_range"), "must be positive");
  spec.gradient_steps = parse_positive_list(r, "gradient_steps", spec.gradient_steps);
  spec.hessian_steps = parse_positive_list(r, "hessian_steps", spec.hessian_steps);
  spec.vi_directions = parse_count(r, "vi_directions", spec.vi_directions);
  r.finish();
  return spec;
}

StudySpec parse_study(const json& j, const std::string& path) {
  StudySpec spec;
  Reader r(j, path);
  spec.oracle = r.string("oracle", spec.oracle);
  if (spec.oracle != "getoor" && spec.oracle != "manufactured") {
    throw ConfigError(r.at("oracle"), "expected 'getoor' or 'manufactured'");
  }
  spec.n = r.integers("n", spec.n);
  if (spec.n.size() < 2) throw ConfigError(r.at("n"), "need at least two grid sizes");
  for (std::size_t i = 0; i < spec.n.size(); ++i) {
    if (spec.n[i] < 1 || (i > 0 && spec.n[i] <= spec.n[i - 1])) {
      throw ConfigError(r.at("n"), "grid sizes must be positive and strictly increasing");
    }
  }
  r.finish();
  return spec;
}

}  // namespace

GridFunction FieldSpec::realize(const Grid& grid) const {
  switch (kind) {
    case Kind::Constant:
      return GridFunction(grid, constant);
    case Kind::Sine: {
      const Domain& d = grid.domain();
      const int kx = modes[0];
      const int ky = modes.size() > 1 ? modes[1] : modes[0];
      return GridFunction::sample(grid, [&](double x, double y) {
        double v = amplitude * std::sin(kx * std::numbers::pi * (x - d.axes[0].lo) / d.axes[0].length());
        if (grid.dimension() == 2) v *= std::sin(ky * std::numbers::pi * (y - d.axes[1].lo) / d.axes[1].length());
        return v;
      });
    }
    case Kind::Values:
      return GridFunction::from_values(grid, values);
    case Kind::File: {
      std::ifstream in(file);
      if (!in) throw std::runtime_error("cannot open field file " + file.string());
      const GridFunction u = grid_function_from_json(json::parse(in));
      require_same_grid(grid, u.grid(), "field file");
      return u;
    }
  }
  throw std::logic_error("unreachable field kind");
}

OperatorPtr OperatorSpec::build() const { return build(grid()); }

OperatorPtr OperatorSpec::build(const Grid& g) const {
  if (backend == "integral") {
    return std::make_shared<IntegralOperator>(g, s, IntegralOptions{.gauss_points = gauss_points});
  }
  SpectralOptions options;
  options.force_dense = force_dense;
  EllipticCoefficient coeff = EllipticCoefficient::constant(coefficient[0]);
  if (coefficient.size() > 1) {
    const std::vector<double> c = coefficient;
    coeff = EllipticCoefficient::variable(
        [c](double x) {
          double v = 0.0;
          for (auto it = c.rbegin(); it != c.rend(); ++it) v = v * x + *it;
          return v;
        },
        coefficient_floor);
  }
  return std::make_shared<SpectralOperator>(g, coeff, s, options);
}

Nonlinearity NonlinearitySpec::build(const Grid& grid) const {
  if (kind == "zero") return Nonlinearity::zero();
  return PowerLaw::constant(grid, b, q).as_nonlinearity();
}

RunConfig parse_config(const json& doc, const std::filesystem::path& base_dir) {
  RunConfig cfg;
  Reader r(doc, "");
  cfg.experiment = r.string("experiment", cfg.experiment);
  const auto& names = experiment_names();
  if (std::find(names.begin(), names.end(), cfg.experiment) == names.end()) {
    throw ConfigError("experiment", "unknown experiment '" + cfg.experiment + "'");
  }
  if (const json* seed = r.find("seed")) {
    if (!seed->is_number_unsigned()) throw ConfigError("seed", "expected a nonnegative integer");
    cfg.seed = seed->get<std::uint64_t>();
  }
  cfg.output_dir = r.string("output_dir", cfg.output_dir.string());
  cfg.problem = parse_problem(r.require("problem"), "problem", base_dir);
  if (const json* c = r.find("control")) {
    cfg.control = parse_field(*c, "control", base_dir);
    try {
      cfg.control.realize(cfg.problem.op.grid());
    } catch (const std::exception& e) {
      throw ConfigError("control", e.what());
    }
  }
  if (const json* s = r.find("solver")) cfg.solver = parse_solver(*s, "solver");
  if (const json* p = r.find("probes")) cfg.probes = parse_probes(*p, "probes");
  if (const json* s = r.find("study")) cfg.study = parse_study(*s, "study");
  r.finish();
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("", "cannot open config file " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("", std::string("malformed JSON: ") + e.what());
  }
  return parse_config(doc, path.parent_path());
}

}  // namespace fracctl
