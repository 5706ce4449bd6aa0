#include "fracctl/grid.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace fracctl {

Domain Domain::interval(double a, double b) {
  if (!(a < b)) throw std::invalid_argument("interval requires a < b");
  Domain d;
  d.kind = DomainKind::Interval;
  d.axes = {AxisBounds{a, b}, AxisBounds{0.0, 1.0}};
  return d;
}

Domain Domain::rectangle(AxisBounds x, AxisBounds y) {
  if (!(x.lo < x.hi) || !(y.lo < y.hi)) {
    throw std::invalid_argument("rectangle requires lo < hi on both axes");
  }
  Domain d;
  d.kind = DomainKind::Rectangle;
  d.axes = {x, y};
  return d;
}

Grid::Grid(Domain domain, int n) : domain_(domain), n_(n) {
  if (n < 1) throw std::invalid_argument("grid needs at least one interior node per axis");
  for (int axis = 0; axis < domain_.dimension(); ++axis) {
    const auto& ax = domain_.axes[static_cast<std::size_t>(axis)];
    if (!(ax.lo < ax.hi)) throw std::invalid_argument("grid axis requires lo < hi");
    h_[static_cast<std::size_t>(axis)] = ax.length() / static_cast<double>(n + 1);
  }
}

std::size_t Grid::size() const {
  const auto n = static_cast<std::size_t>(n_);
  return dimension() == 1 ? n : n * n;
}

double Grid::cell_volume() const { return dimension() == 1 ? h_[0] : h_[0] * h_[1]; }

double Grid::axis_coordinate(int axis, int index) const {
  const auto& ax = domain_.axes[static_cast<std::size_t>(axis)];
  return ax.lo + static_cast<double>(index) * h_[static_cast<std::size_t>(axis)];
}

double Grid::coordinate(std::size_t node, int axis) const {
  const auto n = static_cast<std::size_t>(n_);
  const std::size_t index = axis == 0 ? node % n : node / n;
  return axis_coordinate(axis, static_cast<int>(index) + 1);
}

// GridFunction -------------------------------------------------------------

GridFunction::GridFunction(const Grid& grid, double fill)
    : grid_(grid), values_(Eigen::VectorXd::Constant(static_cast<Eigen::Index>(grid.size()), fill)) {}

GridFunction::GridFunction(const Grid& grid, Eigen::VectorXd values)
    : grid_(grid), values_(std::move(values)) {
  if (static_cast<std::size_t>(values_.size()) != grid_.size()) {
    throw std::invalid_argument("grid function length does not match grid");
  }
}

GridFunction GridFunction::from_values(const Grid& grid, const std::vector<double>& values) {
  if (values.size() != grid.size()) {
    std::ostringstream msg;
    msg << "expected " << grid.size() << " nodal values, got " << values.size();
    throw std::invalid_argument(msg.str());
  }
  Eigen::VectorXd v(static_cast<Eigen::Index>(values.size()));
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      throw std::invalid_argument("non-finite nodal value at node " + std::to_string(i));
    }
    v[static_cast<Eigen::Index>(i)] = values[i];
  }
  return GridFunction(grid, std::move(v));
}

GridFunction GridFunction::sample(const Grid& grid,
                                  const std::function<double(double, double)>& fn) {
  GridFunction u(grid);
  const bool two_d = grid.dimension() == 2;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    u[i] = fn(grid.coordinate(i, 0), two_d ? grid.coordinate(i, 1) : 0.0);
  }
  return u;
}

void require_same_grid(const Grid& a, const Grid& b, const char* what) {
  if (!(a == b)) throw std::invalid_argument(std::string(what) + ": grid mismatch");
}

GridFunction& GridFunction::operator+=(const GridFunction& other) {
  require_same_grid(grid_, other.grid_, "operator+=");
  values_ += other.values_;
  return *this;
}

GridFunction& GridFunction::operator-=(const GridFunction& other) {
  require_same_grid(grid_, other.grid_, "operator-=");
  values_ -= other.values_;
  return *this;
}

GridFunction& GridFunction::operator*=(double scale) {
  values_ *= scale;
  return *this;
}

GridFunction operator+(GridFunction lhs, const GridFunction& rhs) { return lhs += rhs; }
GridFunction operator-(GridFunction lhs, const GridFunction& rhs) { return lhs -= rhs; }
GridFunction operator*(double scale, GridFunction u) { return u *= scale; }
GridFunction operator-(GridFunction u) { return u *= -1.0; }

GridFunction hadamard(const GridFunction& u, const GridFunction& v) {
  require_same_grid(u.grid(), v.grid(), "hadamard");
  return GridFunction(u.grid(), u.values().cwiseProduct(v.values()));
}

double lp_norm(const GridFunction& u, double p) {
  if (std::isnan(p) || p < 1.0) throw std::invalid_argument("lp_norm requires p >= 1");
  const auto& v = u.values();
  if (v.size() == 0) return 0.0;
  if (std::isinf(p)) return v.cwiseAbs().maxCoeff();
  const double w = u.grid().cell_volume();
  if (p == 1.0) return w * v.cwiseAbs().sum();
  if (p == 2.0) return std::sqrt(w * v.squaredNorm());
  // Scale by the max to avoid overflow for large p.
  const double m = v.cwiseAbs().maxCoeff();
  if (m == 0.0) return 0.0;
  double acc = 0.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) acc += std::pow(std::abs(v[i]) / m, p);
  return m * std::pow(w * acc, 1.0 / p);
}

double inner(const GridFunction& u, const GridFunction& v) {
  require_same_grid(u.grid(), v.grid(), "inner");
  return u.grid().cell_volume() * u.values().dot(v.values());
}

// Box ----------------------------------------------------------------------

Box::Box(GridFunction lower, GridFunction upper) : lower_(std::move(lower)), upper_(std::move(upper)) {
  require_same_grid(lower_.grid(), upper_.grid(), "Box");
  for (std::size_t i = 0; i < lower_.size(); ++i) {
    if (!(lower_[i] <= upper_[i])) {
      std::ostringstream msg;
      msg << "box infeasible at node " << i << ": z_a = " << lower_[i] << " > z_b = " << upper_[i];
      throw std::invalid_argument(msg.str());
    }
  }
}

Box Box::constant(const Grid& grid, double lower, double upper) {
  return Box(GridFunction(grid, lower), GridFunction(grid, upper));
}

bool Box::contains(const GridFunction& z) const {
  require_same_grid(grid(), z.grid(), "Box::contains");
  for (std::size_t i = 0; i < z.size(); ++i) {
    if (z[i] < lower_[i] || z[i] > upper_[i]) return false;
  }
  return true;
}

GridFunction project_box(const GridFunction& w, const Box& box) {
  require_same_grid(w.grid(), box.grid(), "project_box");
  GridFunction out = w;
  for (std::size_t i = 0; i < w.size(); ++i) {
    out[i] = std::min(box.upper()[i], std::max(box.lower()[i], w[i]));
  }
  return out;
}

// Serialization ------------------------------------------------------------

nlohmann::ordered_json domain_to_json(const Domain& domain) {
  nlohmann::ordered_json j;
  j["kind"] = domain.kind == DomainKind::Interval ? "interval" : "rectangle";
  auto bounds = nlohmann::ordered_json::array();
  for (int axis = 0; axis < domain.dimension(); ++axis) {
    const auto& ax = domain.axes[static_cast<std::size_t>(axis)];
    bounds.push_back({ax.lo, ax.hi});
  }
  j["bounds"] = bounds;
  return j;
}

Domain domain_from_json(const nlohmann::json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  const auto& bounds = j.at("bounds");
  auto axis = [&](std::size_t k) {
    const auto& b = bounds.at(k);
    if (!b.is_array() || b.size() != 2) throw std::invalid_argument("bounds entries must be [lo, hi]");
    return AxisBounds{b.at(0).get<double>(), b.at(1).get<double>()};
  };
  if (kind == "interval") {
    if (bounds.size() != 1) throw std::invalid_argument("interval needs exactly one bounds pair");
    const auto ax = axis(0);
    return Domain::interval(ax.lo, ax.hi);
  }
  if (kind == "rectangle") {
    if (bounds.size() != 2) throw std::invalid_argument("rectangle needs two bounds pairs");
    return Domain::rectangle(axis(0), axis(1));
  }
  throw std::invalid_argument("unknown domain kind '" + kind + "'");
}

nlohmann::ordered_json to_json(const GridFunction& u) {
  nlohmann::ordered_json j;
  j["domain"] = domain_to_json(u.grid().domain());
  j["n"] = u.grid().nodes_per_axis();
  j["values"] = std::vector<double>(u.values().data(), u.values().data() + u.values().size());
  return j;
}

GridFunction grid_function_from_json(const nlohmann::json& j) {
  const Grid grid(domain_from_json(j.at("domain")), j.at("n").get<int>());
  return GridFunction::from_values(grid, j.at("values").get<std::vector<double>>());
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string to_csv(const GridFunction& u, const std::string& value_name) {
  const Grid& g = u.grid();
  std::ostringstream out;
  out << "# columns: x" << (g.dimension() == 2 ? ",y" : "") << "," << value_name
      << " (interior nodes, x fastest)\n";
  out << "x" << (g.dimension() == 2 ? ",y" : "") << "," << value_name << "\n";
  for (std::size_t i = 0; i < u.size(); ++i) {
    out << format_double(g.coordinate(i, 0));
    if (g.dimension() == 2) out << "," << format_double(g.coordinate(i, 1));
    out << "," << format_double(u[i]) << "\n";
  }
  return out.str();
}

}  // namespace fracctl
