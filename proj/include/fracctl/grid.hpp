#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

namespace fracctl {

enum class DomainKind { Interval, Rectangle };

struct AxisBounds {
  double lo = 0.0;
  double hi = 1.0;

  double length() const { return hi - lo; }
  bool operator==(const AxisBounds&) const = default;
};

/// Open interval (a,b) or rectangle (a,b)x(c,d).
struct Domain {
  DomainKind kind = DomainKind::Interval;
  std::array<AxisBounds, 2> axes{};

  static Domain interval(double a, double b);
  static Domain rectangle(AxisBounds x, AxisBounds y);

  int dimension() const { return kind == DomainKind::Interval ? 1 : 2; }
  bool operator==(const Domain&) const = default;
};

/// Uniform tensor grid of interior nodes. The homogeneous Dirichlet
/// (exterior) condition is implicit: boundary nodes are not stored.
///
/// Nodes are ordered lexicographically with x fastest, so node
/// `i + n * j` sits at (x_i, y_j).
class Grid {
 public:
  Grid() = default;
  Grid(Domain domain, int n);

  static Grid interval(double a, double b, int n) { return Grid(Domain::interval(a, b), n); }
  static Grid rectangle(AxisBounds x, AxisBounds y, int n) {
    return Grid(Domain::rectangle(x, y), n);
  }

  const Domain& domain() const { return domain_; }
  int dimension() const { return domain_.dimension(); }
  int nodes_per_axis() const { return n_; }
  std::size_t size() const;

  double spacing(int axis) const { return h_[static_cast<std::size_t>(axis)]; }
  /// Quadrature weight h^N attached to every node.
  double cell_volume() const;

  /// Coordinate of interior node `index` (1-based, 1..n) along `axis`.
  double axis_coordinate(int axis, int index) const;
  /// Coordinate of flattened node `node` along `axis`.
  double coordinate(std::size_t node, int axis) const;

  bool operator==(const Grid& other) const {
    return domain_ == other.domain_ && n_ == other.n_;
  }

 private:
  Domain domain_{};
  int n_ = 1;
  std::array<double, 2> h_{1.0, 1.0};
};

/// Nodal values of a field on a Grid.
class GridFunction {
 public:
  GridFunction() = default;
  explicit GridFunction(const Grid& grid, double fill = 0.0);
  GridFunction(const Grid& grid, Eigen::VectorXd values);

  /// Builds from external data; rejects wrong length and non-finite values.
  static GridFunction from_values(const Grid& grid, const std::vector<double>& values);
  /// Samples `fn(x)` (1D) or `fn(x, y)` (2D, y ignored in 1D) at every node.
  static GridFunction sample(const Grid& grid, const std::function<double(double, double)>& fn);

  const Grid& grid() const { return grid_; }
  std::size_t size() const { return static_cast<std::size_t>(values_.size()); }
  const Eigen::VectorXd& values() const { return values_; }
  Eigen::VectorXd& values() { return values_; }

  double operator[](std::size_t i) const { return values_[static_cast<Eigen::Index>(i)]; }
  double& operator[](std::size_t i) { return values_[static_cast<Eigen::Index>(i)]; }

  bool all_finite() const { return values_.allFinite(); }

  GridFunction& operator+=(const GridFunction& other);
  GridFunction& operator-=(const GridFunction& other);
  GridFunction& operator*=(double scale);

 private:
  Grid grid_{};
  Eigen::VectorXd values_{};
};

GridFunction operator+(GridFunction lhs, const GridFunction& rhs);
GridFunction operator-(GridFunction lhs, const GridFunction& rhs);
GridFunction operator*(double scale, GridFunction u);
GridFunction operator-(GridFunction u);
/// Nodewise product.
GridFunction hadamard(const GridFunction& u, const GridFunction& v);

/// Throws std::invalid_argument when the two grids differ.
void require_same_grid(const Grid& a, const Grid& b, const char* what);

/// Discrete L^p norm (rectangle rule); p = +infinity gives the max norm.
double lp_norm(const GridFunction& u, double p);
/// Discrete L^2 pairing h^N sum u_i v_i.
double inner(const GridFunction& u, const GridFunction& v);

/// Pointwise bounds z_a <= z_b on a common grid.
class Box {
 public:
  Box(GridFunction lower, GridFunction upper);
  static Box constant(const Grid& grid, double lower, double upper);

  const GridFunction& lower() const { return lower_; }
  const GridFunction& upper() const { return upper_; }
  const Grid& grid() const { return lower_.grid(); }

  bool contains(const GridFunction& z) const;

 private:
  GridFunction lower_;
  GridFunction upper_;
};

/// Nodewise clamp min{z_b, max{z_a, w}}.
GridFunction project_box(const GridFunction& w, const Box& box);

// Serialization ------------------------------------------------------------

nlohmann::ordered_json domain_to_json(const Domain& domain);
Domain domain_from_json(const nlohmann::json& j);

/// JSON envelope {domain, n, values}.
nlohmann::ordered_json to_json(const GridFunction& u);
GridFunction grid_function_from_json(const nlohmann::json& j);

/// CSV with a commented header, columns x[,y],value, 17 significant digits.
std::string to_csv(const GridFunction& u, const std::string& value_name = "value");

/// printf-style %.17g; round-trips every finite double.
std::string format_double(double v);

}  // namespace fracctl
