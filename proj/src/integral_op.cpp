#include "fracctl/integral_op.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include <Eigen/Cholesky>

namespace fracctl {

double fractional_laplacian_constant(int dimension, double s) {
  const double n = dimension;
  return s * std::pow(2.0, 2.0 * s) * std::tgamma(0.5 * (n + 2.0 * s)) /
         (std::pow(std::numbers::pi, 0.5 * n) * std::tgamma(1.0 - s));
}

double exterior_weight(double x, double a, double b, double s) {
  const double c = fractional_laplacian_constant(1, s);
  return c / (2.0 * s) * (std::pow(x - a, -2.0 * s) + std::pow(b - x, -2.0 * s));
}

GaussRule gauss_legendre_unit(int points) {
  if (points < 1) throw std::invalid_argument("Gauss rule needs at least one point");
  GaussRule rule;
  rule.nodes.resize(static_cast<std::size_t>(points));
  rule.weights.resize(static_cast<std::size_t>(points));
  const int n = points;
  for (int i = 0; i < (n + 1) / 2; ++i) {
    // Newton on P_n starting from the Chebyshev-like guess.
    double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p0 = 1.0;
      double p1 = x;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    // Recompute the derivative at the converged root.
    double p0 = 1.0;
    double p1 = x;
    for (int k = 2; k <= n; ++k) {
      const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
      p0 = p1;
      p1 = p2;
    }
    dp = n * (x * p1 - p0) / (x * x - 1.0);
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    const auto lo = static_cast<std::size_t>(i);
    const auto hi = static_cast<std::size_t>(n - 1 - i);
    rule.nodes[lo] = 0.5 * (1.0 - x);
    rule.nodes[hi] = 0.5 * (1.0 + x);
    rule.weights[lo] = 0.5 * w;
    rule.weights[hi] = 0.5 * w;
  }
  return rule;
}

namespace {

// Local matrices in reference units; every entry is scaled by h^{1-2s}.
struct LocalKernels {
  double same = 0.0;              // coefficient of [[1,-1],[-1,1]]
  Eigen::Matrix3d adjacent;       // dofs (e, e+1, e+2)
  std::vector<Eigen::Matrix4d> far;  // index m = f - e >= 2; dofs (e, e+1, f, f+1)
};

LocalKernels local_kernels(int elements, double s, const GaussRule& rule) {
  LocalKernels k;
  const double alpha = 1.0 - 2.0 * s;
  // int_0^1 int_0^1 |xi - eta|^{1-2s}
  k.same = 2.0 / ((alpha + 1.0) * (alpha + 2.0));

  // Touching elements: with a = 1 - xi, b = eta the difference vector is
  // homogeneous, d = [a, b - a, -b]. Splitting along a = b and scaling out
  // the radial variable leaves smooth integrals in w.
  k.adjacent.setZero();
  for (std::size_t q = 0; q < rule.nodes.size(); ++q) {
    const double w = rule.nodes[q];
    const double kernel = rule.weights[q] * std::pow(1.0 + w, -1.0 - 2.0 * s);
    const Eigen::Vector3d d1(1.0, w - 1.0, -w);
    const Eigen::Vector3d d2(w, 1.0 - w, -1.0);
    k.adjacent += kernel * (d1 * d1.transpose() + d2 * d2.transpose());
  }
  k.adjacent /= (3.0 - 2.0 * s);

  k.far.assign(static_cast<std::size_t>(std::max(elements, 2)), Eigen::Matrix4d::Zero());
  for (int m = 2; m < elements; ++m) {
    Eigen::Matrix4d acc = Eigen::Matrix4d::Zero();
    for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
      const double xi = rule.nodes[i];
      for (std::size_t j = 0; j < rule.nodes.size(); ++j) {
        const double eta = rule.nodes[j];
        const double dist = m + eta - xi;
        const double weight = rule.weights[i] * rule.weights[j] * std::pow(dist, -1.0 - 2.0 * s);
        const Eigen::Vector4d d(1.0 - xi, xi, -(1.0 - eta), -eta);
        acc += weight * (d * d.transpose());
      }
    }
    k.far[static_cast<std::size_t>(m)] = acc;
  }
  return k;
}

}  // namespace

IntegralOperator::IntegralOperator(const Grid& grid, double s, const IntegralOptions& options)
    : grid_(grid), s_(s) {
  if (grid.dimension() != 1) {
    throw std::invalid_argument("the integral fractional Laplacian is implemented in 1D only");
  }
  if (!(s > 0.0 && s < 1.0)) throw std::invalid_argument("fractional order s must lie in (0,1)");
  if (options.gauss_points < 1) throw std::invalid_argument("gauss_points must be positive");

  c_ = fractional_laplacian_constant(1, s);
  const int n = grid.nodes_per_axis();
  const int elements = n + 1;
  const double h = grid.spacing(0);
  const double a = grid.domain().axes[0].lo;
  const double b = grid.domain().axes[0].hi;
  const double scale = std::pow(h, 1.0 - 2.0 * s);
  const GaussRule rule = gauss_legendre_unit(options.gauss_points);
  const LocalKernels k = local_kernels(elements, s, rule);

  kappa_ = GridFunction::sample(grid, [&](double x, double) { return fracctl::exterior_weight(x, a, b, s); });

  // Global node j in 0..n+1 maps to unknown j-1; boundary nodes are dropped.
  auto dof = [n](int node) { return (node >= 1 && node <= n) ? node - 1 : -1; };

  // Full double integral over O x O (both orderings of every element pair).
  Eigen::MatrixXd full = Eigen::MatrixXd::Zero(n, n);
  auto scatter = [&](const int* nodes, int count, const auto& local, double factor) {
    for (int p = 0; p < count; ++p) {
      const int gp = dof(nodes[p]);
      if (gp < 0) continue;
      for (int q = 0; q < count; ++q) {
        const int gq = dof(nodes[q]);
        if (gq < 0) continue;
        full(gp, gq) += factor * local(p, q);
      }
    }
  };
  Eigen::Matrix2d same;
  same << 1.0, -1.0, -1.0, 1.0;
  same *= k.same;
  for (int e = 0; e < elements; ++e) {
    const int same_nodes[2] = {e, e + 1};
    scatter(same_nodes, 2, same, 1.0);
    if (e + 1 < elements) {
      const int adj_nodes[3] = {e, e + 1, e + 2};
      scatter(adj_nodes, 3, k.adjacent, 2.0);
    }
    for (int f = e + 2; f < elements; ++f) {
      const int far_nodes[4] = {e, e + 1, f, f + 1};
      scatter(far_nodes, 4, k.far[static_cast<std::size_t>(f - e)], 2.0);
    }
  }
  interaction_ = (0.5 * c_ * scale) * full;

  // Exterior weight against P1 products, element by element. The factor
  // (x-a)^{-2s} is integrated exactly on the first element, where it is
  // singular; (b-x)^{-2s} likewise on the last one.
  exterior_ = Eigen::MatrixXd::Zero(n, n);
  const double kc = c_ / (2.0 * s);
  const double touching = std::pow(h, 1.0 - 2.0 * s) / (3.0 - 2.0 * s);
  for (int e = 0; e < elements; ++e) {
    Eigen::Matrix2d local = Eigen::Matrix2d::Zero();
    for (std::size_t q = 0; q < rule.nodes.size(); ++q) {
      const double xi = rule.nodes[q];
      const double x = a + (e + xi) * h;
      double weight = 0.0;
      if (e > 0) weight += std::pow(x - a, -2.0 * s);
      if (e < elements - 1) weight += std::pow(b - x, -2.0 * s);
      const Eigen::Vector2d shape(1.0 - xi, xi);
      local += (rule.weights[q] * h * weight) * (shape * shape.transpose());
    }
    // The singular factor only meets the interior hat of a boundary element.
    if (e == 0) local(1, 1) += touching;
    if (e == elements - 1) local(0, 0) += touching;
    local *= kc;
    const int nodes[2] = {e, e + 1};
    for (int p = 0; p < 2; ++p) {
      const int gp = dof(nodes[p]);
      if (gp < 0) continue;
      for (int q = 0; q < 2; ++q) {
        const int gq = dof(nodes[q]);
        if (gq >= 0) exterior_(gp, gq) += local(p, q);
      }
    }
  }

  // Mirror the upper triangle so both parts are exactly symmetric.
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      interaction_(j, i) = interaction_(i, j);
      exterior_(j, i) = exterior_(i, j);
    }
  }
  stiffness_ = interaction_ + exterior_;
  nodal_ = stiffness_ / h;
}

GridFunction IntegralOperator::apply(const GridFunction& u) const {
  require_same_grid(grid_, u.grid(), "apply_integral");
  return GridFunction(grid_, nodal_ * u.values());
}

namespace {

class IntegralShiftedSolver final : public ShiftedSolver {
 public:
  IntegralShiftedSolver(const IntegralOperator& op, const GridFunction& potential) : op_(op) {
    require_same_grid(op.grid(), potential.grid(), "solve_integral_shifted");
    for (std::size_t i = 0; i < potential.size(); ++i) {
      if (!(potential[i] >= 0.0)) {
        throw std::invalid_argument("shifted solve requires a nonnegative potential (node " +
                                    std::to_string(i) + ")");
      }
    }
    system_ = op.nodal_matrix();
    system_.diagonal() += potential.values();
    llt_.compute(system_);
    if (llt_.info() != Eigen::Success) {
      throw LinearSolveError("Cholesky factorization of the shifted integral operator failed", 0.0);
    }
  }

  GridFunction solve(const GridFunction& rhs) const override {
    require_same_grid(op_.grid(), rhs.grid(), "solve_integral_shifted");
    const Eigen::VectorXd& r = rhs.values();
    Eigen::VectorXd v = llt_.solve(r);
    for (int pass = 0; pass < 2; ++pass) {
      const Eigen::VectorXd res = r - system_ * v;
      if (res.norm() <= 1e-14 * r.norm()) break;
      v += llt_.solve(res);
    }
    return GridFunction(op_.grid(), std::move(v));
  }

 private:
  const IntegralOperator& op_;
  Eigen::MatrixXd system_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
};

}  // namespace

std::unique_ptr<ShiftedSolver> IntegralOperator::factorize_shifted(const GridFunction& potential) const {
  return std::make_unique<IntegralShiftedSolver>(*this, potential);
}

std::string IntegralOperator::stiffness_csv() const {
  std::ostringstream out;
  for (Eigen::Index i = 0; i < stiffness_.rows(); ++i) {
    for (Eigen::Index j = 0; j < stiffness_.cols(); ++j) {
      if (j > 0) out << ",";
      out << format_double(stiffness_(i, j));
    }
    out << "\n";
  }
  return out.str();
}

std::string IntegralOperator::stiffness_coo() const {
  std::ostringstream out;
  out << "# i j value (0-based interior node indices)\n";
  for (Eigen::Index i = 0; i < stiffness_.rows(); ++i) {
    for (Eigen::Index j = 0; j < stiffness_.cols(); ++j) {
      if (stiffness_(i, j) != 0.0) out << i << " " << j << " " << format_double(stiffness_(i, j)) << "\n";
    }
  }
  return out.str();
}

}  // namespace fracctl
