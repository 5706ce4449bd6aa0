#include "fracctl/spectral_op.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

namespace fracctl {

EllipticCoefficient EllipticCoefficient::constant(double value) {
  EllipticCoefficient c;
  c.is_constant = true;
  c.constant_value = value;
  c.floor = value;
  return c;
}

EllipticCoefficient EllipticCoefficient::variable(std::function<double(double)> a, double floor) {
  EllipticCoefficient c;
  c.a = std::move(a);
  c.is_constant = false;
  c.floor = floor;
  return c;
}

double fd_sine_eigenvalue(int k, int n, double h) {
  const double t = std::sin(static_cast<double>(k) * std::numbers::pi / (2.0 * (n + 1)));
  return 4.0 / (h * h) * t * t;
}

namespace {

// Euclidean-orthonormal sine modes sqrt(2/(n+1)) sin(pi j k / (n+1)).
Eigen::MatrixXd sine_modes(int n) {
  const Eigen::Index m = n;
  Eigen::MatrixXd q(m, m);
  const double scale = std::sqrt(2.0 / (n + 1));
  const long period = 2L * (n + 1);
  for (Eigen::Index j = 0; j < m; ++j) {
    for (Eigen::Index k = 0; k < m; ++k) {
      const long r = ((j + 1) * (k + 1)) % period;
      q(j, k) = scale * std::sin(std::numbers::pi * static_cast<double>(r) / (n + 1));
    }
  }
  return q;
}

void check_ellipticity(const Grid& grid, const EllipticCoefficient& coeff) {
  if (!(coeff.floor > 0.0)) throw std::invalid_argument("ellipticity floor must be positive");
  if (coeff.is_constant) {
    if (!(coeff.constant_value >= coeff.floor)) {
      throw std::invalid_argument("constant coefficient below its ellipticity floor");
    }
    return;
  }
  if (grid.dimension() != 1) {
    throw std::invalid_argument("variable diffusion coefficients are supported in 1D only");
  }
  const int n = grid.nodes_per_axis();
  const double h = grid.spacing(0);
  const double a0 = grid.domain().axes[0].lo;
  // Nodes and the cell midpoints used by the stencil.
  for (int i = 0; i <= 2 * (n + 1); ++i) {
    const double x = a0 + 0.5 * h * i;
    const double v = coeff.a(x);
    if (!std::isfinite(v) || v < coeff.floor) {
      std::ostringstream msg;
      msg << "coefficient a(" << x << ") = " << v << " violates the ellipticity floor " << coeff.floor;
      throw std::invalid_argument(msg.str());
    }
  }
}

// Flip each column so its largest-magnitude entry is positive.
void fix_signs(Eigen::MatrixXd& q) {
  for (Eigen::Index k = 0; k < q.cols(); ++k) {
    Eigen::Index imax = 0;
    q.col(k).cwiseAbs().maxCoeff(&imax);
    if (q(imax, k) < 0.0) q.col(k) *= -1.0;
  }
}

}  // namespace

Eigen::MatrixXd assemble_fd_matrix(const Grid& grid, const EllipticCoefficient& coeff) {
  const int n = grid.nodes_per_axis();
  const auto m = static_cast<Eigen::Index>(grid.size());
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(m, m);
  if (grid.dimension() == 1) {
    const double h = grid.spacing(0);
    const double x0 = grid.domain().axes[0].lo;
    for (int i = 0; i < n; ++i) {
      const double xi = x0 + (i + 1) * h;
      const double west = coeff(xi - 0.5 * h);
      const double east = coeff(xi + 0.5 * h);
      a(i, i) = (west + east) / (h * h);
      if (i > 0) a(i, i - 1) = -west / (h * h);
      if (i + 1 < n) a(i, i + 1) = -east / (h * h);
    }
    return a;
  }
  if (!coeff.is_constant) throw std::invalid_argument("2D operator requires a constant coefficient");
  const double g = coeff.constant_value;
  const double hx2 = grid.spacing(0) * grid.spacing(0);
  const double hy2 = grid.spacing(1) * grid.spacing(1);
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < n; ++i) {
      const Eigen::Index p = i + static_cast<Eigen::Index>(n) * j;
      a(p, p) = g * (2.0 / hx2 + 2.0 / hy2);
      if (i > 0) a(p, p - 1) = -g / hx2;
      if (i + 1 < n) a(p, p + 1) = -g / hx2;
      if (j > 0) a(p, p - n) = -g / hy2;
      if (j + 1 < n) a(p, p + n) = -g / hy2;
    }
  }
  return a;
}

SpectralOperator::SpectralOperator(const Grid& grid, const EllipticCoefficient& coeff, double s,
                                   const SpectralOptions& options)
    : grid_(grid), s_(s), options_(options) {
  if (!(s > 0.0 && s < 1.0)) throw std::invalid_argument("fractional order s must lie in (0,1)");
  check_ellipticity(grid, coeff);
  const int n = grid.nodes_per_axis();
  if (grid.dimension() == 1 && n > options.max_nodes_1d) {
    throw std::invalid_argument("grid exceeds the dense eigendecomposition limit (1D)");
  }
  if (grid.dimension() == 2 && n > options.max_nodes_per_axis_2d) {
    throw std::invalid_argument("grid exceeds the dense eigendecomposition limit (2D)");
  }

  if (coeff.is_constant && !options.force_dense) {
    eigen_backend_ = SpectralBackend::AnalyticSine;
    const double g = coeff.constant_value;
    const Eigen::MatrixXd qx = sine_modes(n);
    if (grid.dimension() == 1) {
      eigenvalues_.resize(n);
      for (int k = 0; k < n; ++k) eigenvalues_[k] = g * fd_sine_eigenvalue(k + 1, n, grid.spacing(0));
      basis_ = qx;
    } else {
      const auto m = static_cast<Eigen::Index>(grid.size());
      Eigen::VectorXd lam(m);
      for (int l = 0; l < n; ++l) {
        for (int k = 0; k < n; ++k) {
          lam[k + static_cast<Eigen::Index>(n) * l] =
              g * (fd_sine_eigenvalue(k + 1, n, grid.spacing(0)) +
                   fd_sine_eigenvalue(l + 1, n, grid.spacing(1)));
        }
      }
      std::vector<Eigen::Index> order(static_cast<std::size_t>(m));
      std::iota(order.begin(), order.end(), Eigen::Index{0});
      std::stable_sort(order.begin(), order.end(),
                       [&](Eigen::Index p, Eigen::Index q) { return lam[p] < lam[q]; });
      eigenvalues_.resize(m);
      basis_.resize(m, m);
      for (Eigen::Index c = 0; c < m; ++c) {
        const Eigen::Index mode = order[static_cast<std::size_t>(c)];
        const Eigen::Index k = mode % n;
        const Eigen::Index l = mode / n;
        eigenvalues_[c] = lam[mode];
        for (int j = 0; j < n; ++j) {
          basis_.col(c).segment(static_cast<Eigen::Index>(n) * j, n) = qx(j, l) * qx.col(k);
        }
      }
    }
  } else {
    eigen_backend_ = SpectralBackend::DenseEig;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(assemble_fd_matrix(grid, coeff));
    if (eig.info() != Eigen::Success) throw std::runtime_error("symmetric eigensolver failed");
    eigenvalues_ = eig.eigenvalues();
    basis_ = eig.eigenvectors();
    fix_signs(basis_);
  }
  if (!(eigenvalues_[0] > 0.0)) throw std::runtime_error("discrete operator is not positive definite");

  if (grid.size() <= options_.direct_solve_limit) {
    power_matrix_ = basis_ * eigenvalues_.array().pow(s_).matrix().asDiagonal() * basis_.transpose();
  }
}

GridFunction SpectralOperator::eigenvector(std::size_t k) const {
  const double scale = 1.0 / std::sqrt(grid_.cell_volume());
  return GridFunction(grid_, scale * basis_.col(static_cast<Eigen::Index>(k)));
}

Eigen::VectorXd SpectralOperator::coefficients(const GridFunction& u) const {
  require_same_grid(grid_, u.grid(), "SpectralOperator::coefficients");
  return std::sqrt(grid_.cell_volume()) * (basis_.transpose() * u.values());
}

Eigen::VectorXd SpectralOperator::scaled_transform(const Eigen::VectorXd& x, double sigma) const {
  Eigen::VectorXd c = basis_.transpose() * x;
  c.array() *= eigenvalues_.array().pow(sigma);
  return basis_ * c;
}

GridFunction SpectralOperator::apply_power(const GridFunction& u, double sigma) const {
  require_same_grid(grid_, u.grid(), "apply_power");
  if (sigma == 0.0) return u;
  return GridFunction(grid_, scaled_transform(u.values(), sigma));
}

double SpectralOperator::hs_norm(const GridFunction& u, double theta) const {
  const Eigen::VectorXd c = coefficients(u);
  return std::sqrt((eigenvalues_.array().pow(theta) * c.array().square()).sum());
}

std::string SpectralOperator::spectrum_csv() const {
  std::ostringstream out;
  out << "# columns: k (1-based mode index), lambda_k (ascending)\n";
  out << "k,lambda\n";
  for (Eigen::Index k = 0; k < eigenvalues_.size(); ++k) {
    out << (k + 1) << "," << format_double(eigenvalues_[k]) << "\n";
  }
  return out.str();
}

// Shifted solves ----------------------------------------------------------

class SpectralShiftedSolver final : public ShiftedSolver {
 public:
  SpectralShiftedSolver(const SpectralOperator& op, const GridFunction& potential)
      : op_(op), w_(potential.values()) {
    require_same_grid(op.grid(), potential.grid(), "solve_shifted");
    for (Eigen::Index i = 0; i < w_.size(); ++i) {
      if (!(w_[i] >= 0.0)) {
        throw std::invalid_argument("shifted solve requires a nonnegative potential (node " +
                                    std::to_string(i) + ")");
      }
    }
    const double w0 = w_.size() > 0 ? w_[0] : 0.0;
    constant_shift_ = (w_.array() == w0).all();
    if (constant_shift_) {
      diag_inverse_ = (op.eigenvalues_.array().pow(op.s_) + w0).inverse().matrix();
    } else if (op.power_matrix_) {
      Eigen::MatrixXd m = *op.power_matrix_;
      m.diagonal() += w_;
      llt_.compute(m);
      if (llt_.info() != Eigen::Success) {
        throw LinearSolveError("Cholesky factorization of the shifted operator failed", 0.0);
      }
    } else {
      precond_ = op.eigenvalues_.array().pow(-op.s_).matrix();
    }
  }

  GridFunction solve(const GridFunction& rhs) const override {
    require_same_grid(op_.grid_, rhs.grid(), "solve_shifted");
    const Eigen::VectorXd& r = rhs.values();
    if (constant_shift_) {
      Eigen::VectorXd c = op_.basis_.transpose() * r;
      c.array() *= diag_inverse_.array();
      return GridFunction(op_.grid_, op_.basis_ * c);
    }
    if (op_.power_matrix_) return GridFunction(op_.grid_, direct(r));
    return GridFunction(op_.grid_, pcg(r));
  }

 private:
  Eigen::VectorXd apply_system(const Eigen::VectorXd& v) const {
    if (op_.power_matrix_) return *op_.power_matrix_ * v + w_.cwiseProduct(v);
    return op_.scaled_transform(v, op_.s_) + w_.cwiseProduct(v);
  }

  Eigen::VectorXd direct(const Eigen::VectorXd& r) const {
    Eigen::VectorXd v = llt_.solve(r);
    // Two steps of iterative refinement keep the residual near roundoff.
    for (int pass = 0; pass < 2; ++pass) {
      const Eigen::VectorXd res = r - apply_system(v);
      if (res.norm() <= 1e-14 * r.norm()) break;
      v += llt_.solve(res);
    }
    return v;
  }

  // CG on A^s + W preconditioned by the exact A^{-s}.
  Eigen::VectorXd pcg(const Eigen::VectorXd& r) const {
    const double rnorm = r.norm();
    Eigen::VectorXd x = Eigen::VectorXd::Zero(r.size());
    if (rnorm == 0.0) return x;
    auto precondition = [&](const Eigen::VectorXd& v) {
      Eigen::VectorXd c = op_.basis_.transpose() * v;
      c.array() *= precond_.array();
      return Eigen::VectorXd(op_.basis_ * c);
    };
    Eigen::VectorXd res = r;
    Eigen::VectorXd z = precondition(res);
    Eigen::VectorXd p = z;
    double rz = res.dot(z);
    const int max_iter = 1000;
    for (int it = 0; it < max_iter; ++it) {
      const Eigen::VectorXd ap = apply_system(p);
      const double alpha = rz / p.dot(ap);
      x += alpha * p;
      res -= alpha * ap;
      if (res.norm() <= 1e-13 * rnorm) {
        const double true_res = (r - apply_system(x)).norm();
        if (true_res <= 1e-12 * rnorm) return x;
        res = r - apply_system(x);
      }
      z = precondition(res);
      const double rz_next = res.dot(z);
      p = z + (rz_next / rz) * p;
      rz = rz_next;
    }
    const double final_res = (r - apply_system(x)).norm() / rnorm;
    throw LinearSolveError("preconditioned CG did not converge", final_res);
  }

  const SpectralOperator& op_;
  Eigen::VectorXd w_;
  bool constant_shift_ = false;
  Eigen::VectorXd diag_inverse_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
  Eigen::VectorXd precond_;
};

std::unique_ptr<ShiftedSolver> SpectralOperator::factorize_shifted(const GridFunction& potential) const {
  return std::make_unique<SpectralShiftedSolver>(*this, potential);
}

}  // namespace fracctl
