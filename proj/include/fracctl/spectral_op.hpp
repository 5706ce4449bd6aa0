#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>

#include <Eigen/Core>

#include "fracctl/operator.hpp"

namespace fracctl {

/// Scalar diffusion coefficient a(x) * identity of L u = -div(a grad u).
/// 1D accepts a variable a(x); 2D only a constant.
struct EllipticCoefficient {
  std::function<double(double)> a;
  bool is_constant = true;
  double constant_value = 1.0;
  /// Claimed ellipticity floor gamma > 0.
  double floor = 1.0;

  static EllipticCoefficient constant(double value);
  static EllipticCoefficient variable(std::function<double(double)> a, double floor);

  double operator()(double x) const { return is_constant ? constant_value : a(x); }
};

enum class SpectralBackend { AnalyticSine, DenseEig };

struct SpectralOptions {
  /// Forces the dense eigensolver even when closed-form sine modes apply.
  bool force_dense = false;
  int max_nodes_1d = 1024;
  int max_nodes_per_axis_2d = 64;
  /// Up to this many unknowns, shifted solves factorize A^s + diag(w)
  /// densely; above it they run preconditioned CG.
  std::size_t direct_solve_limit = 1024;
};

/// Matrix-transfer fractional power of the symmetric finite-difference
/// Dirichlet operator: A^sigma = V diag(lambda^sigma) V^T, with V
/// orthonormal for the discrete L^2 pairing.
class SpectralOperator final : public FractionalOperator {
 public:
  SpectralOperator(const Grid& grid, const EllipticCoefficient& coeff, double s,
                   const SpectralOptions& options = {});

  const Grid& grid() const override { return grid_; }
  double order() const override { return s_; }
  std::string backend() const override { return "spectral"; }
  SpectralBackend eigen_backend() const { return eigen_backend_; }

  std::size_t mode_count() const { return static_cast<std::size_t>(eigenvalues_.size()); }
  /// Ascending eigenvalues lambda_1 <= ... <= lambda_M.
  const Eigen::VectorXd& eigenvalues() const { return eigenvalues_; }
  /// Eigenvector k (0-based), normalized so inner(phi_k, phi_k) = 1.
  GridFunction eigenvector(std::size_t k) const;

  /// Coefficients <u, phi_k> for all k.
  Eigen::VectorXd coefficients(const GridFunction& u) const;

  /// sum_k lambda_k^sigma <u, phi_k> phi_k.
  GridFunction apply_power(const GridFunction& u, double sigma) const;
  GridFunction apply(const GridFunction& u) const override { return apply_power(u, s_); }

  /// (sum_k lambda_k^theta <u, phi_k>^2)^(1/2); theta may be negative.
  double hs_norm(const GridFunction& u, double theta) const;

  std::unique_ptr<ShiftedSolver> factorize_shifted(const GridFunction& potential) const override;

  /// "k,lambda" rows, k starting at 1.
  std::string spectrum_csv() const;

  /// Euclidean-orthonormal eigenvector matrix (columns), for diagnostics.
  const Eigen::MatrixXd& basis() const { return basis_; }

 private:
  friend class SpectralShiftedSolver;

  Eigen::VectorXd scaled_transform(const Eigen::VectorXd& x, double sigma) const;

  Grid grid_;
  double s_;
  SpectralOptions options_;
  SpectralBackend eigen_backend_;
  Eigen::VectorXd eigenvalues_;
  Eigen::MatrixXd basis_;
  /// Dense A^s, kept only when direct shifted solves are enabled.
  std::optional<Eigen::MatrixXd> power_matrix_;
};

/// Closed-form finite-difference Dirichlet eigenvalues for -u'' on an
/// interval with n interior nodes: (4/h^2) sin^2(k pi / (2(n+1))).
double fd_sine_eigenvalue(int k, int n, double h);

/// Symmetric 3-point (1D, a at cell midpoints) or 5-point (2D, constant a)
/// finite-difference matrix including the 1/h^2 scaling.
Eigen::MatrixXd assemble_fd_matrix(const Grid& grid, const EllipticCoefficient& coeff);

}  // namespace fracctl
