#pragma once

#include <memory>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "fracctl/operator.hpp"

namespace fracctl {

struct IntegralOptions {
  /// Gauss-Legendre points per direction for regular element pairs and per
  /// Duffy subcell for touching pairs.
  int gauss_points = 8;
};

/// Dirichlet integral fractional Laplacian on an interval, discretized with
/// P1 hat functions on the uniform grid.
///
/// The energy form splits into the interaction part
///   (C/2) int_O int_O (u(x)-u(y))(v(x)-v(y)) / |x-y|^{1+2s}
/// and the exterior part int_O kappa(x) u v with the closed-form weight
///   kappa(x) = C/(2s) [(x-a)^{-2s} + (b-x)^{-2s}].
/// Both stiffness matrices are stored; the nodal operator is the energy
/// stiffness divided by the lumped mass h.
class IntegralOperator final : public FractionalOperator {
 public:
  IntegralOperator(const Grid& grid, double s, const IntegralOptions& options = {});

  const Grid& grid() const override { return grid_; }
  double order() const override { return s_; }
  std::string backend() const override { return "integral"; }

  /// Normalization constant C_{1,s}.
  double normalization() const { return c_; }
  /// Exterior weight kappa evaluated at the interior nodes.
  const GridFunction& exterior_weight() const { return kappa_; }

  const Eigen::MatrixXd& interaction_stiffness() const { return interaction_; }
  const Eigen::MatrixXd& exterior_stiffness() const { return exterior_; }
  /// interaction + exterior, entrywise.
  const Eigen::MatrixXd& stiffness() const { return stiffness_; }
  /// stiffness / h, the matrix that acts on nodal values.
  const Eigen::MatrixXd& nodal_matrix() const { return nodal_; }

  GridFunction apply(const GridFunction& u) const override;
  GridFunction apply_integral(const GridFunction& u) const { return apply(u); }

  std::unique_ptr<ShiftedSolver> factorize_shifted(const GridFunction& potential) const override;

  /// Dense CSV of the stiffness matrix, one row per line.
  std::string stiffness_csv() const;
  /// Coordinate format "i j value" (0-based), nonzero entries only.
  std::string stiffness_coo() const;

 private:
  Grid grid_;
  double s_;
  double c_;
  GridFunction kappa_;
  Eigen::MatrixXd interaction_;
  Eigen::MatrixXd exterior_;
  Eigen::MatrixXd stiffness_;
  Eigen::MatrixXd nodal_;
};

/// C_{N,s} = s 2^{2s} Gamma((N+2s)/2) / (pi^{N/2} Gamma(1-s)).
double fractional_laplacian_constant(int dimension, double s);

/// Closed-form C_{1,s} int_{R \ (a,b)} |x-y|^{-1-2s} dy.
double exterior_weight(double x, double a, double b, double s);

/// Gauss-Legendre rule on [0,1].
struct GaussRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};
GaussRule gauss_legendre_unit(int points);

}  // namespace fracctl
