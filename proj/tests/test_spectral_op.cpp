#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include <Eigen/Eigenvalues>

#include "fracctl/spectral_op.hpp"

using namespace fracctl;

namespace {

GridFunction random_function(const Grid& grid, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  GridFunction u(grid);
  for (std::size_t i = 0; i < u.size(); ++i) u[i] = normal(rng);
  return u;
}

double rel(const GridFunction& a, const GridFunction& b) { return lp_norm(a - b, 2.0) / lp_norm(b, 2.0); }

// Tridiagonal -(a u')' with a at the cell midpoints, written out here
// independently of the library assembly.
Eigen::MatrixXd reference_matrix(int n, double lo, double hi, const std::function<double(double)>& a) {
  const double h = (hi - lo) / (n + 1);
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    const double x = lo + (i + 1) * h;
    const double left = a(x - 0.5 * h);
    const double right = a(x + 0.5 * h);
    m(i, i) = (left + right) / (h * h);
    if (i > 0) m(i, i - 1) = -left / (h * h);
    if (i + 1 < n) m(i, i + 1) = -right / (h * h);
  }
  return m;
}

}  // namespace

TEST_CASE("closed-form eigenvalues for n = 3") {
  const SpectralOperator op(Grid::interval(0, 1, 3), EllipticCoefficient::constant(1.0), 0.5);
  CHECK(op.eigen_backend() == SpectralBackend::AnalyticSine);
  const auto& lam = op.eigenvalues();
  REQUIRE(lam.size() == 3);
  CHECK(lam[0] == doctest::Approx(9.3726).epsilon(1e-5));
  CHECK(lam[1] == doctest::Approx(32.0).epsilon(1e-14));
  CHECK(lam[2] == doctest::Approx(54.6274).epsilon(1e-5));
  for (int k = 1; k <= 3; ++k) {
    const double expected = 64.0 * std::pow(std::sin(k * std::numbers::pi * 0.125), 2);
    CHECK(lam[k - 1] == doctest::Approx(expected).epsilon(1e-14));
  }
}

TEST_CASE("first eigenvalue approaches pi^2") {
  const SpectralOperator op(Grid::interval(0, 1, 255), EllipticCoefficient::constant(1.0), 0.3);
  const double pi2 = std::numbers::pi * std::numbers::pi;
  CHECK(std::abs(op.eigenvalues()[0] - pi2) / pi2 < 1e-3);
}

TEST_CASE("dense backend agrees with the analytic basis") {
  const Grid g = Grid::interval(-1, 2, 20);
  SpectralOptions dense;
  dense.force_dense = true;
  const SpectralOperator a(g, EllipticCoefficient::constant(2.5), 0.4);
  const SpectralOperator d(g, EllipticCoefficient::constant(2.5), 0.4, dense);
  CHECK(d.eigen_backend() == SpectralBackend::DenseEig);
  for (Eigen::Index k = 0; k < a.eigenvalues().size(); ++k) {
    CHECK(d.eigenvalues()[k] == doctest::Approx(a.eigenvalues()[k]).epsilon(1e-11));
  }
  std::mt19937_64 rng(1);
  const GridFunction u = random_function(g, rng);
  CHECK(rel(d.apply_power(u, 0.4), a.apply_power(u, 0.4)) < 1e-11);
}

TEST_CASE("2D tensor basis agrees with the dense five-point matrix") {
  const Grid g = Grid::rectangle({0, 1}, {0, 2}, 7);
  SpectralOptions dense;
  dense.force_dense = true;
  const SpectralOperator a(g, EllipticCoefficient::constant(1.0), 0.6);
  const SpectralOperator d(g, EllipticCoefficient::constant(1.0), 0.6, dense);
  CHECK(a.eigen_backend() == SpectralBackend::AnalyticSine);
  for (Eigen::Index k = 0; k < a.eigenvalues().size(); ++k) {
    CHECK(d.eigenvalues()[k] == doctest::Approx(a.eigenvalues()[k]).epsilon(1e-10));
  }
  std::mt19937_64 rng(2);
  const GridFunction u = random_function(g, rng);
  CHECK(rel(d.apply_power(u, -0.6), a.apply_power(u, -0.6)) < 1e-10);
  CHECK(rel(a.apply_power(u, 1.0), GridFunction(g, assemble_fd_matrix(g, EllipticCoefficient::constant(1.0)) * u.values())) < 1e-11);
}

TEST_CASE("variable coefficient spectrum matches an independent assembly") {
  auto a = [](double x) { return 1.0 + 0.5 * x * x; };
  const Grid g = Grid::interval(0, 1, 24);
  const SpectralOperator op(g, EllipticCoefficient::variable(a, 1.0), 0.5);
  CHECK(op.eigen_backend() == SpectralBackend::DenseEig);
  const Eigen::MatrixXd m = reference_matrix(24, 0, 1, a);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m);
  for (int k = 0; k < 24; ++k) CHECK(op.eigenvalues()[k] == doctest::Approx(eig.eigenvalues()[k]).epsilon(1e-11));
  std::mt19937_64 rng(4);
  const GridFunction u = random_function(g, rng);
  CHECK(rel(op.apply_power(u, 1.0), GridFunction(g, m * u.values())) < 1e-11);
}

TEST_CASE("eigenvectors are orthonormal and satisfy the eigen identity") {
  for (int n : {16, 64}) {
    for (double s : {0.25, 0.5, 0.75}) {
      const SpectralOperator op(Grid::interval(0, 1, n), EllipticCoefficient::constant(1.0), s);
      double worst = 0.0;
      for (std::size_t k = 0; k < op.mode_count(); ++k) {
        const GridFunction phi = op.eigenvector(k);
        const double lam = std::pow(op.eigenvalues()[static_cast<Eigen::Index>(k)], s);
        worst = std::max(worst, rel(op.apply_power(phi, s), lam * phi));
        CHECK(inner(phi, phi) == doctest::Approx(1.0).epsilon(1e-10));
      }
      CHECK(worst < 1e-10);
      CHECK(std::abs(inner(op.eigenvector(0), op.eigenvector(static_cast<std::size_t>(n) - 1))) < 1e-10);
    }
  }
}

TEST_CASE("power identities") {
  std::mt19937_64 rng(9);
  const Grid g = Grid::interval(0, 1, 40);
  const double s = 0.35;
  const SpectralOperator op(g, EllipticCoefficient::constant(1.0), s);
  const GridFunction u = random_function(g, rng);
  const GridFunction v = random_function(g, rng);
  CHECK(rel(op.apply_power(u, 0.0), u) < 1e-13);
  CHECK(rel(op.apply_power(op.apply_power(u, s / 2), s / 2), op.apply_power(u, s)) < 1e-10);
  CHECK(rel(op.apply_power(op.apply_power(u, s), -s), u) < 1e-10);
  const double uv = inner(op.apply(u), v);
  CHECK(std::abs(uv - inner(u, op.apply(v))) <= 1e-10 * std::abs(uv));
  for (int t = 0; t < 10; ++t) {
    const GridFunction w = random_function(g, rng);
    CHECK(inner(op.apply(w), w) > 0.0);
  }
}

TEST_CASE("fractional Sobolev norms") {
  std::mt19937_64 rng(13);
  const Grid g = Grid::interval(0, 2, 30);
  const double s = 0.6;
  const SpectralOperator op(g, EllipticCoefficient::constant(1.0), s);
  const GridFunction u = random_function(g, rng);
  CHECK(op.hs_norm(u, 0.0) == doctest::Approx(lp_norm(u, 2.0)).epsilon(1e-12));
  CHECK(op.hs_norm(op.eigenvector(0), 2 * s) == doctest::Approx(std::pow(op.eigenvalues()[0], s)).epsilon(1e-12));
  for (int t = 0; t < 20; ++t) {
    const GridFunction w = random_function(g, rng);
    CHECK(op.hs_norm(w, -s) * op.hs_norm(w, s) >= std::pow(lp_norm(w, 2.0), 2) * (1 - 1e-12));
  }
  // ||u||_{H^s}^2 = <A^s u, u>
  CHECK(std::pow(op.hs_norm(u, s), 2) == doctest::Approx(inner(op.apply(u), u)).epsilon(1e-11));
}

TEST_CASE("shifted solves") {
  std::mt19937_64 rng(21);
  const double s = 0.5;
  const Grid g = Grid::interval(0, 1, 64);
  const SpectralOperator op(g, EllipticCoefficient::constant(1.0), s);
  const GridFunction phi1 = op.eigenvector(0);
  const double lam1 = op.eigenvalues()[0];
  CHECK(rel(op.solve_shifted(GridFunction(g), phi1), std::pow(lam1, -s) * phi1) < 1e-12);
  const GridFunction phi5 = op.eigenvector(4);
  const double lam5s = std::pow(op.eigenvalues()[4], s);
  CHECK(rel(op.solve_shifted(GridFunction(g, 3.0), phi5), (1.0 / (lam5s + 3.0)) * phi5) < 1e-12);

  SpectralOptions iterative;
  iterative.direct_solve_limit = 8;
  const SpectralOperator op_cg(g, EllipticCoefficient::constant(1.0), s, iterative);
  for (const SpectralOperator* o : {&op, &op_cg}) {
    for (int t = 0; t < 5; ++t) {
      GridFunction w = random_function(g, rng);
      for (std::size_t i = 0; i < w.size(); ++i) w[i] = 50.0 * std::abs(w[i]);
      const GridFunction r = random_function(g, rng);
      const GridFunction v = o->solve_shifted(w, r);
      const GridFunction res = o->apply(v) + hadamard(w, v) - r;
      CHECK(lp_norm(res, 2.0) <= 1e-11 * lp_norm(r, 2.0));
    }
  }
  GridFunction negative(g, 1.0);
  negative[3] = -1e-3;
  CHECK_THROWS_AS(op.factorize_shifted(negative), std::invalid_argument);
}

TEST_CASE("construction errors") {
  const Grid g = Grid::interval(0, 1, 8);
  CHECK_THROWS_AS(SpectralOperator(g, EllipticCoefficient::constant(1.0), 0.0), std::invalid_argument);
  CHECK_THROWS_AS(SpectralOperator(g, EllipticCoefficient::constant(1.0), 1.0), std::invalid_argument);
  CHECK_THROWS_AS(SpectralOperator(g, EllipticCoefficient::variable([](double x) { return x - 0.5; }, 0.1), 0.5),
                  std::invalid_argument);
  const Grid r = Grid::rectangle({0, 1}, {0, 1}, 4);
  CHECK_THROWS_AS(SpectralOperator(r, EllipticCoefficient::variable([](double) { return 1.0; }, 1.0), 0.5),
                  std::invalid_argument);
}

TEST_CASE("spectrum export") {
  const SpectralOperator op(Grid::interval(0, 1, 3), EllipticCoefficient::constant(1.0), 0.5);
  const std::string csv = op.spectrum_csv();
  CHECK(csv.find("k,lambda\n") != std::string::npos);
  const auto pos = csv.find("\n2,");
  REQUIRE(pos != std::string::npos);
  CHECK(std::stod(csv.substr(pos + 3)) == op.eigenvalues()[1]);
}
