#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "fracctl/grid.hpp"

using namespace fracctl;

namespace {

GridFunction random_function(const Grid& grid, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> normal;
  GridFunction u(grid);
  for (std::size_t i = 0; i < u.size(); ++i) u[i] = scale * normal(rng);
  return u;
}

}  // namespace

TEST_CASE("grid spacing and node layout") {
  const Grid g = Grid::interval(0.0, 1.0, 9);
  CHECK(g.size() == 9);
  CHECK(g.spacing(0) == doctest::Approx(0.1));
  CHECK(g.spacing(0) * 10 == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(g.coordinate(0, 0) == doctest::Approx(0.1));
  CHECK(g.coordinate(8, 0) == doctest::Approx(0.9));

  const Grid r = Grid::rectangle({0.0, 2.0}, {-1.0, 1.0}, 3);
  CHECK(r.dimension() == 2);
  CHECK(r.size() == 9);
  CHECK(r.cell_volume() == doctest::Approx(0.25));
  // x runs fastest
  CHECK(r.coordinate(1, 0) == doctest::Approx(1.0));
  CHECK(r.coordinate(1, 1) == doctest::Approx(-0.5));
  CHECK(r.coordinate(3, 0) == doctest::Approx(0.5));
  CHECK(r.coordinate(3, 1) == doctest::Approx(0.0));
}

TEST_CASE("invalid domains and grids are rejected") {
  CHECK_THROWS_AS(Domain::interval(1.0, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(Grid::interval(0.0, 1.0, 0), std::invalid_argument);
  CHECK_THROWS_AS(GridFunction::from_values(Grid::interval(0, 1, 3), {1.0, 2.0}), std::invalid_argument);
  CHECK_THROWS_AS(GridFunction::from_values(Grid::interval(0, 1, 2), {1.0, NAN}), std::invalid_argument);
}

TEST_CASE("lp_norm examples") {
  const Grid g = Grid::interval(0.0, 1.0, 9);
  const GridFunction one(g, 1.0);
  CHECK(lp_norm(one, 2.0) == doctest::Approx(std::sqrt(0.9)).epsilon(1e-15));
  CHECK(std::sqrt(0.9) == doctest::Approx(0.9486833).epsilon(1e-7));
  for (double p : {1.0, 2.0, 3.5, double(INFINITY)}) CHECK(lp_norm(GridFunction(g), p) == 0.0);
  CHECK_THROWS_AS(lp_norm(one, 0.5), std::invalid_argument);

  const Grid fine = Grid::interval(0.0, 1.0, 99);
  const GridFunction s = GridFunction::sample(fine, [](double x, double) { return std::sin(std::numbers::pi * x); });
  CHECK(std::abs(lp_norm(s, 2.0) - 1.0 / std::sqrt(2.0)) < 1e-3);
  CHECK(lp_norm(s, INFINITY) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("inner product") {
  std::mt19937_64 rng(7);
  const Grid g = Grid::rectangle({0, 1}, {0, 2}, 5);
  const GridFunction u = random_function(g, rng);
  const GridFunction v = random_function(g, rng);
  CHECK(inner(u, u) == doctest::Approx(std::pow(lp_norm(u, 2.0), 2)).epsilon(1e-13));
  CHECK(inner(u, GridFunction(g)) == 0.0);
  CHECK(inner(u, v) == doctest::Approx(inner(v, u)).epsilon(1e-15));
  CHECK(inner(2.0 * u + v, v) == doctest::Approx(2.0 * inner(u, v) + inner(v, v)).epsilon(1e-12));
  CHECK_THROWS_AS(inner(u, GridFunction(Grid::rectangle({0, 1}, {0, 2}, 4))), std::invalid_argument);

  const Grid line = Grid::interval(0.0, 1.0, 199);
  const auto s1 = GridFunction::sample(line, [](double x, double) { return std::sin(std::numbers::pi * x); });
  const auto s2 = GridFunction::sample(line, [](double x, double) { return std::sin(2 * std::numbers::pi * x); });
  CHECK(std::abs(inner(s1, s2)) < 1e-12);
}

TEST_CASE("norm relations on sampled functions") {
  std::mt19937_64 rng(11);
  const Grid g = Grid::interval(0.0, 1.0, 40);
  // |Omega| = 1: ||u||_p is nondecreasing in p for constants and in general
  // ||u||_p <= ||u||_inf, while ||u||_inf <= h^{-1/p} ||u||_p.
  const GridFunction c(g, 3.0);
  CHECK(lp_norm(c, 1.0) <= lp_norm(c, 2.0) + 1e-14);
  CHECK(lp_norm(c, 2.0) <= lp_norm(c, 4.0) + 1e-14);
  for (int trial = 0; trial < 20; ++trial) {
    const GridFunction u = random_function(g, rng);
    for (double p : {1.0, 2.0, 5.0}) {
      CHECK(lp_norm(u, p) <= lp_norm(u, INFINITY) + 1e-14);
      CHECK(lp_norm(u, INFINITY) <= std::pow(g.spacing(0), -1.0 / p) * lp_norm(u, p) * (1 + 1e-14));
    }
  }
}

TEST_CASE("box projection") {
  const Grid g = Grid::interval(0.0, 1.0, 3);
  const Box box = Box::constant(g, 0.0, 1.0);
  const GridFunction interior = GridFunction::from_values(g, {0.1, 0.5, 0.9});
  CHECK(project_box(interior, box).values() == interior.values());
  const GridFunction low(g, -5.0);
  CHECK(project_box(low, box).values() == GridFunction(g).values());
  const GridFunction mixed = GridFunction::from_values(g, {-2.0, 0.5, 7.0});
  const GridFunction p = project_box(mixed, box);
  CHECK(p[0] == 0.0);
  CHECK(p[1] == 0.5);
  CHECK(p[2] == 1.0);
  CHECK(box.contains(p));
  CHECK_FALSE(box.contains(mixed));
}

TEST_CASE("box projection is idempotent and nonexpansive") {
  std::mt19937_64 rng(3);
  const Grid g = Grid::interval(-1.0, 2.0, 30);
  const Box box(GridFunction::sample(g, [](double x, double) { return -0.5 - x * x; }),
                GridFunction::sample(g, [](double x, double) { return 0.3 + x; }));
  for (int trial = 0; trial < 50; ++trial) {
    const GridFunction w1 = random_function(g, rng, 2.0);
    const GridFunction w2 = random_function(g, rng, 2.0);
    const GridFunction p1 = project_box(w1, box);
    CHECK(project_box(p1, box).values() == p1.values());
    for (double p : {1.0, 2.0, 3.0, double(INFINITY)}) {
      CHECK(lp_norm(p1 - project_box(w2, box), p) <= lp_norm(w1 - w2, p) + 1e-14);
    }
  }
}

TEST_CASE("infeasible box names the node") {
  const Grid g = Grid::interval(0.0, 1.0, 4);
  GridFunction lower(g, 0.0);
  GridFunction upper(g, 1.0);
  lower[2] = 2.0;
  try {
    Box box(lower, upper);
    FAIL("expected an exception");
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("node 2") != std::string::npos);
  }
}

TEST_CASE("JSON envelope round trip is bit exact") {
  std::mt19937_64 rng(5);
  const Grid g = Grid::rectangle({0, 1}, {0, 3}, 4);
  const GridFunction u = random_function(g, rng);
  const std::string text = to_json(u).dump();
  const GridFunction back = grid_function_from_json(nlohmann::json::parse(text));
  CHECK(back.grid() == g);
  CHECK(back.values() == u.values());
  const auto j = nlohmann::json::parse(text);
  CHECK(j.at("domain").at("kind") == "rectangle");
  CHECK(j.at("n") == 4);
}

TEST_CASE("CSV output") {
  const Grid g = Grid::interval(0.0, 1.0, 3);
  const GridFunction u = GridFunction::from_values(g, {0.1, 1.0 / 3.0, -2.0});
  const std::string csv = to_csv(u, "z");
  CHECK(csv.rfind("# columns:", 0) == 0);
  CHECK(csv.find("x,z\n") != std::string::npos);
  CHECK(csv.find("0.33333333333333331") != std::string::npos);
  CHECK(std::stod(format_double(1.0 / 3.0)) == 1.0 / 3.0);
}

TEST_CASE("arithmetic requires matching grids") {
  const GridFunction a(Grid::interval(0, 1, 3), 1.0);
  const GridFunction b(Grid::interval(0, 2, 3), 1.0);
  CHECK_THROWS_AS(a + b, std::invalid_argument);
  CHECK_THROWS_AS(hadamard(a, b), std::invalid_argument);
  CHECK((a + a)[1] == 2.0);
  CHECK((-a)[0] == -1.0);
}
