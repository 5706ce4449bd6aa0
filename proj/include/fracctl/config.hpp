#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "fracctl/grid.hpp"
#include "fracctl/nonlinearity.hpp"
#include "fracctl/operator.hpp"

namespace fracctl {

/// Invalid configuration; the message starts with the offending key path.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& path, const std::string& message);
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

/// Nodal field given as a constant, a sine product, explicit values or a JSON
/// file holding a GridFunction envelope.
struct FieldSpec {
  enum class Kind { Constant, Sine, Values, File };
  Kind kind = Kind::Constant;
  double constant = 0.0;
  double amplitude = 1.0;
  std::vector<int> modes{1};
  std::vector<double> values;
  std::filesystem::path file;

  static FieldSpec uniform(double value) {
    FieldSpec f;
    f.constant = value;
    return f;
  }

  GridFunction realize(const Grid& grid) const;
};

struct OperatorSpec {
  std::string backend = "spectral";  // spectral | integral
  double s = 0.5;
  Domain domain = Domain::interval(0.0, 1.0);
  int n = 32;
  /// a(x) = sum_k c_k x^k; a single entry is a constant coefficient.
  std::vector<double> coefficient{1.0};
  /// Ellipticity floor checked for a polynomial coefficient.
  double coefficient_floor = 1e-6;
  int gauss_points = 8;
  bool force_dense = false;

  Grid grid() const { return Grid(domain, n); }
  Grid grid(int n_override) const { return Grid(domain, n_override); }
  OperatorPtr build() const;
  OperatorPtr build(const Grid& grid) const;
};

struct NonlinearitySpec {
  std::string kind = "zero";  // zero | power_law
  double q = 3.0;
  double b = 1.0;

  Nonlinearity build(const Grid& grid) const;
};

struct ProblemSpec {
  OperatorSpec op;
  NonlinearitySpec nl;
  double mu = 1e-2;
  FieldSpec target;
  FieldSpec lower = FieldSpec::uniform(-1e6);
  FieldSpec upper = FieldSpec::uniform(1e6);
};

struct SolverSpec {
  std::string method = "projected-gradient";  // or semismooth-newton
  double tol = 1e-8;
  int max_iter = 500;
  double state_tol = 1e-12;
  int max_newton = 50;
};

struct ProbeSpec {
  std::vector<double> tau{0.0, 1e-3, 1e-2};
  double ssc_tau = 0.0;
  int ssc_iters = 0;  // 0: cone dimension
  bool second_order = false;
  double rho = 0.1;
  std::optional<double> beta;  // default delta_est / 4
  std::size_t growth_samples = 200;
  std::optional<double> growth_c;  // default: the nonlinearity's constant
  bool expect_growth_pass = true;
  std::size_t condition_samples = 10000;
  double condition_range = 10.0;
  std::vector<double> gradient_steps{1e-3, 1e-4};
  std::vector<double> hessian_steps{1e-2, 1e-3};
  std::size_t vi_directions = 100;
};

struct StudySpec {
  std::string oracle = "getoor";  // getoor | manufactured
  std::vector<int> n{32, 64, 128, 256};
};

inline const std::vector<std::string>& experiment_names() {
  static const std::vector<std::string> names{
      "solve-state",    "solve-control",          "check-gradient",
      "check-kkt",      "check-ssc",              "check-growth-quadratic",
      "check-growth-condition", "convergence-study", "operator-oracle"};
  return names;
}

struct RunConfig {
  std::string experiment = "solve-control";
  std::uint64_t seed = 1;
  std::filesystem::path output_dir = "fracctl-out";
  ProblemSpec problem;
  /// Control for solve-state and the derivative checks; initial guess for
  /// the optimizers.
  FieldSpec control;
  SolverSpec solver;
  ProbeSpec probes;
  StudySpec study;
};

/// Validates the whole document (unknown keys rejected) before returning.
/// Relative file paths resolve against `base_dir`.
RunConfig parse_config(const nlohmann::json& doc, const std::filesystem::path& base_dir = {});
RunConfig load_config(const std::filesystem::path& path);

}  // namespace fracctl
