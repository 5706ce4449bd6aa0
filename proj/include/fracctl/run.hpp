#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "fracctl/config.hpp"

namespace fracctl {

enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,
  kExitNotConverged = 2,
  kExitInvalidConfig = 3,
  kExitCheckFailed = 4,
};

/// Command-line overrides applied on top of the config file.
struct RunOptions {
  std::optional<std::string> experiment;
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> out;
  /// Failed checks turn into exit code 4.
  bool assert_checks = false;
};

struct Check {
  std::string name;
  bool pass = false;
};

struct RunResult {
  int exit_code = kExitOk;
  std::string message;
  nlohmann::ordered_json report;
  std::vector<Check> checks;
  std::filesystem::path output_dir;
};

/// Runs one experiment and writes its artifacts; never throws for solver or
/// configuration problems (they become exit codes).
RunResult run(RunConfig config, const RunOptions& options = {});

/// Loads the config file, then runs.
RunResult run_file(const std::filesystem::path& config_path, const RunOptions& options = {});

/// 2^{2s} Gamma(1/2 + s) Gamma(1 + s) / Gamma(1/2): (-Delta)^s of
/// ((x-a)(b-x))_+^s on (a,b).
double getoor_constant(double s);

struct ConvergenceRow {
  int n = 0;
  double h = 0.0;
  double error_linf = 0.0;
  double error_l2 = 0.0;
  /// Observed order against the previous row; absent for the first.
  std::optional<double> order;
};

/// Getoor oracle for the integral backend: relative max error of the
/// discrete operator on ((x-a)(b-x))^s over the central half of the interval.
std::vector<ConvergenceRow> getoor_study(const OperatorSpec& op, const std::vector<int>& sizes);

/// Manufactured continuum solution sin-product for the spectral backend with
/// a constant coefficient; errors are ||u_h - u*|| at the nodes.
std::vector<ConvergenceRow> manufactured_study(const OperatorSpec& op, const NonlinearitySpec& nl,
                                               const std::vector<int>& sizes, double state_tol);

std::string convergence_csv(const std::vector<ConvergenceRow>& rows);

}  // namespace fracctl
