// Command-line front end: fracctl [experiment] --config run.json [--seed N] [--assert] [--out DIR]

#include <iostream>

#include <CLI11.hpp>

#include "fracctl/run.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Optimal control of semilinear fractional elliptic problems"};
  app.set_version_flag("--version", "fracctl 0.1.0");

  std::string experiment;
  std::string config_path;
  std::uint64_t seed = 0;
  std::string out_dir;
  bool assert_checks = false;

  std::string names;
  for (const auto& n : fracctl::experiment_names()) names += (names.empty() ? "" : ", ") + n;
  app.add_option("experiment", experiment, "Experiment to run, overriding the config: " + names);
  app.add_option("-c,--config", config_path, "JSON run configuration")->required()->check(CLI::ExistingFile);
  auto* seed_opt = app.add_option("--seed", seed, "Seed for all sampling");
  app.add_flag("--assert", assert_checks, "Exit with status 4 when a check fails");
  app.add_option("-o,--out", out_dir, "Output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : fracctl::kExitInvalidConfig;
  }

  fracctl::RunOptions options;
  if (!experiment.empty()) options.experiment = experiment;
  if (seed_opt->count() > 0) options.seed = seed;
  if (!out_dir.empty()) options.out = out_dir;
  options.assert_checks = assert_checks;

  const fracctl::RunResult result = fracctl::run_file(config_path, options);
  for (const auto& c : result.checks) std::cout << (c.pass ? "PASS " : "FAIL ") << c.name << '\n';
  if (result.exit_code == fracctl::kExitOk || result.exit_code == fracctl::kExitCheckFailed ||
      result.exit_code == fracctl::kExitNotConverged) {
    std::cout << "report: " << (result.output_dir / "report.json").string() << '\n';
  }
  if (!result.message.empty()) std::cerr << "fracctl: " << result.message << '\n';
  return result.exit_code;
}
