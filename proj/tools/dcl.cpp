#include <iostream>

#include <CLI11.hpp>

#include "dcl/cli/commands.hpp"

int main(int argc, char** argv) {
  using namespace dcl::cli;
  CLI::App app{"Server-based distributed cooperative localization experiments"};
  app.set_version_flag("--version", std::string(DCL_VERSION));
  app.require_subcommand(1);

  std::string spec, subset, runlog;

  auto* sim = app.add_subcommand("simulate", "Monte Carlo simulation from an experiment file");
  sim->add_option("spec", spec, "Experiment YAML file")->required();

  auto* utias = app.add_subcommand("utias", "Run estimators on one UTIAS MRCLAM subset");
  utias->add_option("subset_dir", subset, "Extracted MRCLAM_Dataset<N> directory")->required();
  utias->add_option("config", spec, "Dataset YAML file (see configs/utias)")->required();

  auto* tune = app.add_subcommand("tune", "Grid-search dataset noise parameters");
  tune->add_option("subset_dir", subset, "Extracted MRCLAM_Dataset<N> directory")->required();
  tune->add_option("config", spec, "Tuning YAML file")->required();

  auto* obs = app.add_subcommand("obscheck", "Observability audit of a recorded run log");
  obs->add_option("runlog_dir", runlog, "Directory holding jacobians_<estimator>.csv files")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kSpecError;
  }

  if (*sim) return cmd_simulate(spec, std::cout, std::cerr);
  if (*utias) return cmd_utias(subset, spec, std::cout, std::cerr);
  if (*tune) return cmd_tune(subset, spec, std::cout, std::cerr);
  return cmd_obscheck(runlog, std::cout, std::cerr);
}
