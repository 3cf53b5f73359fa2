// flockctl: run, validate and plot-data commands for flock scenarios.

#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "flock/io.hpp"
#include "flock/sim.hpp"

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitFailure = 2;

int cmd_run(const std::string &scenario_path, const std::string &out_dir, bool serial) {
  const flock::Scenario scenario = flock::load_scenario(scenario_path);
  flock::RunOptions options;
  options.execution = serial ? flock::Execution::serial : flock::Execution::parallel;
  const flock::RunLog log = flock::run(scenario, options);
  const auto files = flock::write_run(out_dir, scenario, log);
  const auto &e = log.events;
  std::cout << "wrote " << files.trajectory.string() << ", " << files.metrics.string() << ", "
            << files.summary.string() << "\n"
            << "steps=" << log.metrics.size() << " rounds=" << e.rounds
            << " contacts=" << e.contacts << " safety_faults=" << e.safety_faults << "\n";
  return 0;
}

int cmd_validate(const std::string &scenario_path) {
  const flock::Scenario scenario = flock::load_scenario(scenario_path);
  std::cout << flock::scenario_to_json(scenario).dump(2) << "\n";
  return 0;
}

int cmd_plotdata(const std::string &log_path, const std::string &out_dir) {
  const auto records = flock::parse_trajectory_csv(flock::read_file(log_path));
  for (const auto &path : flock::emit_plotdata(records, out_dir)) std::cout << path.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char **argv) {
  CLI::App app{"Decentralized energy-optimal flocking simulator"};
  app.require_subcommand(1);

  std::string scenario_path, out_dir = "out", log_path;
  bool serial = false;

  auto *run = app.add_subcommand("run", "Simulate a scenario and write logs");
  run->add_option("scenario", scenario_path, "Scenario JSON file")->required();
  run->add_option("-o,--out", out_dir, "Output directory");
  run->add_flag("--serial", serial, "Plan with the single-threaded reference");

  auto *validate = app.add_subcommand("validate", "Check a scenario and print the effective config");
  validate->add_option("scenario", scenario_path, "Scenario JSON file")->required();

  auto *plot = app.add_subcommand("plotdata", "Derive plot files from a trajectory log");
  plot->add_option("log", log_path, "trajectory.csv from a run")->required();
  plot->add_option("-o,--out", out_dir, "Output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*run) return cmd_run(scenario_path, out_dir, serial);
    if (*validate) return cmd_validate(scenario_path);
    return cmd_plotdata(log_path, out_dir);
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}
