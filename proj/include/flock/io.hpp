#pragma once

// Scenario files (JSON), CSV run logs, the run summary and plot data.

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "flock/sim.hpp"

namespace flock {

inline constexpr const char *kArtifactVersion = "0.1.0";
inline constexpr const char *kPrecisionEnv = "FLOCK_LOG_PRECISION";
inline constexpr int kDefaultPrecision = 9;

// Throws std::invalid_argument naming the offending key.
Scenario parse_scenario(const nlohmann::json &doc);
Scenario load_scenario(const std::filesystem::path &path);
// Normalized form including defaulted fields.
nlohmann::json scenario_to_json(const Scenario &scenario);

// Significant digits for CSV output; kPrecisionEnv overrides the default.
int log_precision();
std::string format_number(double x, int precision);

std::string trajectory_csv(const std::vector<StepRecord> &records, int precision);
std::string metrics_csv(const std::vector<StepMetrics> &metrics, int precision);

struct MetricsRow {
  double t, mean_u, max_u, min_dist, flock_error;
};

// Throw std::runtime_error on malformed or truncated input. The trajectory
// reader requires the same agent set at every time, in increasing time.
std::vector<StepRecord> parse_trajectory_csv(const std::string &text);
std::vector<MetricsRow> parse_metrics_csv(const std::string &text);
std::string read_file(const std::filesystem::path &path);

// Writes to a sibling temporary file and renames it into place.
void write_atomic(const std::filesystem::path &path, const std::string &content);

nlohmann::json summary_json(const Scenario &scenario, const RunLog &log,
                            const MetricsSummary &summary);

struct RunFiles {
  std::filesystem::path trajectory, metrics, summary;
};
RunFiles write_run(const std::filesystem::path &out_dir, const Scenario &scenario,
                   const RunLog &log);

struct PlotDataOptions {
  std::vector<double> snapshot_fractions{0.25, 0.5, 0.75, 1.0};
  std::size_t histogram_bins = 20;
};

// Per-figure CSV files derived from a trajectory log. Returns the paths written.
std::vector<std::filesystem::path> emit_plotdata(const std::vector<StepRecord> &records,
                                                 const std::filesystem::path &out_dir,
                                                 const PlotDataOptions &options = {});

}  // namespace flock
