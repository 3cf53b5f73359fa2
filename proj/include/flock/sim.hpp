#pragma once

// Deterministic world: scenario setup, double-integrator execution of the
// planned trajectories, metrics and the run log.

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "flock/model.hpp"
#include "flock/planner.hpp"

namespace flock {

struct RandomInit {
  std::uint64_t seed = 1;
  Vec2 box_min{0.0, 0.0};
  Vec2 box_max{1.0, 1.0};
  double margin = 0.05;  // extra clearance over 2R between initial disks
  double speed = 0.0;    // initial speeds drawn uniformly from [0, speed]
};

struct Scenario {
  std::string name;
  FlockParams params;
  std::optional<std::vector<AgentState>> explicit_states;
  RandomInit random;
  double duration = 10.0;
  double metrics_window = 2.0;
};

inline constexpr int kMaxPlacementAttempts = 10000;

// Throws std::invalid_argument for inconsistent scenarios and
// std::runtime_error when random placement runs out of attempts.
FlockSnapshot init_scenario(const Scenario &spec);

// Semi-implicit Euler: v += u dt (speed clamped to v_max), p += v dt.
FlockSnapshot step(const FlockSnapshot &snapshot, const std::vector<Vec2> &controls, double dt,
                   double v_max = std::numeric_limits<double>::infinity());

struct StepRecord {
  double t = 0.0;
  AgentId id = 0;
  AgentState state;
  Vec2 u;  // executed over [t, t + dt)
};

struct StepMetrics {
  double t = 0.0;
  double mean_u = 0.0;
  double max_u = 0.0;
  double mean_u_sq = 0.0;
  double min_dist = 0.0;
  double flock_error = 0.0;  // mean over agents
  std::vector<double> phi;   // per agent
};

struct RunEvents {
  std::size_t rounds = 0;
  std::size_t control_clips = 0;
  std::size_t speed_clips = 0;
  std::size_t assumption3_breaches = 0;
  std::size_t degraded_solves = 0;
  std::size_t residual_risks = 0;
  std::size_t escapes = 0;
  std::size_t contacts = 0;
  std::size_t guard_activations = 0;  // agent-steps where guard_control acted
  std::size_t safety_faults = 0;  // steps with some pair closer than 2R - 1e-3
};

struct RunLog {
  std::size_t n_agents = 0;
  double dt = 0.0;
  std::vector<StepRecord> records;  // n_agents per step, time-major
  std::vector<StepMetrics> metrics; // one per step
  RunEvents events;
  FlockSnapshot final_state;
  // Per round: the plan of every agent. Only kept when requested.
  std::vector<std::vector<PiecewiseTrajectory>> executed_plans;
  std::vector<double> round_times;
};

struct RunOptions {
  Execution execution = Execution::parallel;
  bool keep_plans = false;
};

RunLog run(const Scenario &scenario, const RunOptions &options = {});

// Instantaneous per-agent flocking error of a snapshot.
std::vector<double> snapshot_flocking_errors(const FlockSnapshot &snapshot, const FlockParams &params,
                                             const Vec2 &centroid_velocity);

double min_pairwise_distance(const FlockSnapshot &snapshot);
std::vector<double> nearest_neighbor_distances(const FlockSnapshot &snapshot);

struct MetricsSummary {
  std::vector<double> t, mean_u, max_u, min_dist, flock_error, speed_error;
  // Aggregates over the final `window` seconds.
  double window_mean_u = 0.0;
  double window_max_u = 0.0;
  double window_min_dist = 0.0;
  double window_flock_error = 0.0;
  double window_speed_error = 0.0;
  // Peak of max_u over the first `window` seconds.
  double initial_peak_max_u = 0.0;
  double min_dist_overall = 0.0;
  double logged_energy = 0.0;  // sum over records of |u|^2 dt
  // Final-state nearest-neighbor spacing.
  double nn_mean = 0.0, nn_min = 0.0, nn_max = 0.0;
  Vec2 final_mean_velocity;
};

// Throws std::invalid_argument for an empty log.
MetricsSummary metrics(const RunLog &log, double window, const Vec2 &v_d);

}  // namespace flock
