#pragma once

// Per-agent trajectory generation and the receding-horizon planning round.
//
// A round runs in two phases against one immutable snapshot:
//   1. every agent solves its unconstrained terminal problem;
//   2. every agent stitches its final plan, detecting contacts against the
//      neighbors' phase-1 plans (exchange mode) or against constant-velocity
//      extrapolations of the sensed neighbors (sensing mode).
// Both phases are independent per agent. plan_round_serial is the reference;
// plan_round_parallel distributes agents over OpenMP threads and must produce
// identical results.

#include <cstddef>
#include <functional>
#include <vector>

#include "flock/contact.hpp"
#include "flock/cubic.hpp"
#include "flock/model.hpp"
#include "flock/trajectory.hpp"

namespace flock {

struct PlanContext {
  AgentId self = 0;
  FlockSnapshot snapshot;
  // Neighbors' unconstrained plans of the current round (exchange mode).
  TrajectoryMap known_trajs;
  // Plans broadcast in the previous round; used to predict neighbor terminal
  // states in exchange mode. Empty in the first round.
  TrajectoryMap previous_plans;
  Vec2 centroid_velocity;
  FlockParams params;
};

struct PlanResult {
  PiecewiseTrajectory trajectory;
  BvpStatus unconstrained_status = BvpStatus::zero_branch;
  std::vector<ContactInterval> contacts;
  std::vector<ConstrainedArc> arcs;
  std::size_t degraded_solves = 0;
  std::size_t assumption3_breaches = 0;
  std::size_t escapes = 0;
  bool residual_risk = false;
};

// Aggregation targets and average velocity seen by ctx.self at t_f.
TerminalProblem terminal_problem(const PlanContext &ctx);

// Sensed neighbor positions standing in for their terminal positions.
std::vector<Vec2> sensing_terminal_targets(const PlanContext &ctx);

BvpResult unconstrained_solution(const PlanContext &ctx);
PiecewiseTrajectory unconstrained_plan(const PlanContext &ctx);

// Trajectories the planner checks against: known plans, or constant-velocity
// extrapolations for neighbors without one.
TrajectoryMap neighbor_predictions(const PlanContext &ctx);

PlanResult plan(const PlanContext &ctx);

struct SaturationStats {
  std::size_t control_clips = 0;
  std::size_t speed_clips = 0;
};

// Radially clips |u| to u_max, then drops the outward radial part when the
// speed is at v_max.
Vec2 saturate(const Vec2 &u, const Vec2 &v, const FlockParams &params,
              SaturationStats *stats = nullptr);

struct RoundInput {
  FlockSnapshot snapshot;
  TrajectoryMap previous_plans;
  Vec2 centroid_velocity;
  FlockParams params;
};

std::vector<PlanResult> plan_round_serial(const RoundInput &input);
std::vector<PlanResult> plan_round_parallel(const RoundInput &input);

enum class Execution { serial, parallel };

inline std::vector<PlanResult> plan_round(const RoundInput &input, Execution execution) {
  return execution == Execution::serial ? plan_round_serial(input) : plan_round_parallel(input);
}

struct PlanRound {
  std::size_t index = 0;
  double time = 0.0;
  const std::vector<PlanResult> *plans = nullptr;
};

// The world moves every agent along its plan until `until` and returns the new
// snapshot together with the centroid velocity estimate at that time.
struct WorldUpdate {
  FlockSnapshot snapshot;
  Vec2 centroid_velocity;
};
using AdvanceWorld =
    std::function<WorldUpdate(const FlockSnapshot &, const std::vector<PlanResult> &, double until)>;

// Plans every delta_t and advances the world between rounds until `duration`
// has elapsed. Rounds are strict barriers: all plans of a round are computed
// before the world moves.
void replan_loop(const FlockSnapshot &initial, const Vec2 &initial_centroid_velocity,
                 const FlockParams &params, double duration, const AdvanceWorld &advance,
                 const std::function<void(const PlanRound &)> &on_round,
                 Execution execution = Execution::parallel);

}  // namespace flock
