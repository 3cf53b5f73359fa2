#pragma once

// Flock domain types, neighborhood geometry and the terminal flocking cost.

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "flock/vec2.hpp"

namespace flock {

using AgentId = std::size_t;

struct AgentState {
  Vec2 p;  // m
  Vec2 v;  // m/s
};

enum class PlanningMode { exchange, sensing };

const char *to_string(PlanningMode mode);
PlanningMode planning_mode_from_string(const std::string &name);

struct FlockParams {
  std::size_t n_agents = 1;
  double R = 0.1;            // disk radius, m
  double h = 1.0;            // sensing range, m
  double D = 0.5;            // desired spacing, m
  Vec2 v_d{1.0, 0.0};        // desired flock velocity, m/s
  double v_max = 5.0;        // m/s
  double u_max = 10.0;       // m/s^2
  double w1 = 1.0;           // velocity control
  double w2 = 1.0;           // velocity matching
  double w3 = 1.0;           // aggregation
  double horizon = 1.2;      // t_f - t_0, s
  double delta_t = 0.1;      // replanning period, s
  double dt = 0.01;          // sampling step, s
  PlanningMode mode = PlanningMode::exchange;
  // Use the unit separation direction in the position costate instead of the
  // raw separation vector. The unit form is the exact gradient of the
  // aggregation term.
  bool gradient_consistent_lambda_p = false;
  // Execution-time reciprocal braking filter (see guard_control).
  bool safety_guard = true;
};

// Throws std::invalid_argument naming the offending field.
void validate(const FlockParams &params);

struct FlockSnapshot {
  double time = 0.0;
  std::vector<AgentState> states;

  std::size_t size() const { return states.size(); }
  const AgentState &at(AgentId id) const { return states.at(id); }
};

struct Costates {
  Vec2 lambda_p;
  Vec2 lambda_v;
};

// p_j - p_i
constexpr Vec2 displacement(const Vec2 &p_i, const Vec2 &p_j) { return p_j - p_i; }

// Agents strictly closer than h to agent i, always including i. Sorted.
std::vector<AgentId> neighborhood(AgentId i, const FlockSnapshot &snapshot, double h);

// Mean position over every agent of the flock.
Vec2 centroid(const FlockSnapshot &snapshot);

// Mean velocity over n0 (which contains the agent itself); the centroid
// velocity when the agent is isolated.
Vec2 avg_velocity(std::span<const AgentId> n0, const FlockSnapshot &snapshot,
                  const Vec2 &centroid_velocity);
Vec2 avg_velocity(AgentId i, const FlockSnapshot &snapshot, double h,
                  const Vec2 &centroid_velocity);

// Aggregation targets for agent i: positions of n0 \ {i}, or the flock
// centroid when i is isolated.
std::vector<Vec2> aggregation_targets(AgentId i, std::span<const AgentId> n0,
                                      const FlockSnapshot &positions, const Vec2 &p_cg);

// Terminal cost of one agent given its terminal state and aggregation targets.
double terminal_cost(const AgentState &terminal, std::span<const Vec2> targets,
                     const Vec2 &v_avg, const FlockParams &params);

// Transversality values of the costates for the same inputs.
Costates terminal_cost_gradient(const AgentState &terminal, std::span<const Vec2> targets,
                                const Vec2 &v_avg, const FlockParams &params);

double flocking_error(AgentId i, const FlockSnapshot &terminal, std::span<const AgentId> n0,
                      const FlockParams &params, const Vec2 &p_cg, const Vec2 &v_avg);

Costates terminal_costates(AgentId i, const FlockSnapshot &terminal,
                           std::span<const AgentId> n0, const FlockParams &params,
                           const Vec2 &p_cg, const Vec2 &v_avg);

}  // namespace flock
