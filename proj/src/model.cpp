#include "flock/model.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace flock {

const char *to_string(PlanningMode mode) {
  return mode == PlanningMode::exchange ? "exchange" : "sensing";
}

PlanningMode planning_mode_from_string(const std::string &name) {
  if (name == "exchange") return PlanningMode::exchange;
  if (name == "sensing") return PlanningMode::sensing;
  throw std::invalid_argument("mode: expected 'exchange' or 'sensing', got '" + name + "'");
}

namespace {

void require(bool ok, const std::string &message) {
  if (!ok) throw std::invalid_argument(message);
}

bool finite(double x) { return std::isfinite(x); }

}  // namespace

void validate(const FlockParams &p) {
  require(p.n_agents >= 1, "n_agents: must be at least 1");
  require(finite(p.R) && p.R > 0.0, "R: disk radius must be positive");
  require(finite(p.D) && p.D > 0.0, "D: desired spacing must be positive");
  require(finite(p.h) && p.h > 2.0 * p.R, "h: sensing range must exceed 2R (h > 2R)");
  require(is_finite(p.v_d), "v_d: must be finite");
  require(finite(p.v_max) && p.v_max > 0.0, "v_max: must be positive");
  require(finite(p.u_max) && p.u_max > 0.0, "u_max: must be positive");
  require(finite(p.w1) && p.w1 >= 0.0, "w1: must be nonnegative");
  require(finite(p.w2) && p.w2 >= 0.0, "w2: must be nonnegative");
  require(finite(p.w3) && p.w3 >= 0.0, "w3: must be nonnegative");
  require(finite(p.horizon) && p.horizon > 0.0, "horizon: must be positive");
  require(finite(p.delta_t) && p.delta_t > 0.0 && p.delta_t <= p.horizon,
          "delta_t: must satisfy 0 < delta_t <= horizon");
  require(finite(p.dt) && p.dt > 0.0 && p.dt <= p.delta_t, "dt: must satisfy 0 < dt <= delta_t");
}

std::vector<AgentId> neighborhood(AgentId i, const FlockSnapshot &snapshot, double h) {
  if (i >= snapshot.size()) {
    throw std::out_of_range("neighborhood: unknown agent id " + std::to_string(i));
  }
  std::vector<AgentId> out;
  const Vec2 p_i = snapshot.states[i].p;
  for (AgentId j = 0; j < snapshot.size(); ++j) {
    if (j == i || norm(displacement(p_i, snapshot.states[j].p)) < h) out.push_back(j);
  }
  return out;
}

Vec2 centroid(const FlockSnapshot &snapshot) {
  if (snapshot.states.empty()) throw std::invalid_argument("centroid: empty snapshot");
  Vec2 sum;
  for (const auto &s : snapshot.states) sum += s.p;
  return sum / static_cast<double>(snapshot.size());
}

Vec2 avg_velocity(std::span<const AgentId> n0, const FlockSnapshot &snapshot,
                  const Vec2 &centroid_velocity) {
  if (n0.size() <= 1) return centroid_velocity;
  Vec2 sum;
  for (AgentId j : n0) sum += snapshot.at(j).v;
  return sum / static_cast<double>(n0.size());
}

Vec2 avg_velocity(AgentId i, const FlockSnapshot &snapshot, double h,
                  const Vec2 &centroid_velocity) {
  const auto n0 = neighborhood(i, snapshot, h);
  return avg_velocity(n0, snapshot, centroid_velocity);
}

std::vector<Vec2> aggregation_targets(AgentId i, std::span<const AgentId> n0,
                                      const FlockSnapshot &positions, const Vec2 &p_cg) {
  std::vector<Vec2> targets;
  if (n0.size() <= 1) {
    targets.push_back(p_cg);
    return targets;
  }
  targets.reserve(n0.size() - 1);
  for (AgentId j : n0) {
    if (j != i) targets.push_back(positions.at(j).p);
  }
  return targets;
}

double terminal_cost(const AgentState &terminal, std::span<const Vec2> targets,
                     const Vec2 &v_avg, const FlockParams &params) {
  const double phi_d = squared_norm(terminal.v - params.v_d);
  const double phi_v = squared_norm(terminal.v - v_avg);
  double phi_a = 0.0;
  for (const Vec2 &q : targets) {
    const double gap = norm(displacement(terminal.p, q)) - params.D;
    phi_a += gap * gap;
  }
  return params.w1 * phi_d + params.w2 * phi_v + params.w3 * phi_a;
}

Costates terminal_cost_gradient(const AgentState &terminal, std::span<const Vec2> targets,
                                const Vec2 &v_avg, const FlockParams &params) {
  Costates out;
  for (const Vec2 &q : targets) {
    const Vec2 s = displacement(terminal.p, q);
    const double r = norm(s);
    if (params.gradient_consistent_lambda_p) {
      // Direction undefined for coincident points; the term is flat there.
      if (r > 0.0) out.lambda_p -= 2.0 * params.w3 * (r - params.D) * (s / r);
    } else {
      out.lambda_p -= 2.0 * params.w3 * (r - params.D) * s;
    }
  }
  out.lambda_v = 2.0 * params.w2 * (terminal.v - v_avg) + 2.0 * params.w1 * (terminal.v - params.v_d);
  return out;
}

double flocking_error(AgentId i, const FlockSnapshot &terminal, std::span<const AgentId> n0,
                      const FlockParams &params, const Vec2 &p_cg, const Vec2 &v_avg) {
  const auto targets = aggregation_targets(i, n0, terminal, p_cg);
  return terminal_cost(terminal.at(i), targets, v_avg, params);
}

Costates terminal_costates(AgentId i, const FlockSnapshot &terminal,
                           std::span<const AgentId> n0, const FlockParams &params,
                           const Vec2 &p_cg, const Vec2 &v_avg) {
  const auto targets = aggregation_targets(i, n0, terminal, p_cg);
  return terminal_cost_gradient(terminal.at(i), targets, v_avg, params);
}

}  // namespace flock
