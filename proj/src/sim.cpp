#include "flock/sim.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

namespace flock {

FlockSnapshot init_scenario(const Scenario &spec) {
  const FlockParams &params = spec.params;
  validate(params);
  FlockSnapshot snap;
  snap.time = 0.0;

  if (spec.explicit_states) {
    const auto &states = *spec.explicit_states;
    if (states.size() != params.n_agents) {
      throw std::invalid_argument("explicit_states: expected " + std::to_string(params.n_agents) +
                                  " agents, got " + std::to_string(states.size()));
    }
    for (std::size_t i = 0; i < states.size(); ++i) {
      if (!is_finite(states[i].p) || !is_finite(states[i].v)) {
        throw std::invalid_argument("explicit_states: agent " + std::to_string(i) + " is not finite");
      }
      if (norm(states[i].v) > params.v_max) {
        throw std::invalid_argument("explicit_states: agent " + std::to_string(i) +
                                    " exceeds v_max");
      }
      for (std::size_t j = 0; j < i; ++j) {
        if (norm(states[i].p - states[j].p) < 2.0 * params.R) {
          throw std::invalid_argument("explicit_states: agents " + std::to_string(j) + " and " +
                                      std::to_string(i) + " are closer than 2R");
        }
      }
    }
    snap.states = states;
    return snap;
  }

  const RandomInit &r = spec.random;
  if (!(r.box_max.x > r.box_min.x && r.box_max.y > r.box_min.y)) {
    throw std::invalid_argument("domain: box must have positive extent");
  }
  if (r.speed < 0.0 || r.speed > params.v_max) {
    throw std::invalid_argument("initial_speed: must lie in [0, v_max]");
  }
  std::mt19937_64 rng(r.seed);
  std::uniform_real_distribution<double> ux(r.box_min.x, r.box_max.x);
  std::uniform_real_distribution<double> uy(r.box_min.y, r.box_max.y);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double clearance = 2.0 * params.R + r.margin;
  int attempts = 0;
  while (snap.states.size() < params.n_agents) {
    if (++attempts > kMaxPlacementAttempts) {
      throw std::runtime_error("init_scenario: placed only " + std::to_string(snap.states.size()) +
                               " of " + std::to_string(params.n_agents) + " agents after " +
                               std::to_string(kMaxPlacementAttempts) +
                               " attempts; the domain is too dense for 2R + margin separation");
    }
    const Vec2 p{ux(rng), uy(rng)};
    const bool clear = std::all_of(snap.states.begin(), snap.states.end(),
                                   [&](const AgentState &s) { return norm(s.p - p) >= clearance; });
    if (!clear) continue;
    const double speed = r.speed * std::sqrt(unit(rng));
    const double heading = 2.0 * M_PI * unit(rng);
    snap.states.push_back({p, {speed * std::cos(heading), speed * std::sin(heading)}});
  }
  return snap;
}

FlockSnapshot step(const FlockSnapshot &snapshot, const std::vector<Vec2> &controls, double dt,
                   double v_max) {
  if (!(dt > 0.0)) throw std::invalid_argument("step: dt must be positive");
  if (controls.size() != snapshot.size()) throw std::invalid_argument("step: one control per agent");
  FlockSnapshot out = snapshot;
  out.time = snapshot.time + dt;
  for (std::size_t i = 0; i < out.size(); ++i) {
    AgentState &s = out.states[i];
    s.v += controls[i] * dt;
    const double speed = norm(s.v);
    if (speed > v_max) s.v *= v_max / speed;
    s.p += s.v * dt;
  }
  return out;
}

double min_pairwise_distance(const FlockSnapshot &snapshot) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < snapshot.size(); ++i) {
    for (std::size_t j = i + 1; j < snapshot.size(); ++j) {
      best = std::min(best, norm(snapshot.states[j].p - snapshot.states[i].p));
    }
  }
  return best;
}

std::vector<double> nearest_neighbor_distances(const FlockSnapshot &snapshot) {
  std::vector<double> out(snapshot.size(), std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < snapshot.size(); ++i) {
    for (std::size_t j = 0; j < snapshot.size(); ++j) {
      if (i != j) out[i] = std::min(out[i], norm(snapshot.states[j].p - snapshot.states[i].p));
    }
  }
  return out;
}

std::vector<double> snapshot_flocking_errors(const FlockSnapshot &snapshot, const FlockParams &params,
                                             const Vec2 &centroid_velocity) {
  std::vector<double> out(snapshot.size());
  const Vec2 p_cg = centroid(snapshot);
  for (AgentId i = 0; i < snapshot.size(); ++i) {
    const auto n = neighborhood(i, snapshot, params.h);
    const Vec2 v_avg = avg_velocity(n, snapshot, centroid_velocity);
    out[i] = flocking_error(i, snapshot, n, params, p_cg, v_avg);
  }
  return out;
}

namespace {

Vec2 mean_velocity(const FlockSnapshot &snapshot) {
  Vec2 sum;
  for (const auto &s : snapshot.states) sum += s.v;
  return sum / static_cast<double>(snapshot.size());
}

class Executor {
 public:
  Executor(const FlockParams &params, RunLog &log) : params_(params), log_(log) {}

  WorldUpdate advance(const FlockSnapshot &snapshot, const std::vector<PlanResult> &plans,
                      double until, const Vec2 &centroid_velocity) {
    const double dt = params_.dt;
    FlockSnapshot cur = snapshot;
    Vec2 cg_velocity = centroid_velocity;
    const auto steps = static_cast<std::size_t>(std::llround((until - snapshot.time) / dt));
    std::vector<Vec2> executed(cur.size());
    accel_estimates_.resize(cur.size());
    for (std::size_t k = 0; k < steps; ++k) {
      const double t = static_cast<double>(step_index_) * dt;
      const double t_next = static_cast<double>(step_index_ + 1) * dt;
      FlockSnapshot next = cur;
      next.time = t_next;
      for (AgentId i = 0; i < cur.size(); ++i) {
        const auto &traj = plans[i].trajectory;
        const auto s0 = traj.sample(t);
        const auto s1 = traj.sample(t_next);
        // Commanded control: the plan's mean acceleration over the step.
        const Vec2 u_plan = (s1.v - s0.v) / dt;
        Vec2 u = u_plan;
        if (params_.safety_guard) {
          bool active = false;
          u = guard_control(i, u, cur, accel_estimates_, params_, &active);
          if (active) ++log_.events.guard_activations;
        }
        u = saturate(u, cur.states[i].v, params_, &saturation_);
        // Deviation from the plan integrates semi-implicitly.
        const Vec2 correction = (u - u_plan) * dt;
        const Vec2 offset = cur.states[i].v - s0.v + correction;
        AgentState &x = next.states[i];
        x.v = s1.v + offset;
        x.p = cur.states[i].p + (s1.p - s0.p) + offset * dt;
        const double speed = norm(x.v);
        if (speed > params_.v_max) {
          x.v *= params_.v_max / speed;
          ++saturation_.speed_clips;
        }
        executed[i] = u;
      }
      record(cur, executed, cg_velocity);
      for (AgentId i = 0; i < cur.size(); ++i) {
        accel_estimates_[i] = (next.states[i].v - cur.states[i].v) / dt;
      }
      const Vec2 cg_before = centroid(cur);
      cur = std::move(next);
      cg_velocity = (centroid(cur) - cg_before) / dt;
      ++step_index_;
    }
    return {cur, cg_velocity};
  }

  const SaturationStats &saturation() const { return saturation_; }

 private:
  void record(const FlockSnapshot &snap, const std::vector<Vec2> &u, const Vec2 &cg_velocity) {
    StepMetrics m;
    m.t = snap.time;
    double sum = 0.0, sum_sq = 0.0, peak = 0.0;
    for (AgentId i = 0; i < snap.size(); ++i) {
      log_.records.push_back({snap.time, i, snap.states[i], u[i]});
      const double mag = norm(u[i]);
      sum += mag;
      sum_sq += mag * mag;
      peak = std::max(peak, mag);
    }
    const double n = static_cast<double>(snap.size());
    m.mean_u = sum / n;
    m.mean_u_sq = sum_sq / n;
    m.max_u = peak;
    m.min_dist = snap.size() > 1 ? min_pairwise_distance(snap) : 0.0;
    m.phi = snapshot_flocking_errors(snap, params_, cg_velocity);
    double phi_sum = 0.0;
    for (double x : m.phi) phi_sum += x;
    m.flock_error = phi_sum / n;
    if (snap.size() > 1 && m.min_dist < 2.0 * params_.R - 1e-3) ++log_.events.safety_faults;
    log_.metrics.push_back(std::move(m));
  }

  const FlockParams &params_;
  RunLog &log_;
  SaturationStats saturation_;
  std::size_t step_index_ = 0;
  // Neighbor accelerations as sensed from the last step's velocity change.
  std::vector<Vec2> accel_estimates_;
};

}  // namespace

RunLog run(const Scenario &scenario, const RunOptions &options) {
  const FlockParams &params = scenario.params;
  validate(params);
  const FlockSnapshot initial = init_scenario(scenario);

  RunLog log;
  log.n_agents = initial.size();
  log.dt = params.dt;
  Executor executor(params, log);
  Vec2 last_cg_velocity = mean_velocity(initial);

  auto advance = [&](const FlockSnapshot &snap, const std::vector<PlanResult> &plans, double until) {
    WorldUpdate next = executor.advance(snap, plans, until, last_cg_velocity);
    last_cg_velocity = next.centroid_velocity;
    return next;
  };
  auto on_round = [&](const PlanRound &round) {
    ++log.events.rounds;
    for (const PlanResult &p : *round.plans) {
      log.events.assumption3_breaches += p.assumption3_breaches;
      log.events.degraded_solves += p.degraded_solves;
      log.events.escapes += p.escapes;
      log.events.contacts += p.contacts.size();
      if (p.residual_risk) ++log.events.residual_risks;
    }
    if (options.keep_plans) {
      std::vector<PiecewiseTrajectory> trajs;
      for (const PlanResult &p : *round.plans) trajs.push_back(p.trajectory);
      log.executed_plans.push_back(std::move(trajs));
      log.round_times.push_back(round.time);
    }
  };

  FlockSnapshot final_state = initial;
  auto advance_and_keep = [&](const FlockSnapshot &snap, const std::vector<PlanResult> &plans,
                              double until) {
    WorldUpdate next = advance(snap, plans, until);
    final_state = next.snapshot;
    return next;
  };
  replan_loop(initial, last_cg_velocity, params, scenario.duration, advance_and_keep, on_round,
              options.execution);

  log.events.control_clips = executor.saturation().control_clips;
  log.events.speed_clips = executor.saturation().speed_clips;
  log.final_state = final_state;
  return log;
}

MetricsSummary metrics(const RunLog &log, double window, const Vec2 &v_d) {
  if (log.metrics.empty() || log.n_agents == 0) throw std::invalid_argument("metrics: empty log");
  MetricsSummary out;
  const std::size_t n = log.n_agents;
  const double t_last = log.metrics.back().t;
  const double t_first = log.metrics.front().t;

  out.min_dist_overall = std::numeric_limits<double>::infinity();
  out.window_min_dist = std::numeric_limits<double>::infinity();
  std::size_t in_window = 0;
  for (std::size_t k = 0; k < log.metrics.size(); ++k) {
    const StepMetrics &m = log.metrics[k];
    double speed_err = 0.0;
    for (std::size_t i = 0; i < n; ++i) speed_err += norm(log.records[k * n + i].state.v - v_d);
    speed_err /= static_cast<double>(n);

    out.t.push_back(m.t);
    out.mean_u.push_back(m.mean_u);
    out.max_u.push_back(m.max_u);
    out.min_dist.push_back(m.min_dist);
    out.flock_error.push_back(m.flock_error);
    out.speed_error.push_back(speed_err);
    if (n > 1) out.min_dist_overall = std::min(out.min_dist_overall, m.min_dist);

    if (m.t <= t_first + window) out.initial_peak_max_u = std::max(out.initial_peak_max_u, m.max_u);
    if (m.t >= t_last - window) {
      ++in_window;
      out.window_mean_u += m.mean_u;
      out.window_max_u += m.max_u;
      out.window_flock_error += m.flock_error;
      out.window_speed_error += speed_err;
      out.window_min_dist = std::min(out.window_min_dist, m.min_dist);
    }
  }
  const double w = static_cast<double>(in_window);
  out.window_mean_u /= w;
  out.window_max_u /= w;
  out.window_flock_error /= w;
  out.window_speed_error /= w;

  for (const StepRecord &r : log.records) out.logged_energy += squared_norm(r.u) * log.dt;

  const FlockSnapshot &fin = log.final_state;
  if (fin.size() > 1) {
    const auto nn = nearest_neighbor_distances(fin);
    out.nn_min = *std::min_element(nn.begin(), nn.end());
    out.nn_max = *std::max_element(nn.begin(), nn.end());
    for (double d : nn) out.nn_mean += d;
    out.nn_mean /= static_cast<double>(nn.size());
  }
  if (fin.size() > 0) out.final_mean_velocity = mean_velocity(fin);
  return out;
}

}  // namespace flock
