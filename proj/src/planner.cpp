#include "flock/planner.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>

namespace flock {

namespace {

constexpr double kTimeEps = 1e-9;
constexpr double kMatchedVelocity = 1e-9;
constexpr double kMatchedGap = 1e-6;

double final_time(const PlanContext &ctx) { return ctx.snapshot.time + ctx.params.horizon; }

// Constant control steering a rigid group from v_shared toward v_d over the
// remaining horizon. Every participant computes it from the same data.
SharedControl group_control(const Vec2 &v_shared, const FlockParams &params, double remaining) {
  if (remaining <= 0.0 || params.w1 == 0.0) return {};
  return {Vec2{}, -2.0 * params.w1 * (v_shared - params.v_d) / (1.0 + 2.0 * params.w1 * remaining)};
}

// Whether every Hermite connection stays within u_max.
bool connection_feasible(const std::map<AgentId, AgentState> &from, const std::map<AgentId, AgentState> &to,
                         double duration, double u_max) {
  for (const auto &[id, x] : from) {
    const CubicCoeffs c = connect_states(x, to.at(id), duration);
    if (std::max(norm(c.b), norm(c.a * duration + c.b)) > u_max) return false;
  }
  return true;
}

// Participant j's expected motion: what was expected of it up to `t_from`,
// its own connection onto the arc entry, the arc, then a fixed-endpoint cubic
// back onto the final state of its own plan.
PiecewiseTrajectory arc_continuation(const ConstrainedArc &arc, AgentId j,
                                     const PiecewiseTrajectory &before, double t_from,
                                     const PiecewiseTrajectory &fallback, double t_final) {
  std::vector<Piece> pieces;
  if (t_from > before.t_begin() + kTimeEps) pieces = before.clip(before.t_begin(), t_from).pieces();
  const CubicCoeffs on_arc = arc_motion(arc, j);
  if (arc.start > t_from + kTimeEps) {
    const AgentState entry{on_arc.d, on_arc.c};
    pieces.push_back({t_from, connect_states(before.state(t_from), entry, arc.start - t_from),
                      PieceKind::connection});
  }
  pieces.push_back({arc.start, on_arc, PieceKind::constrained});
  if (arc.end < t_final - kTimeEps) {
    const auto exit = eval_unchecked(on_arc, arc.duration());
    const auto final_state = fallback.state(t_final);
    pieces.push_back({arc.end, connect_states({exit.p, exit.v}, final_state, t_final - arc.end),
                      PieceKind::connection});
  }
  return PiecewiseTrajectory(std::move(pieces));
}

// Window of connection durations over which the relative cubic from the
// current state to contact at rest closes the gap monotonically: no initial
// acceleration toward the partner (>= 2 gap / closing at constant
// deceleration) and no overshoot (<= 3 gap / closing).
struct ConnectionWindow {
  double lo = 0.0;
  double hi = std::numeric_limits<double>::infinity();
};

ConnectionWindow connection_window(const AgentState &self, const AgentState &other, double R) {
  const Vec2 s = other.p - self.p;
  const double r = norm(s);
  if (r <= 0.0) return {};
  const double closing = -dot(s, other.v - self.v) / r;
  const double gap = r - 2.0 * R;
  if (closing <= 0.0 || gap <= 0.0) return {};
  return {2.0 * gap / closing, 3.0 * gap / closing};
}

}  // namespace

TerminalProblem terminal_problem(const PlanContext &ctx) {
  const auto &snap = ctx.snapshot;
  const auto &params = ctx.params;
  const auto n0 = neighborhood(ctx.self, snap, params.h);
  const double t_f = final_time(ctx);

  TerminalProblem out;
  if (n0.size() <= 1) {
    out.targets.push_back(centroid(snap));
    out.v_avg = ctx.centroid_velocity;
    return out;
  }

  if (params.mode == PlanningMode::sensing) {
    out.targets = sensing_terminal_targets(ctx);
    out.v_avg = avg_velocity(n0, snap, ctx.centroid_velocity);
    return out;
  }

  // Exchange mode: broadcast plans evaluated at t_f; constant-velocity
  // extrapolation of the sensed state when no plan has been received yet.
  auto predict = [&](AgentId j) -> AgentState {
    if (auto it = ctx.previous_plans.find(j); it != ctx.previous_plans.end() && !it->second.empty()) {
      const auto s = it->second.sample_extrapolated(t_f);
      return {s.p, s.v};
    }
    const AgentState &now = snap.at(j);
    return {now.p + now.v * params.horizon, now.v};
  };
  Vec2 v_sum;
  for (AgentId j : n0) {
    const AgentState predicted = predict(j);
    v_sum += predicted.v;
    if (j != ctx.self) out.targets.push_back(predicted.p);
  }
  out.v_avg = v_sum / static_cast<double>(n0.size());
  return out;
}

std::vector<Vec2> sensing_terminal_targets(const PlanContext &ctx) {
  const auto n0 = neighborhood(ctx.self, ctx.snapshot, ctx.params.h);
  return aggregation_targets(ctx.self, n0, ctx.snapshot, centroid(ctx.snapshot));
}

BvpResult unconstrained_solution(const PlanContext &ctx) {
  return solve_terminal_bvp(ctx.snapshot.at(ctx.self), terminal_problem(ctx), ctx.params,
                            ctx.params.horizon);
}

PiecewiseTrajectory unconstrained_plan(const PlanContext &ctx) {
  return PiecewiseTrajectory::single(ctx.snapshot.time, unconstrained_solution(ctx).coeffs);
}

TrajectoryMap neighbor_predictions(const PlanContext &ctx) {
  const double t0 = ctx.snapshot.time, t_f = final_time(ctx);
  TrajectoryMap out;
  for (AgentId j : neighborhood(ctx.self, ctx.snapshot, ctx.params.h)) {
    if (j == ctx.self) continue;
    auto it = ctx.known_trajs.find(j);
    if (ctx.params.mode == PlanningMode::exchange && it != ctx.known_trajs.end()) {
      out.emplace(j, it->second);
    } else {
      out.emplace(j, PiecewiseTrajectory::ballistic(ctx.snapshot.at(j), t0, t_f));
    }
  }
  return out;
}

PlanResult plan(const PlanContext &ctx) {
  const FlockParams &params = ctx.params;
  const double t0 = ctx.snapshot.time;
  const double t_f = final_time(ctx);
  const AgentState x0 = ctx.snapshot.at(ctx.self);
  const TerminalProblem problem = terminal_problem(ctx);

  PlanResult result;
  const BvpResult unconstrained = solve_terminal_bvp(x0, problem, params, params.horizon);
  result.unconstrained_status = unconstrained.status;
  if (unconstrained.degraded()) ++result.degraded_solves;
  const auto own = PiecewiseTrajectory::single(t0, unconstrained.coeffs);

  const TrajectoryMap others = neighbor_predictions(ctx);
  result.contacts = detect_contacts(own, others, params);
  if (result.contacts.empty()) {
    result.trajectory = own;
    return result;
  }

  // What the planner expects every neighbor to do, including shared arcs.
  TrajectoryMap expected = others;
  const double min_connection = params.dt;
  PiecewiseTrajectory stitched;
  double cursor_t = t0;
  AgentState cursor = x0;
  bool finished = false;

  auto solve_from = [&](const AgentState &x, double from) {
    const BvpResult r = solve_terminal_bvp(x, problem, params, t_f - from);
    if (r.degraded()) ++result.degraded_solves;
    return r.coeffs;
  };

  for (const ContactInterval &interval : result.contacts) {
    if (interval.end <= cursor_t + kTimeEps || cursor_t >= t_f - params.dt) continue;
    if (interval.participants.size() > 1) ++result.assumption3_breaches;
    const double t_c = std::max(interval.start, cursor_t);

    bool matched = t_c - cursor_t < min_connection;
    std::map<AgentId, AgentState> now;
    now.emplace(ctx.self, cursor);
    ConnectionWindow window;
    for (AgentId j : interval.participants) {
      const AgentState other = expected.at(j).state(cursor_t);
      now.emplace(j, other);
      matched = matched && norm(other.v - cursor.v) <= kMatchedVelocity &&
                norm(other.p - cursor.p) <= 2.0 * params.R + kMatchedGap;
      const ConnectionWindow w = connection_window(cursor, other, params.R);
      window.lo = std::max(window.lo, w.lo);
      window.hi = std::min(window.hi, w.hi);
    }
    double connection = std::max(t_c - cursor_t, window.lo);
    if (window.hi >= window.lo) connection = std::min(connection, window.hi);
    connection = std::max(connection, min_connection);
    const double start = matched ? cursor_t : std::min(cursor_t + connection, t_f - params.dt);
    const double arc_end = std::min(t_f, std::max(interval.end, start + params.dt));

    // Entry geometry: the current configuration with every participant drawn
    // to contact along its present bearing, centered on the mean of the
    // planned positions at the arc start.
    std::map<AgentId, Vec2> positions;
    for (const auto &[id, s] : now) {
      if (id == ctx.self) {
        positions.emplace(id, s.p);
        continue;
      }
      const Vec2 d = s.p - cursor.p;
      const double r = norm(d);
      positions.emplace(id, r > 2.0 * params.R ? cursor.p + d * (2.0 * params.R / r) : s.p);
    }
    separate_entries(positions, params.R);
    Vec2 offset;
    std::map<AgentId, AgentState> states;
    for (const auto &[id, p] : positions) {
      const auto planned = (id == ctx.self ? own : others.at(id)).state(start);
      offset += planned.p - p;
      states.emplace(id, planned);
    }
    offset /= static_cast<double>(positions.size());
    for (auto &[id, s] : states) s.p = positions.at(id) + offset;

    // A short connection cannot also steer the group onto its planned drift
    // within u_max; the group then coasts and the connection only brakes.
    // Contact is then taken along the coasting bearings so that the
    // tangential relative velocity needs no correction.
    if (!matched && !connection_feasible(now, states, start - cursor_t, params.u_max)) {
      const double lead = start - cursor_t;
      const Vec2 self_at = cursor.p + cursor.v * lead;
      std::map<AgentId, Vec2> coasting;
      for (const auto &[id, s] : now) {
        const Vec2 d = s.p + s.v * lead - self_at;
        const double r = norm(d);
        coasting.emplace(id, id == ctx.self || r == 0.0 ? positions.at(id) : cursor.p + d * (2.0 * params.R / r));
      }
      separate_entries(coasting, params.R);
      Vec2 drift, velocity;
      for (const auto &[id, s] : now) {
        drift += s.p + s.v * lead - coasting.at(id);
        velocity += s.v;
      }
      const double n = static_cast<double>(now.size());
      for (auto &[id, s] : states) s = {coasting.at(id) + drift / n, velocity / n};
    }

    ConstrainedArc arc = make_constrained_arc(states, start, arc_end, params.R);
    if (matched) {
      arc.shared_velocity = cursor.v;
      arc.entry_positions[ctx.self] = cursor.p;
      for (AgentId j : interval.participants) arc.entry_positions[j] = expected.at(j).state(cursor_t).p;
    } else {
      const AgentState entry{arc.entry_positions.at(ctx.self), arc.shared_velocity};
      stitched.append({cursor_t, connect_states(cursor, entry, start - cursor_t), PieceKind::connection});
    }
    const SharedControl control = group_control(arc.shared_velocity, params, t_f - start);
    arc.control_slope = control.slope;
    arc.control_offset = control.offset;

    const TrajectoryMap before = expected;
    for (AgentId j : interval.participants) {
      expected[j] = arc_continuation(arc, j, before.at(j), cursor_t, others.at(j), t_f);
    }

    // Earliest feasible exit onto an unconstrained plan. Participants are
    // expected to leave the arc at the same instant. Without a safe exit
    // inside the interval the arc is held until one appears, the next
    // interval begins or the horizon ends.
    const bool last = &interval == &result.contacts.back();
    const double hold_until = last ? t_f : std::clamp((&interval + 1)->start, arc_end, t_f);
    ConstrainedArc held = arc;
    held.end = hold_until;
    const EscapeProblem escape_problem{problem, t_f};
    for (double t_exit = start + params.dt; t_exit < hold_until - kTimeEps; t_exit += params.dt) {
      ConstrainedArc cut = arc;
      cut.end = t_exit;
      TrajectoryMap leaving = expected;
      for (AgentId j : interval.participants) {
        leaving[j] = arc_continuation(cut, j, before.at(j), cursor_t, others.at(j), t_f);
      }
      auto escape = check_escape(held, ctx.self, t_exit, escape_problem, leaving, params);
      if (!escape) continue;
      stitched.append({start, arc_motion(cut, ctx.self), PieceKind::constrained});
      stitched.append({t_exit, *escape, PieceKind::escape});
      expected = std::move(leaving);
      result.arcs.push_back(cut);
      ++result.escapes;
      finished = true;
      break;
    }
    if (finished) break;

    for (AgentId j : interval.participants) {
      expected[j] = arc_continuation(held, j, before.at(j), cursor_t, others.at(j), t_f);
    }
    stitched.append({start, arc_motion(held, ctx.self), PieceKind::constrained});
    result.arcs.push_back(held);
    cursor = stitched.state(hold_until);
    cursor_t = hold_until;
  }

  if (!finished && cursor_t < t_f - kTimeEps) {
    stitched.append({cursor_t, solve_from(cursor, cursor_t), PieceKind::unconstrained});
  }
  if (stitched.empty()) {
    result.trajectory = own;
    result.residual_risk = true;
    return result;
  }
  result.trajectory = std::move(stitched);

  for (const auto &[id, traj] : expected) {
    if (violates(result.trajectory, traj, t0, t_f, params.R, params.dt)) {
      result.residual_risk = true;
      break;
    }
  }
  return result;
}

Vec2 saturate(const Vec2 &u, const Vec2 &v, const FlockParams &params, SaturationStats *stats) {
  Vec2 out = u;
  const double magnitude = norm(out);
  if (magnitude > params.u_max) {
    out *= params.u_max / magnitude;
    if (stats) ++stats->control_clips;
  }
  const double speed = norm(v);
  if (speed >= params.v_max && dot(out, v) > 0.0) {
    const Vec2 dir = v / speed;
    out -= dot(out, dir) * dir;
    if (stats) ++stats->speed_clips;
  }
  return out;
}

namespace {

PlanContext make_context(const RoundInput &input, AgentId self) {
  PlanContext ctx;
  ctx.self = self;
  ctx.snapshot = input.snapshot;
  ctx.centroid_velocity = input.centroid_velocity;
  ctx.params = input.params;
  if (input.params.mode == PlanningMode::exchange) {
    for (AgentId j : neighborhood(self, input.snapshot, input.params.h)) {
      if (auto it = input.previous_plans.find(j); it != input.previous_plans.end()) {
        ctx.previous_plans.emplace(j, it->second);
      }
    }
  }
  return ctx;
}

void attach_known(PlanContext &ctx, const std::vector<PiecewiseTrajectory> &unconstrained) {
  if (ctx.params.mode != PlanningMode::exchange) return;
  for (AgentId j : neighborhood(ctx.self, ctx.snapshot, ctx.params.h)) {
    if (j != ctx.self) ctx.known_trajs.emplace(j, unconstrained[j]);
  }
}

}  // namespace

std::vector<PlanResult> plan_round_serial(const RoundInput &input) {
  const std::size_t n = input.snapshot.size();
  std::vector<PlanContext> contexts;
  contexts.reserve(n);
  for (AgentId i = 0; i < n; ++i) contexts.push_back(make_context(input, i));

  std::vector<PiecewiseTrajectory> unconstrained(n);
  if (input.params.mode == PlanningMode::exchange) {
    for (AgentId i = 0; i < n; ++i) unconstrained[i] = unconstrained_plan(contexts[i]);
  }
  std::vector<PlanResult> out(n);
  for (AgentId i = 0; i < n; ++i) {
    attach_known(contexts[i], unconstrained);
    out[i] = plan(contexts[i]);
  }
  return out;
}

std::vector<PlanResult> plan_round_parallel(const RoundInput &input) {
  const auto n = static_cast<std::ptrdiff_t>(input.snapshot.size());
  std::vector<PlanContext> contexts(static_cast<std::size_t>(n));
  std::vector<PiecewiseTrajectory> unconstrained(static_cast<std::size_t>(n));
  std::vector<PlanResult> out(static_cast<std::size_t>(n));
  const bool exchange = input.params.mode == PlanningMode::exchange;

#pragma omp parallel
  {
#pragma omp for schedule(static)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
      const auto id = static_cast<AgentId>(i);
      contexts[id] = make_context(input, id);
      if (exchange) unconstrained[id] = unconstrained_plan(contexts[id]);
    }
    // Implicit barrier: every unconstrained plan exists before stitching.
#pragma omp for schedule(dynamic, 1)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
      const auto id = static_cast<AgentId>(i);
      attach_known(contexts[id], unconstrained);
      out[id] = plan(contexts[id]);
    }
  }
  return out;
}

void replan_loop(const FlockSnapshot &initial, const Vec2 &initial_centroid_velocity,
                 const FlockParams &params, double duration, const AdvanceWorld &advance,
                 const std::function<void(const PlanRound &)> &on_round, Execution execution) {
  if (duration < params.delta_t - kTimeEps) {
    throw std::invalid_argument("replan_loop: duration shorter than one replanning period");
  }
  const auto rounds = static_cast<std::size_t>(std::llround(std::floor(duration / params.delta_t + 1e-9)));
  RoundInput input{initial, {}, initial_centroid_velocity, params};
  const double t_start = initial.time;
  for (std::size_t k = 0; k < rounds; ++k) {
    const auto plans = plan_round(input, execution);
    if (on_round) on_round(PlanRound{k, input.snapshot.time, &plans});
    const double until = t_start + static_cast<double>(k + 1) * params.delta_t;
    WorldUpdate next = advance(input.snapshot, plans, until);
    input.snapshot = std::move(next.snapshot);
    input.centroid_velocity = next.centroid_velocity;
    input.previous_plans.clear();
    for (AgentId i = 0; i < plans.size(); ++i) input.previous_plans.emplace(i, plans[i].trajectory);
  }
}

}  // namespace flock
