#include <doctest.h>

#include <cmath>
#include <random>

#include "flock/planner.hpp"

using namespace flock;

namespace {

FlockParams head_on_params() {
  FlockParams p;
  p.n_agents = 2;
  p.R = 0.1;
  p.h = 3.0;
  p.D = 0.2;
  p.v_d = {0, 0};
  return p;
}

FlockSnapshot hexagon(double circumradius, Vec2 v) {
  FlockSnapshot s;
  for (int k = 0; k < 6; ++k) {
    const double th = k * 3.14159265358979323846 / 3.0;
    s.states.push_back({{circumradius * std::cos(th), circumradius * std::sin(th)}, v});
  }
  return s;
}

double min_distance(const PiecewiseTrajectory &a, const PiecewiseTrajectory &b, double from, double to,
                    double step) {
  double m = INFINITY;
  for (double t = from; t <= to + 1e-12; t += step) m = std::min(m, norm(b.sample(t).p - a.sample(t).p));
  return m;
}

bool identical(const PiecewiseTrajectory &a, const PiecewiseTrajectory &b) {
  if (a.pieces().size() != b.pieces().size()) return false;
  for (std::size_t k = 0; k < a.pieces().size(); ++k) {
    const auto &x = a.pieces()[k], &y = b.pieces()[k];
    if (x.start != y.start || x.kind != y.kind || x.coeffs.a != y.coeffs.a || x.coeffs.b != y.coeffs.b ||
        x.coeffs.c != y.coeffs.c || x.coeffs.d != y.coeffs.d || x.coeffs.t_end != y.coeffs.t_end)
      return false;
  }
  return true;
}

}  // namespace

TEST_CASE("isolated agents plan a single arc toward the centroid") {
  FlockParams p;
  p.n_agents = 2;
  p.h = 1.0;
  RoundInput in;
  in.params = p;
  in.snapshot.states = {{{0, 0}, {0.5, 0.2}}, {{3, 1}, {-0.3, 0}}};
  in.centroid_velocity = {0.1, 0.1};
  const auto plans = plan_round_serial(in);
  for (AgentId i = 0; i < 2; ++i) {
    REQUIRE(plans[i].trajectory.pieces().size() == 1);
    const std::vector<Vec2> targets{centroid(in.snapshot)};
    const auto ref = solve_terminal_bvp(in.snapshot.states[i], targets, in.centroid_velocity, p, p.horizon);
    const auto &c = plans[i].trajectory.pieces()[0].coeffs;
    CHECK(c.a == ref.coeffs.a);
    CHECK(c.b == ref.coeffs.b);
    CHECK(plans[i].contacts.empty());
  }
}

TEST_CASE("head-on pair: approach, constrained arc, departure") {
  RoundInput in;
  in.params = head_on_params();
  in.snapshot.states = {{{-0.6, 0}, {2, 0}}, {{0.6, 0}, {-2, 0}}};
  const auto plans = plan_round_serial(in);
  const auto &a = plans[0].trajectory, &b = plans[1].trajectory;
  CHECK(a.pieces().size() >= 3);
  REQUIRE(plans[0].arcs.size() == 1);
  const auto &arc = plans[0].arcs[0];
  CHECK(a.pieces().front().kind == PieceKind::connection);
  CHECK(a.pieces().back().kind != PieceKind::constrained);
  for (double t = arc.start; t <= arc.end; t += in.params.dt / 10) {
    CHECK(norm(b.sample(t).p - a.sample(t).p) == doctest::Approx(2 * in.params.R).epsilon(1e-9));
    CHECK(norm(b.sample(t).v - a.sample(t).v) < 1e-9);
  }
  CHECK(min_distance(a, b, a.t_begin(), a.t_end(), in.params.dt / 10) >= 2 * in.params.R - 1e-6);
  CHECK(a.continuity_error() < 1e-9);
  CHECK(a.tiling_error() < 1e-12);
  // Mirror symmetry about the origin.
  for (double t = a.t_begin(); t <= a.t_end(); t += 0.01) {
    CHECK(norm(a.sample(t).p + b.sample(t).p) < 1e-9);
    CHECK(norm(a.sample(t).v + b.sample(t).v) < 1e-9);
  }
}

TEST_CASE("equilibrium hexagon plans zero control") {
  FlockParams p;
  p.n_agents = 6;
  p.R = 0.1;
  p.h = 0.6;  // only the two hexagon neighbors at distance D are sensed
  p.D = 0.5;
  p.v_d = {1, 0};
  RoundInput in;
  in.params = p;
  in.snapshot = hexagon(p.D, p.v_d);
  in.centroid_velocity = p.v_d;
  const auto plans = plan_round_serial(in);
  for (const auto &r : plans) {
    CHECK(r.trajectory.energy_between(r.trajectory.t_begin(), r.trajectory.t_end()) < 1e-24);
    CHECK(r.contacts.empty());
  }
}

TEST_CASE("sensing targets are the sensed positions") {
  FlockParams p;
  p.n_agents = 3;
  p.h = 2.0;
  p.mode = PlanningMode::sensing;
  PlanContext ctx;
  ctx.params = p;
  ctx.self = 0;
  ctx.snapshot.states = {{{0, 0}, {1, 0}}, {{0.5, 0}, {0, 2}}, {{0, 0.7}, {-1, -1}}};
  const auto targets = sensing_terminal_targets(ctx);
  REQUIRE(targets.size() == 2);
  CHECK(targets[0] == Vec2{0.5, 0});
  CHECK(targets[1] == Vec2{0, 0.7});
  // The lag to the true ballistic finals is v_j * horizon.
  CHECK(norm((ctx.snapshot.states[1].p + ctx.snapshot.states[1].v * p.horizon - targets[0]) -
             ctx.snapshot.states[1].v * p.horizon) < 1e-15);

  // Static neighbors: the exchange-mode prediction from held plans agrees.
  for (auto &s : ctx.snapshot.states) s.v = {};
  PlanContext ex = ctx;
  ex.params.mode = PlanningMode::exchange;
  for (AgentId j = 0; j < 3; ++j)
    ex.previous_plans.emplace(j, PiecewiseTrajectory::ballistic(ctx.snapshot.states[j], 0.0, p.horizon));
  const auto a = terminal_problem(ctx), b = terminal_problem(ex);
  CHECK(a.targets == b.targets);
  CHECK(a.v_avg == b.v_avg);
}

TEST_CASE("saturate") {
  FlockParams p;
  p.u_max = 1.0;
  p.v_max = 2.0;
  SaturationStats stats;
  CHECK(saturate({0.3, 0.4}, {1, 0}, p, &stats) == Vec2{0.3, 0.4});
  CHECK(stats.control_clips == 0);
  const Vec2 s = saturate({3, 4}, {0, 0}, p, &stats);
  CHECK(s.x == doctest::Approx(0.6));
  CHECK(s.y == doctest::Approx(0.8));
  CHECK(stats.control_clips == 1);
  p.u_max = 10.0;
  const Vec2 t = saturate({1, 1}, {2, 0}, p, &stats);
  CHECK(t.x == doctest::Approx(0.0));
  CHECK(t.y == doctest::Approx(1.0));
  CHECK(stats.speed_clips == 1);
  // Braking at the speed cap is left alone.
  CHECK(saturate({-1, 0}, {2, 0}, p, &stats) == Vec2{-1, 0});
}

TEST_CASE("serial and parallel rounds are bit-identical") {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(0, 3), v(-1, 1);
  for (auto mode : {PlanningMode::exchange, PlanningMode::sensing}) {
    FlockParams p;
    p.n_agents = 12;
    p.R = 0.1;
    p.h = 1.0;
    p.mode = mode;
    RoundInput in;
    in.params = p;
    while (in.snapshot.states.size() < 12) {
      const Vec2 c{u(rng), u(rng)};
      bool ok = true;
      for (const auto &s : in.snapshot.states) ok = ok && norm(s.p - c) > 0.3;
      if (ok) in.snapshot.states.push_back({c, {v(rng), v(rng)}});
    }
    const auto a = plan_round_serial(in);
    const auto b = plan_round_parallel(in);
    const auto c = plan_round_serial(in);
    for (std::size_t i = 0; i < 12; ++i) {
      CHECK(identical(a[i].trajectory, b[i].trajectory));
      CHECK(identical(a[i].trajectory, c[i].trajectory));
    }
  }
}

TEST_CASE("stitched two-agent plans stay apart") {
  std::mt19937_64 rng(41);
  std::uniform_real_distribution<double> u(-1, 1);
  FlockParams p = head_on_params();
  int with_arcs = 0, at_risk = 0;
  for (int trial = 0; trial < 200; ++trial) {
    RoundInput in;
    in.params = p;
    p.D = 0.2 + 0.3 * (u(rng) + 1);
    const Vec2 a{u(rng), u(rng)};
    const Vec2 b{u(rng), u(rng)};
    if (norm(b - a) < 2 * p.R + 0.01) continue;
    in.params.D = p.D;
    // Mostly closing velocities so that many pairs meet within the horizon.
    const Vec2 toward = (b - a) / norm(b - a);
    in.snapshot.states = {{a, toward + 0.5 * Vec2{u(rng), u(rng)}}, {b, -toward + 0.5 * Vec2{u(rng), u(rng)}}};
    const auto plans = plan_round_serial(in);
    if (!plans[0].arcs.empty()) ++with_arcs;
    if (plans[0].residual_risk || plans[1].residual_risk) {
      ++at_risk;
      continue;
    }
    const auto &x = plans[0].trajectory, &y = plans[1].trajectory;
    CHECK(min_distance(x, y, x.t_begin(), x.t_end(), p.dt) >= 2 * p.R - 1e-6);
    CHECK(x.continuity_error() < 1e-9);
  }
  CHECK(with_arcs > 50);
  MESSAGE("pairs with arcs: ", with_arcs, ", flagged residual risk: ", at_risk);
  CHECK(at_risk * 10 < with_arcs);
}

TEST_CASE("replan_loop rounds") {
  FlockParams p;
  p.n_agents = 6;
  p.R = 0.1;
  p.h = 0.6;
  p.D = 0.5;
  p.v_d = {1, 0};
  const auto start = hexagon(p.D, p.v_d);
  std::vector<std::vector<PiecewiseTrajectory>> rounds;
  // Exact plan following.
  AdvanceWorld advance = [&](const FlockSnapshot &s, const std::vector<PlanResult> &plans, double until) {
    WorldUpdate w;
    w.snapshot.time = until;
    for (std::size_t i = 0; i < s.size(); ++i) w.snapshot.states.push_back(plans[i].trajectory.state(until));
    w.centroid_velocity = p.v_d;
    return w;
  };
  auto record = [&](const PlanRound &r) {
    std::vector<PiecewiseTrajectory> t;
    for (const auto &pl : *r.plans) t.push_back(pl.trajectory);
    rounds.push_back(std::move(t));
  };

  replan_loop(start, p.v_d, p, p.delta_t, advance, record);
  CHECK(rounds.size() == 1);

  rounds.clear();
  replan_loop(start, p.v_d, p, 1.0, advance, record);
  CHECK(rounds.size() == 10);
  for (std::size_t k = 1; k < rounds.size(); ++k) {
    for (std::size_t i = 0; i < 6; ++i) {
      const auto &c = rounds[k][i].pieces().front().coeffs;
      CHECK(norm(c.a) < 1e-12);
      CHECK(norm(c.b) < 1e-12);
      CHECK(norm(c.c - p.v_d) < 1e-12);
    }
  }
}
