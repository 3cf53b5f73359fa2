#include "flock/cubic.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace flock {

namespace {

constexpr double kClockSlack = 1e-12;

}  // namespace

KinematicSample eval_unchecked(const CubicCoeffs &c, double t) {
  const double t2 = t * t;
  return {c.a * (t2 * t / 6.0) + c.b * (t2 / 2.0) + c.c * t + c.d,
          c.a * (t2 / 2.0) + c.b * t + c.c,
          c.a * t + c.b};
}

KinematicSample eval(const CubicCoeffs &c, double t) {
  const double slack = kClockSlack * std::max(1.0, std::abs(c.t_end));
  if (!(t >= c.t_start - slack && t <= c.t_end + slack)) {
    throw std::out_of_range("eval: t outside arc");
  }
  return eval_unchecked(c, std::clamp(t, c.t_start, c.t_end));
}

Costates costates(const CubicCoeffs &c, double t) { return {c.a, -(c.a * t) - c.b}; }

CubicCoeffs connect_states(const AgentState &from, const AgentState &to, double duration) {
  if (!(duration > 0.0)) throw std::invalid_argument("connect_states: duration must be positive");
  const double T = duration;
  const Vec2 dp = to.p - from.p - from.v * T;
  const Vec2 dv = to.v - from.v;
  CubicCoeffs out;
  out.a = (6.0 * T * dv - 12.0 * dp) / (T * T * T);
  out.b = dv / T - out.a * (T / 2.0);
  out.c = from.v;
  out.d = from.p;
  out.t_start = 0.0;
  out.t_end = T;
  return out;
}

CubicCoeffs tail(const CubicCoeffs &c, double t_from) {
  const auto s = eval_unchecked(c, t_from);
  CubicCoeffs out;
  out.a = c.a;
  out.b = s.u;
  out.c = s.v;
  out.d = s.p;
  out.t_start = 0.0;
  out.t_end = c.t_end - t_from;
  return out;
}

double energy(const CubicCoeffs &c) {
  const double ts = c.t_start, te = c.t_end;
  return squared_norm(c.a) * (te * te * te - ts * ts * ts) / 3.0 +
         dot(c.a, c.b) * (te * te - ts * ts) + squared_norm(c.b) * (te - ts);
}

const char *to_string(BvpStatus status) {
  switch (status) {
    case BvpStatus::zero_branch: return "zero_branch";
    case BvpStatus::newton: return "newton";
    case BvpStatus::fixed_point: return "fixed_point";
    case BvpStatus::degraded: return "degraded";
  }
  return "unknown";
}

CubicCoeffs coefficients_for_a(const Vec2 &a, const AgentState &x0, const Vec2 &v_avg,
                               const FlockParams &params, double horizon) {
  const double T = horizon;
  const double W = params.w1 + params.w2;
  const Vec2 g = params.w1 * (x0.v - params.v_d) + params.w2 * (x0.v - v_avg);
  CubicCoeffs out;
  out.a = a;
  out.b = -(a * (T + W * T * T) + 2.0 * g) / (1.0 + 2.0 * W * T);
  out.c = x0.v;
  out.d = x0.p;
  out.t_start = 0.0;
  out.t_end = T;
  return out;
}

namespace {

struct Bc3Problem {
  const AgentState &x0;
  std::span<const Vec2> targets;
  const Vec2 &v_avg;
  const FlockParams &params;
  double horizon;

  Vec2 residual(const Vec2 &a) const {
    const auto coeffs = coefficients_for_a(a, x0, v_avg, params, horizon);
    const auto end = eval_unchecked(coeffs, horizon);
    const Costates lam = terminal_cost_gradient({end.p, end.v}, targets, v_avg, params);
    return a - lam.lambda_p;
  }
};

}  // namespace

BvpResult solve_terminal_bvp(const AgentState &x0, std::span<const Vec2> targets,
                             const Vec2 &v_avg, const FlockParams &params, double horizon,
                             const BvpSolverSettings &settings) {
  if (!(horizon > 0.0)) throw std::invalid_argument("solve_terminal_bvp: horizon must be positive");
  const Bc3Problem problem{x0, targets, v_avg, params, horizon};
  BvpResult result;
  auto finish = [&](const Vec2 &a, BvpStatus status, int iterations) {
    result.coeffs = coefficients_for_a(a, x0, v_avg, params, horizon);
    result.status = status;
    result.iterations = iterations;
    result.residual = norm(problem.residual(a));
    return result;
  };

  if (params.w3 == 0.0 || targets.empty()) return finish({}, BvpStatus::zero_branch, 0);
  const Vec2 r0 = problem.residual({});
  if (norm(r0) < settings.zero_branch_threshold) return finish({}, BvpStatus::zero_branch, 0);

  // Newton with a central-difference Jacobian and backtracking on |r|.
  Vec2 a;
  Vec2 r = r0;
  for (int it = 1; it <= settings.newton_max_iterations; ++it) {
    const double h = settings.fd_step;
    const Vec2 jx = (problem.residual(a + Vec2{h, 0.0}) - problem.residual(a - Vec2{h, 0.0})) / (2.0 * h);
    const Vec2 jy = (problem.residual(a + Vec2{0.0, h}) - problem.residual(a - Vec2{0.0, h})) / (2.0 * h);
    const double det = cross(jx, jy);
    if (!std::isfinite(det) || std::abs(det) < 1e-14) break;
    // Solve [jx jy] step = -r.
    const Vec2 step{-(r.x * jy.y - r.y * jy.x) / det, -(jx.x * r.y - jx.y * r.x) / det};
    double lambda = 1.0;
    Vec2 trial = a + step;
    Vec2 r_trial = problem.residual(trial);
    while (norm(r_trial) >= norm(r) && lambda > 1e-4) {
      lambda *= 0.5;
      trial = a + lambda * step;
      r_trial = problem.residual(trial);
    }
    if (!is_finite(r_trial)) break;
    a = trial;
    r = r_trial;
    if (norm(r) <= settings.tolerance) return finish(a, BvpStatus::newton, it);
  }

  // Damped fixed point on a <- lambda_p(a).
  a = {};
  for (int it = 1; it <= settings.fixed_point_max_iterations; ++it) {
    const Vec2 target = a - problem.residual(a);
    a = (1.0 - settings.fixed_point_damping) * a + settings.fixed_point_damping * target;
    if (!is_finite(a)) break;
    if (norm(problem.residual(a)) <= settings.tolerance) return finish(a, BvpStatus::fixed_point, it);
  }

  return finish({}, BvpStatus::degraded, settings.newton_max_iterations + settings.fixed_point_max_iterations);
}

BvpResult solve_terminal_bvp(const AgentState &x0, const TerminalProblem &problem,
                             const FlockParams &params, double horizon,
                             const BvpSolverSettings &settings) {
  return solve_terminal_bvp(x0, problem.targets, problem.v_avg, params, horizon, settings);
}

BoundaryResiduals boundary_residuals(const CubicCoeffs &coeffs, const AgentState &x0,
                                     std::span<const Vec2> targets, const Vec2 &v_avg,
                                     const FlockParams &params) {
  const auto start = eval_unchecked(coeffs, coeffs.t_start);
  const auto end = eval_unchecked(coeffs, coeffs.t_end);
  const Costates lam = terminal_cost_gradient({end.p, end.v}, targets, v_avg, params);
  BoundaryResiduals out;
  out.initial = std::max(norm(start.p - x0.p), norm(start.v - x0.v));
  out.terminal_v = norm(end.u + lam.lambda_v);
  out.terminal_p = norm(coeffs.a - lam.lambda_p);
  return out;
}

double total_cost(const CubicCoeffs &coeffs, std::span<const Vec2> targets, const Vec2 &v_avg,
                  const FlockParams &params) {
  const auto end = eval_unchecked(coeffs, coeffs.t_end);
  return terminal_cost({end.p, end.v}, targets, v_avg, params) + energy(coeffs);
}

}  // namespace flock
