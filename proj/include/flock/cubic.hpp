#pragma once

// Unconstrained energy-optimal arcs: p(t) = a t^3/6 + b t^2/2 + c t + d on a
// local clock starting at 0, and the two boundary-value problems built on them.

#include <span>
#include <vector>

#include "flock/model.hpp"
#include "flock/vec2.hpp"

namespace flock {

struct CubicCoeffs {
  Vec2 a, b, c, d;
  double t_start = 0.0;
  double t_end = 0.0;

  double duration() const { return t_end - t_start; }
};

struct KinematicSample {
  Vec2 p, v, u;
};

// Throws std::out_of_range when t lies outside [t_start, t_end].
KinematicSample eval(const CubicCoeffs &coeffs, double t);
// No range check; used for extrapolation past the arc ends.
KinematicSample eval_unchecked(const CubicCoeffs &coeffs, double t);

// lambda_p = a (constant), lambda_v(t) = -a t - b.
Costates costates(const CubicCoeffs &coeffs, double t);

// Hermite cubic matching position and velocity at both ends.
// Throws std::invalid_argument for duration <= 0.
CubicCoeffs connect_states(const AgentState &from, const AgentState &to, double duration);

// Same motion re-based so that local time `t_from` becomes 0.
CubicCoeffs tail(const CubicCoeffs &coeffs, double t_from);

// Closed-form integral of |u|^2 over [t_start, t_end].
double energy(const CubicCoeffs &coeffs);

// Everything the terminal problem needs besides the initial state.
struct TerminalProblem {
  std::vector<Vec2> targets;  // predicted neighbor positions at t_f (or the centroid)
  Vec2 v_avg;
};

enum class BvpStatus { zero_branch, newton, fixed_point, degraded };

const char *to_string(BvpStatus status);

struct BvpResult {
  CubicCoeffs coeffs;
  BvpStatus status = BvpStatus::zero_branch;
  int iterations = 0;
  double residual = 0.0;  // |bc3 residual| at the returned a

  bool degraded() const { return status == BvpStatus::degraded; }
};

struct BvpSolverSettings {
  double fd_step = 1e-6;
  double tolerance = 1e-8;
  int newton_max_iterations = 50;
  double fixed_point_damping = 0.5;
  int fixed_point_max_iterations = 200;
  double zero_branch_threshold = 1e-9;
};

// b, c, d from the initial state and the terminal velocity condition for a
// given a. The remaining condition on a is the position costate fixed point.
CubicCoeffs coefficients_for_a(const Vec2 &a, const AgentState &x0, const Vec2 &v_avg,
                               const FlockParams &params, double horizon);

// Free-terminal problem with flocking cost. The returned cubic starts at x0,
// satisfies u(t_f) = -2 w2 (v(t_f) - v_avg) - 2 w1 (v(t_f) - v_d) and makes
// a equal to the position costate at t_f.
BvpResult solve_terminal_bvp(const AgentState &x0, std::span<const Vec2> targets,
                             const Vec2 &v_avg, const FlockParams &params, double horizon,
                             const BvpSolverSettings &settings = {});

BvpResult solve_terminal_bvp(const AgentState &x0, const TerminalProblem &problem,
                             const FlockParams &params, double horizon,
                             const BvpSolverSettings &settings = {});

// Residuals of the eight boundary conditions.
struct BoundaryResiduals {
  double initial = 0.0;    // max(|p(0) - p0|, |v(0) - v0|)
  double terminal_v = 0.0; // |u(t_f) + lambda_v(t_f)|
  double terminal_p = 0.0; // |a - lambda_p(t_f)|
};

BoundaryResiduals boundary_residuals(const CubicCoeffs &coeffs, const AgentState &x0,
                                     std::span<const Vec2> targets, const Vec2 &v_avg,
                                     const FlockParams &params);

// Terminal cost plus control energy of one candidate arc.
double total_cost(const CubicCoeffs &coeffs, std::span<const Vec2> targets, const Vec2 &v_avg,
                  const FlockParams &params);

}  // namespace flock
