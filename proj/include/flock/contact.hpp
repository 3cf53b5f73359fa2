#pragma once

// Safety-constraint machinery: tangency terms, contact intervals, the
// contact basis, matched-velocity arcs and the constrained-arc optimality
// residual oracle.

#include <map>
#include <optional>
#include <span>
#include <vector>

#include "flock/cubic.hpp"
#include "flock/model.hpp"
#include "flock/trajectory.hpp"

namespace flock {

// Separation below 2R - kContactSlack counts as a violation.
inline constexpr double kContactSlack = 1e-9;

struct TangencyVector {
  double n0 = 0.0;  // 4R^2 - s.s
  double n1 = 0.0;  // -s.s_dot
  double n2 = 0.0;  // -s.s_ddot - s_dot.s_dot
};

TangencyVector tangency(const Vec2 &s, const Vec2 &s_dot, const Vec2 &s_ddot, double R);

struct ContactBasis {
  Vec2 p_hat;
  Vec2 q_hat;
  double relative_speed = 0.0;
};

// Requires |s| = 2R (1e-6 relative), s.s_dot = 0 and |s_dot| > 1e-9.
ContactBasis contact_basis(const Vec2 &s, const Vec2 &s_dot, double R);

struct ContactInterval {
  double start = 0.0;
  double end = 0.0;
  std::vector<AgentId> participants;  // sorted, excludes the planning agent
};

// Maximal intervals over which the set of neighbors closer than 2R to `own`
// is nonempty and unchanged. Sampled at params.dt, boundaries bisected to
// params.dt / 100, with a per-sample-gap check for brief grazing dips.
std::vector<ContactInterval> detect_contacts(const PiecewiseTrajectory &own,
                                             const TrajectoryMap &neighbors,
                                             const FlockParams &params);

// True when the two trajectories come closer than 2R anywhere on [from, to].
bool violates(const PiecewiseTrajectory &a, const PiecewiseTrajectory &b, double from, double to,
              double R, double dt);

// Smallest sampled separation on [from, to] with the same refinement.
double min_separation(const PiecewiseTrajectory &a, const PiecewiseTrajectory &b, double from,
                      double to, double dt);

// Participants translate rigidly: common velocity, common affine control
// u(tau) = control_slope * tau + control_offset on the arc clock.
struct ConstrainedArc {
  double start = 0.0;
  double end = 0.0;
  Vec2 shared_velocity;
  std::map<AgentId, Vec2> entry_positions;
  Vec2 control_slope;
  Vec2 control_offset;

  double duration() const { return end - start; }
  bool contains(AgentId id) const { return entry_positions.count(id) != 0; }
};

struct SharedControl {
  Vec2 slope;
  Vec2 offset;
};

// Shared velocity is the mean of the entry velocities. With no shared control
// the arc is ballistic (u = 0). Throws if end <= start or if entry positions
// are closer than 2R - kContactSlack.
ConstrainedArc make_constrained_arc(const std::map<AgentId, AgentState> &entry_states, double start,
                                    double end, double R, const SharedControl &control = {});

// The participant's motion on the arc clock [0, duration].
CubicCoeffs arc_motion(const ConstrainedArc &arc, AgentId id);

// Per-participant control energy over the arc.
double arc_energy(const ConstrainedArc &arc);

// Pushes entry positions apart so every pair is at least 2R apart. Pairs are
// moved symmetrically along their separation direction.
void separate_entries(std::map<AgentId, Vec2> &positions, double R);

struct OdeResiduals {
  std::vector<double> r1;
  std::vector<double> r2;
  double max_abs() const;
};

// Residuals of the coupled relative-speed / multiplier equations that any
// energy-optimal constrained arc satisfies. Derivatives by central
// differences; output index k corresponds to input sample k + 2.
// Throws std::invalid_argument for fewer than 5 samples or mismatched lengths.
OdeResiduals ode_residuals(std::span<const double> a_series, std::span<const double> m_series,
                           double R, double dt);

// Terminal problem plus the absolute end time of the horizon.
struct EscapeProblem {
  TerminalProblem terminal;
  double t_final = 0.0;
};

// Unconstrained plan leaving `arc` at t_exit, or nothing when it would come
// within 2R of any trajectory in `others` before t_final. At t_exit = arc.end
// the post-arc plan is returned without the safety check.
std::optional<CubicCoeffs> check_escape(const ConstrainedArc &arc, AgentId self, double t_exit,
                                        const EscapeProblem &problem, const TrajectoryMap &others,
                                        const FlockParams &params);

// Reciprocal braking filter applied by each agent to its own control before
// execution. For every sensed neighbor the closing speed must stay below what
// a relative deceleration of u_max can absorb before the separation reaches
// 2R - kGuardBuffer. The neighbor is assumed to keep its estimated
// acceleration; any violation of the barrier condition by the pair is split
// evenly, so two agents running the same filter jointly satisfy it.
// Returns the control closest to `u` satisfying all constraints, or the least
// violating candidate when they are jointly infeasible. `active` reports
// whether `u` was changed.
inline constexpr double kGuardGain = 10.0;     // 1/s
inline constexpr double kGuardBuffer = 5e-4;   // m
Vec2 guard_control(AgentId self, const Vec2 &u, const FlockSnapshot &sensed,
                   std::span<const Vec2> accel_estimates, const FlockParams &params,
                   bool *active = nullptr);

}  // namespace flock
