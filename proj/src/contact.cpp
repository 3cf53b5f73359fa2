#include "flock/contact.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <utility>

namespace flock {

TangencyVector tangency(const Vec2 &s, const Vec2 &s_dot, const Vec2 &s_ddot, double R) {
  return {4.0 * R * R - dot(s, s), -dot(s, s_dot), -dot(s, s_ddot) - dot(s_dot, s_dot)};
}

ContactBasis contact_basis(const Vec2 &s, const Vec2 &s_dot, double R) {
  const double dist = norm(s);
  if (std::abs(dist - 2.0 * R) > 1e-6 * 2.0 * R) {
    throw std::invalid_argument("contact_basis: agents are not in contact (|s| != 2R)");
  }
  const double speed = norm(s_dot);
  if (!(speed > 1e-9)) {
    throw std::domain_error("contact_basis: zero relative speed, basis undefined");
  }
  ContactBasis out;
  out.p_hat = s / (2.0 * R);
  out.q_hat = s_dot / speed;
  out.relative_speed = speed;
  if (std::abs(dot(out.p_hat, out.q_hat)) > 1e-6) {
    throw std::invalid_argument("contact_basis: relative velocity is not tangent to the contact");
  }
  return out;
}

namespace {

using Window = std::pair<double, double>;

struct PairGeometry {
  const PiecewiseTrajectory &a;
  const PiecewiseTrajectory &b;
  double threshold;  // separation below this is a violation

  Vec2 s(double t) const { return b.sample(t).p - a.sample(t).p; }
  double gap(double t) const { return norm(s(t)) - threshold; }
  // d/dt |s|^2 / 2
  double closing(double t) const {
    const auto sa = a.sample(t), sb = b.sample(t);
    return dot(sb.p - sa.p, sb.v - sa.v);
  }
};

std::vector<double> grid(double from, double to, double dt) {
  const double span = to - from;
  const auto n = static_cast<std::size_t>(std::max(1.0, std::ceil(span / dt - 1e-9)));
  std::vector<double> t(n + 1);
  for (std::size_t k = 0; k <= n; ++k) t[k] = from + span * static_cast<double>(k) / static_cast<double>(n);
  t[n] = to;
  return t;
}

// Returns (last time with gap >= 0, first time with gap < 0) or the reverse,
// bracketing the sign change of gap between lo and hi.
Window bisect(const PairGeometry &g, double lo, double hi, double tol) {
  const bool lo_violating = g.gap(lo) < 0.0;
  while (hi - lo > tol) {
    const double mid = 0.5 * (lo + hi);
    if ((g.gap(mid) < 0.0) == lo_violating) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return {lo, hi};
}

// Golden-section minimum of the gap on [lo, hi].
std::pair<double, double> min_gap(const PairGeometry &g, double lo, double hi, double tol) {
  constexpr double kInvPhi = 0.6180339887498949;
  double x1 = hi - kInvPhi * (hi - lo), x2 = lo + kInvPhi * (hi - lo);
  double f1 = g.gap(x1), f2 = g.gap(x2);
  while (hi - lo > tol) {
    if (f1 < f2) {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - kInvPhi * (hi - lo);
      f1 = g.gap(x1);
    } else {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + kInvPhi * (hi - lo);
      f2 = g.gap(x2);
    }
  }
  return f1 < f2 ? std::pair{x1, f1} : std::pair{x2, f2};
}

std::vector<Window> violation_windows(const PairGeometry &g, double from, double to, double dt,
                                      bool stop_at_first) {
  std::vector<Window> out;
  const auto t = grid(from, to, dt);
  const double tol = dt / 100.0;
  std::vector<double> gap(t.size());
  for (std::size_t k = 0; k < t.size(); ++k) gap[k] = g.gap(t[k]);

  bool inside = gap[0] < 0.0;
  double open = from;
  for (std::size_t k = 0; k + 1 < t.size(); ++k) {
    const bool left = gap[k] < 0.0, right = gap[k + 1] < 0.0;
    if (!left && right) {
      open = bisect(g, t[k], t[k + 1], tol).first;
      inside = true;
    } else if (left && !right) {
      out.emplace_back(open, bisect(g, t[k], t[k + 1], tol).second);
      inside = false;
    } else if (!left && !right && g.closing(t[k]) < 0.0 && g.closing(t[k + 1]) > 0.0) {
      const auto [t_min, f_min] = min_gap(g, t[k], t[k + 1], tol / 10.0);
      if (f_min < 0.0) {
        out.emplace_back(bisect(g, t[k], t_min, tol).first, bisect(g, t_min, t[k + 1], tol).second);
      }
    }
    if (stop_at_first && (inside || !out.empty())) {
      if (inside) out.emplace_back(open, to);
      return out;
    }
  }
  if (inside) out.emplace_back(open, to);
  return out;
}

void require_matching_span(const PiecewiseTrajectory &own, const PiecewiseTrajectory &other) {
  if (std::abs(own.t_begin() - other.t_begin()) > 1e-9 ||
      std::abs(own.t_end() - other.t_end()) > 1e-9) {
    throw std::invalid_argument("detect_contacts: mismatched horizons");
  }
}

}  // namespace

std::vector<ContactInterval> detect_contacts(const PiecewiseTrajectory &own,
                                             const TrajectoryMap &neighbors,
                                             const FlockParams &params) {
  const double from = own.t_begin(), to = own.t_end();
  const double threshold = 2.0 * params.R - kContactSlack;

  std::map<AgentId, std::vector<Window>> windows;
  std::vector<double> cuts{from, to};
  for (const auto &[id, traj] : neighbors) {
    require_matching_span(own, traj);
    auto w = violation_windows(PairGeometry{own, traj, threshold}, from, to, params.dt, false);
    if (w.empty()) continue;
    for (const auto &[lo, hi] : w) {
      cuts.push_back(lo);
      cuts.push_back(hi);
    }
    windows.emplace(id, std::move(w));
  }
  if (windows.empty()) return {};

  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());

  std::vector<ContactInterval> out;
  for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
    const double lo = cuts[k], hi = cuts[k + 1];
    if (hi <= lo) continue;
    const double mid = 0.5 * (lo + hi);
    std::vector<AgentId> members;
    for (const auto &[id, w] : windows) {
      for (const auto &[a, b] : w) {
        if (a <= mid && mid <= b) {
          members.push_back(id);
          break;
        }
      }
    }
    if (members.empty()) continue;
    if (!out.empty() && out.back().participants == members && out.back().end == lo) {
      out.back().end = hi;
    } else {
      out.push_back({lo, hi, std::move(members)});
    }
  }
  return out;
}

bool violates(const PiecewiseTrajectory &a, const PiecewiseTrajectory &b, double from, double to,
              double R, double dt) {
  if (to <= from) return false;
  return !violation_windows(PairGeometry{a, b, 2.0 * R - kContactSlack}, from, to, dt, true).empty();
}

double min_separation(const PiecewiseTrajectory &a, const PiecewiseTrajectory &b, double from,
                      double to, double dt) {
  const PairGeometry g{a, b, 0.0};
  const auto t = grid(from, to, dt);
  double best = g.gap(t[0]);
  for (std::size_t k = 0; k + 1 < t.size(); ++k) {
    best = std::min(best, g.gap(t[k + 1]));
    if (g.closing(t[k]) < 0.0 && g.closing(t[k + 1]) > 0.0) {
      best = std::min(best, min_gap(g, t[k], t[k + 1], dt / 1000.0).second);
    }
  }
  return best;
}

ConstrainedArc make_constrained_arc(const std::map<AgentId, AgentState> &entry_states, double start,
                                    double end, double R, const SharedControl &control) {
  if (!(end > start)) throw std::invalid_argument("make_constrained_arc: end must exceed start");
  if (entry_states.empty()) throw std::invalid_argument("make_constrained_arc: no participants");
  ConstrainedArc arc;
  arc.start = start;
  arc.end = end;
  arc.control_slope = control.slope;
  arc.control_offset = control.offset;
  Vec2 v_sum;
  for (const auto &[id, state] : entry_states) {
    v_sum += state.v;
    arc.entry_positions.emplace(id, state.p);
  }
  arc.shared_velocity = v_sum / static_cast<double>(entry_states.size());
  for (auto i = entry_states.begin(); i != entry_states.end(); ++i) {
    for (auto j = std::next(i); j != entry_states.end(); ++j) {
      if (norm(j->second.p - i->second.p) < 2.0 * R - kContactSlack) {
        throw std::invalid_argument("make_constrained_arc: entry separation below 2R");
      }
    }
  }
  return arc;
}

CubicCoeffs arc_motion(const ConstrainedArc &arc, AgentId id) {
  CubicCoeffs c;
  c.a = arc.control_slope;
  c.b = arc.control_offset;
  c.c = arc.shared_velocity;
  c.d = arc.entry_positions.at(id);
  c.t_start = 0.0;
  c.t_end = arc.duration();
  return c;
}

double arc_energy(const ConstrainedArc &arc) {
  CubicCoeffs c;
  c.a = arc.control_slope;
  c.b = arc.control_offset;
  c.t_end = arc.duration();
  return energy(c);
}

void separate_entries(std::map<AgentId, Vec2> &positions, double R) {
  const double target = 2.0 * R;
  for (int sweep = 0; sweep < 100; ++sweep) {
    bool moved = false;
    for (auto i = positions.begin(); i != positions.end(); ++i) {
      for (auto j = std::next(i); j != positions.end(); ++j) {
        const Vec2 s = j->second - i->second;
        const double r = norm(s);
        if (r >= target) continue;
        // Coincident points: separate along +x.
        const Vec2 dir = r > 0.0 ? s / r : Vec2{1.0, 0.0};
        const Vec2 mid = 0.5 * (i->second + j->second);
        i->second = mid - dir * R;
        j->second = mid + dir * R;
        moved = true;
      }
    }
    if (!moved) return;
  }
}

double OdeResiduals::max_abs() const {
  double m = 0.0;
  for (double x : r1) m = std::max(m, std::abs(x));
  for (double x : r2) m = std::max(m, std::abs(x));
  return m;
}

OdeResiduals ode_residuals(std::span<const double> a, std::span<const double> m, double R,
                           double dt) {
  if (a.size() < 5) throw std::invalid_argument("ode_residuals: need at least 5 samples");
  if (a.size() != m.size()) throw std::invalid_argument("ode_residuals: series lengths differ");
  if (!(dt > 0.0)) throw std::invalid_argument("ode_residuals: dt must be positive");
  OdeResiduals out;
  const double dt2 = dt * dt, dt3 = dt2 * dt;
  for (std::size_t k = 2; k + 2 < a.size(); ++k) {
    const double av = a[k];
    const double a1 = (a[k + 1] - a[k - 1]) / (2.0 * dt);
    const double a2 = (a[k + 1] - 2.0 * a[k] + a[k - 1]) / dt2;
    const double a3 = (a[k + 2] - 2.0 * a[k + 1] + 2.0 * a[k - 1] - a[k - 2]) / (2.0 * dt3);
    const double mv = m[k];
    const double m1 = (m[k + 1] - m[k - 1]) / (2.0 * dt);
    const double m2 = (m[k + 1] - 2.0 * m[k] + m[k - 1]) / dt2;
    const double r1 = 4.0 * av * a2 / (2.0 * R) + 3.0 * a1 * a1 / (2.0 * R) + 2.0 * R * m2 -
                      av * av * av * av / (8.0 * R * R * R) - mv * av * av / (2.0 * R);
    const double r2 = mv * a1 + m1 * av + 6.0 * av * av * a1 / (4.0 * R * R) - a3;
    out.r1.push_back(r1);
    out.r2.push_back(r2);
  }
  return out;
}

std::optional<CubicCoeffs> check_escape(const ConstrainedArc &arc, AgentId self, double t_exit,
                                        const EscapeProblem &problem, const TrajectoryMap &others,
                                        const FlockParams &params) {
  if (t_exit < arc.start || t_exit > arc.end) {
    throw std::invalid_argument("check_escape: t_exit outside the arc");
  }
  const double remaining = problem.t_final - t_exit;
  if (!(remaining > 0.0)) return std::nullopt;
  const auto at_exit = eval_unchecked(arc_motion(arc, self), t_exit - arc.start);
  const auto candidate =
      solve_terminal_bvp({at_exit.p, at_exit.v}, problem.terminal, params, remaining).coeffs;
  if (t_exit >= arc.end) return candidate;

  const auto traj = PiecewiseTrajectory::single(t_exit, candidate, PieceKind::escape);
  for (const auto &[id, other] : others) {
    if (id == self) continue;
    if (violates(traj, other, t_exit, problem.t_final, params.R, params.dt)) return std::nullopt;
  }
  return candidate;
}

namespace {

struct HalfPlane {
  Vec2 n;  // n . u <= b
  double b;
};

double worst_violation(const Vec2 &u, const std::vector<HalfPlane> &constraints) {
  double worst = 0.0;
  for (const auto &c : constraints) worst = std::max(worst, dot(c.n, u) - c.b);
  return worst;
}

}  // namespace

Vec2 guard_control(AgentId self, const Vec2 &u, const FlockSnapshot &sensed,
                   std::span<const Vec2> accel_estimates, const FlockParams &params,
                   bool *active) {
  if (active) *active = false;
  const AgentState &me = sensed.at(self);
  const double brake = 0.5 * params.u_max;
  std::vector<HalfPlane> constraints;
  for (AgentId j = 0; j < sensed.size(); ++j) {
    if (j == self) continue;
    const AgentState &other = sensed.states[j];
    const Vec2 s = other.p - me.p;
    const double r = norm(s);
    if (r >= params.h || r <= 0.0) continue;
    const Vec2 s_hat = s / r;
    const Vec2 s_dot = other.v - me.v;
    const double w = dot(s_hat, s_dot);  // range rate
    const double gap = std::max(r - 2.0 * params.R + kGuardBuffer, 1e-12);
    const double root = std::sqrt(4.0 * brake * gap);
    const double barrier = root + w;
    const double c = kGuardGain * barrier + 2.0 * brake * w / root + (squared_norm(s_dot) - w * w) / r;
    // Pair condition: s_hat . (a_j - u_i) >= -c, nominal excess shared.
    const double a_j = dot(s_hat, accel_estimates[j]);
    constraints.push_back({s_hat, 0.5 * (c + a_j + dot(s_hat, u))});
  }
  if (worst_violation(u, constraints) <= 0.0) return u;
  if (active) *active = true;

  // Exact 2D projection: best feasible point among single-constraint
  // projections and pairwise vertices.
  std::vector<Vec2> candidates;
  for (const auto &c : constraints) candidates.push_back(u - (dot(c.n, u) - c.b) * c.n);
  for (std::size_t a = 0; a < constraints.size(); ++a) {
    for (std::size_t b = a + 1; b < constraints.size(); ++b) {
      const HalfPlane &p = constraints[a], &q = constraints[b];
      const double det = cross(p.n, q.n);
      if (std::abs(det) < 1e-12) continue;
      candidates.push_back({(p.b * q.n.y - q.b * p.n.y) / det, (p.n.x * q.b - q.n.x * p.b) / det});
    }
  }
  const double tol = 1e-12;
  const Vec2 *best = nullptr;
  double best_dist = std::numeric_limits<double>::infinity();
  for (const Vec2 &cand : candidates) {
    if (worst_violation(cand, constraints) > tol) continue;
    const double d = squared_norm(cand - u);
    if (d < best_dist) {
      best_dist = d;
      best = &cand;
    }
  }
  if (best) return *best;
  const Vec2 *least = &candidates.front();
  for (const Vec2 &cand : candidates) {
    if (worst_violation(cand, constraints) < worst_violation(*least, constraints)) least = &cand;
  }
  return *least;
}

}  // namespace flock
