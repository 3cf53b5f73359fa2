#include "flock/trajectory.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace flock {

const char *to_string(PieceKind kind) {
  switch (kind) {
    case PieceKind::unconstrained: return "unconstrained";
    case PieceKind::connection: return "connection";
    case PieceKind::constrained: return "constrained";
    case PieceKind::escape: return "escape";
    case PieceKind::extrapolated: return "extrapolated";
  }
  return "unknown";
}

PiecewiseTrajectory::PiecewiseTrajectory(std::vector<Piece> pieces) : pieces_(std::move(pieces)) {}

PiecewiseTrajectory PiecewiseTrajectory::single(double start, const CubicCoeffs &coeffs,
                                                PieceKind kind) {
  return PiecewiseTrajectory({Piece{start, coeffs, kind}});
}

PiecewiseTrajectory PiecewiseTrajectory::ballistic(const AgentState &state, double start,
                                                   double end) {
  CubicCoeffs c;
  c.c = state.v;
  c.d = state.p;
  c.t_end = end - start;
  return single(start, c, PieceKind::extrapolated);
}

double PiecewiseTrajectory::t_begin() const {
  if (pieces_.empty()) throw std::logic_error("empty trajectory");
  return pieces_.front().start;
}

double PiecewiseTrajectory::t_end() const {
  if (pieces_.empty()) throw std::logic_error("empty trajectory");
  return pieces_.back().end();
}

const Piece &PiecewiseTrajectory::piece_at(double t) const {
  if (pieces_.empty()) throw std::logic_error("empty trajectory");
  // Last piece whose start is <= t.
  auto it = std::upper_bound(pieces_.begin(), pieces_.end(), t,
                             [](double value, const Piece &p) { return value < p.start; });
  if (it == pieces_.begin()) return pieces_.front();
  return *std::prev(it);
}

KinematicSample PiecewiseTrajectory::sample(double t) const {
  const double tc = std::clamp(t, t_begin(), t_end());
  const Piece &p = piece_at(tc);
  return eval_unchecked(p.coeffs, std::clamp(tc - p.start, 0.0, p.coeffs.t_end));
}

AgentState PiecewiseTrajectory::state(double t) const {
  const auto s = sample(t);
  return {s.p, s.v};
}

KinematicSample PiecewiseTrajectory::sample_extrapolated(double t) const {
  const double end = t_end();
  if (t <= end) return sample(t);
  const auto s = sample(end);
  return {s.p + s.v * (t - end), s.v, Vec2{}};
}

void PiecewiseTrajectory::append(const Piece &piece) { pieces_.push_back(piece); }

double PiecewiseTrajectory::continuity_error() const {
  double worst = 0.0;
  for (std::size_t k = 1; k < pieces_.size(); ++k) {
    const Piece &prev = pieces_[k - 1];
    const auto a = eval_unchecked(prev.coeffs, prev.coeffs.t_end);
    const auto b = eval_unchecked(pieces_[k].coeffs, 0.0);
    worst = std::max({worst, norm(a.p - b.p), norm(a.v - b.v)});
  }
  return worst;
}

double PiecewiseTrajectory::tiling_error() const {
  double worst = 0.0;
  for (std::size_t k = 1; k < pieces_.size(); ++k) {
    worst = std::max(worst, std::abs(pieces_[k].start - pieces_[k - 1].end()));
  }
  return worst;
}

PiecewiseTrajectory PiecewiseTrajectory::clip(double from, double to) const {
  std::vector<Piece> out;
  for (const Piece &p : pieces_) {
    const double lo = std::max(from, p.start);
    const double hi = std::min(to, p.end());
    if (hi <= lo) continue;
    Piece cut{lo, tail(p.coeffs, lo - p.start), p.kind};
    cut.coeffs.t_end = hi - lo;
    out.push_back(cut);
  }
  return PiecewiseTrajectory(std::move(out));
}

double PiecewiseTrajectory::energy_between(double from, double to) const {
  double total = 0.0;
  for (const Piece &p : pieces_) {
    const double lo = std::max(from, p.start);
    const double hi = std::min(to, p.end());
    if (hi <= lo) continue;
    CubicCoeffs window = p.coeffs;
    window.t_start = lo - p.start;
    window.t_end = hi - p.start;
    total += energy(window);
  }
  return total;
}

}  // namespace flock
