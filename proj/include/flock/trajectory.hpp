#pragma once

#include <map>
#include <vector>

#include "flock/cubic.hpp"

namespace flock {

enum class PieceKind { unconstrained, connection, constrained, escape, extrapolated };

const char *to_string(PieceKind kind);

// One arc on absolute time [start, start + coeffs.t_end]; coeffs use a local clock.
struct Piece {
  double start = 0.0;
  CubicCoeffs coeffs;
  PieceKind kind = PieceKind::unconstrained;

  double end() const { return start + coeffs.t_end; }
};

// Ordered arcs tiling [t_begin, t_end] with continuous position and velocity.
class PiecewiseTrajectory {
 public:
  PiecewiseTrajectory() = default;
  explicit PiecewiseTrajectory(std::vector<Piece> pieces);

  static PiecewiseTrajectory single(double start, const CubicCoeffs &coeffs,
                                    PieceKind kind = PieceKind::unconstrained);
  // Constant-velocity motion from `state` over [start, end].
  static PiecewiseTrajectory ballistic(const AgentState &state, double start, double end);

  const std::vector<Piece> &pieces() const { return pieces_; }
  bool empty() const { return pieces_.empty(); }
  double t_begin() const;
  double t_end() const;

  // Clamps t into the span.
  KinematicSample sample(double t) const;
  AgentState state(double t) const;
  // Extends past the span end with constant velocity.
  KinematicSample sample_extrapolated(double t) const;

  void append(const Piece &piece);

  // Max position/velocity jump across interior joints, and largest gap or overlap.
  double continuity_error() const;
  double tiling_error() const;

  // The part of the trajectory on [from, to]; pieces are cut with re-based clocks.
  PiecewiseTrajectory clip(double from, double to) const;

  // Closed-form control energy over [from, to].
  double energy_between(double from, double to) const;

 private:
  const Piece &piece_at(double t) const;

  std::vector<Piece> pieces_;
};

using TrajectoryMap = std::map<AgentId, PiecewiseTrajectory>;

}  // namespace flock
