#pragma once

#include <span>
#include <string_view>
#include <vector>

#include "ctsel/ad/ops.hpp"

namespace ctsel::selection {

enum class ConstraintKind {
  range,               // centre, then clamp to [a, b]
  soft_discontinuous,  // alpha*A outside [-beta, beta], jumps at the band edge
  soft_continuous,     // sign(A) (beta + alpha (|A| - beta)) outside the band
  tanh,                // beta * tanh(A)
};

/// "range", "soft-discontinuous", "soft", "tanh".
std::string_view to_string(ConstraintKind kind);
ConstraintKind constraint_from_string(std::string_view name);

struct Constraint {
  ConstraintKind kind = ConstraintKind::soft_continuous;
  double lower = -1.0;  // range a
  double upper = 1.0;   // range b
  double alpha = 0.01;
  double beta = 4.0;

  void validate() const;
  bool operator==(const Constraint&) const = default;
};

std::vector<double> clamp_range(std::span<const double> a_traj, double a, double b);
std::vector<double> clamp_soft(std::span<const double> a_traj, double alpha, double beta, bool continuous);
std::vector<double> clamp_tanh(std::span<const double> a_traj, double beta);

/// v(u) on plain values.
std::vector<double> apply_constraint(std::span<const double> raw, const Constraint& c);

/// v(u) on the tape (1 x tau). The range clamp passes gradients straight
/// through the clamp; the soft clamps use their piecewise slopes.
ad::Var apply_constraint(ad::Var raw, const Constraint& c);

/// A raw value that maps to `dose` (used to warm-start the optimizer).
/// The range clamp centres the trajectory, so its inverse is the identity.
double invert_constraint(double dose, const Constraint& c);

/// True when every component of a range-clamped trajectory sits on a bound.
bool range_saturated(std::span<const double> raw, const Constraint& c);

}  // namespace ctsel::selection
