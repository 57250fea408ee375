#include "ctsel/selection/constraints.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "ctsel/common/error.hpp"

namespace ctsel::selection {

namespace {

// Same summation order as ad::mean so tape and plain paths agree bitwise.
double trajectory_mean(std::span<const double> a) {
  double s = 0.0;
  for (double v : a) s += v;
  return s * (1.0 / static_cast<double>(a.size()));
}

double soft_value(double x, double alpha, double beta, bool continuous) {
  if (std::abs(x) <= beta) return x;
  if (!continuous) return alpha * x;
  return std::copysign(beta + alpha * (std::abs(x) - beta), x);
}

double soft_slope(double x, double alpha, double beta) { return std::abs(x) <= beta ? 1.0 : alpha; }

}  // namespace

std::string_view to_string(ConstraintKind kind) {
  switch (kind) {
    case ConstraintKind::range:
      return "range";
    case ConstraintKind::soft_discontinuous:
      return "soft-discontinuous";
    case ConstraintKind::soft_continuous:
      return "soft";
    case ConstraintKind::tanh:
      return "tanh";
  }
  return "unknown";
}

ConstraintKind constraint_from_string(std::string_view name) {
  if (name == "range") return ConstraintKind::range;
  if (name == "soft-discontinuous") return ConstraintKind::soft_discontinuous;
  if (name == "soft" || name == "soft-continuous") return ConstraintKind::soft_continuous;
  if (name == "tanh") return ConstraintKind::tanh;
  throw ValidationError("unknown constraint '" + std::string(name) + "' (expected range, soft, soft-discontinuous or tanh)");
}

void Constraint::validate() const {
  switch (kind) {
    case ConstraintKind::range:
      if (!(lower < upper)) throw ValidationError("range constraint needs a < b");
      break;
    case ConstraintKind::soft_discontinuous:
    case ConstraintKind::soft_continuous:
      if (!(alpha > 0.0 && alpha <= 1.0)) throw ValidationError("soft clamp alpha must lie in (0, 1]");
      [[fallthrough]];
    case ConstraintKind::tanh:
      if (!(beta > 0.0)) throw ValidationError("constraint beta must be positive");
      break;
  }
}

std::vector<double> clamp_range(std::span<const double> a_traj, double a, double b) {
  if (!(a < b)) throw ValidationError("range constraint needs a < b");
  const double m = trajectory_mean(a_traj);
  std::vector<double> out(a_traj.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::min(std::max(a_traj[i] - m, a), b);
  return out;
}

std::vector<double> clamp_soft(std::span<const double> a_traj, double alpha, double beta, bool continuous) {
  std::vector<double> out(a_traj.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = soft_value(a_traj[i], alpha, beta, continuous);
  return out;
}

std::vector<double> clamp_tanh(std::span<const double> a_traj, double beta) {
  std::vector<double> out(a_traj.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = beta * std::tanh(a_traj[i]);
  return out;
}

std::vector<double> apply_constraint(std::span<const double> raw, const Constraint& c) {
  switch (c.kind) {
    case ConstraintKind::range:
      return clamp_range(raw, c.lower, c.upper);
    case ConstraintKind::soft_discontinuous:
      return clamp_soft(raw, c.alpha, c.beta, false);
    case ConstraintKind::soft_continuous:
      return clamp_soft(raw, c.alpha, c.beta, true);
    case ConstraintKind::tanh:
      return clamp_tanh(raw, c.beta);
  }
  return {};
}

ad::Var apply_constraint(ad::Var raw, const Constraint& c) {
  switch (c.kind) {
    case ConstraintKind::range: {
      const ad::Var centered = ad::sub(raw, ad::mean(raw));
      const double lo = c.lower, hi = c.upper;
      return ad::unary(
          centered, [lo, hi](double x) { return std::min(std::max(x, lo), hi); }, [](double) { return 1.0; });
    }
    case ConstraintKind::soft_discontinuous:
    case ConstraintKind::soft_continuous: {
      const double alpha = c.alpha, beta = c.beta;
      const bool continuous = c.kind == ConstraintKind::soft_continuous;
      return ad::unary(
          raw, [=](double x) { return soft_value(x, alpha, beta, continuous); },
          [=](double x) { return soft_slope(x, alpha, beta); });
    }
    case ConstraintKind::tanh:
      return ad::scale(ad::tanh(raw), c.beta);
  }
  return raw;
}

double invert_constraint(double dose, const Constraint& c) {
  switch (c.kind) {
    case ConstraintKind::range:
      return dose;
    case ConstraintKind::soft_discontinuous:
      return std::abs(dose) <= c.beta ? dose : dose / c.alpha;
    case ConstraintKind::soft_continuous:
      return std::abs(dose) <= c.beta ? dose : std::copysign(c.beta + (std::abs(dose) - c.beta) / c.alpha, dose);
    case ConstraintKind::tanh: {
      const double r = std::clamp(dose / c.beta, -1.0 + 1e-9, 1.0 - 1e-9);
      return std::atanh(r);
    }
  }
  return dose;
}

bool range_saturated(std::span<const double> raw, const Constraint& c) {
  if (c.kind != ConstraintKind::range || raw.empty()) return false;
  const double m = trajectory_mean(raw);
  return std::all_of(raw.begin(), raw.end(), [&](double v) {
    const double x = v - m;
    return x <= c.lower || x >= c.upper;
  });
}

}  // namespace ctsel::selection
