#pragma once

#include <string_view>

#include "ctsel/common/rng.hpp"
#include "ctsel/sim/dynamics.hpp"

namespace ctsel::data {

/// How the policy center d_w moves between cycles.
enum class PolicyAdjustment {
  covid_multiplicative,  // x1.1 when the outcome did not decrease, x0.9 otherwise
  cvs_constant,          // d_w stays at its initial value
};

std::string_view to_string(PolicyAdjustment adjustment);
PolicyAdjustment policy_adjustment_from_string(std::string_view name);
PolicyAdjustment default_adjustment(sim::System system);

/// Beta-distributed cycle-start dose policy. alpha = 1 removes confounding;
/// larger alpha concentrates doses around the (outcome-driven) center d_w.
struct DosePolicyConfig {
  double alpha = 2.0;
  double d_w0 = 0.5;
  PolicyAdjustment adjustment = PolicyAdjustment::covid_multiplicative;
  double dose_scale = 1.0;

  void validate() const;
  bool operator==(const DosePolicyConfig&) const = default;
};

inline constexpr double kCenterMin = 0.01;
inline constexpr double kCenterMax = 0.99;

sim::StateVector sample_initial_conditions(sim::System system, Rng& rng);

/// Beta shape parameter matching a policy center: (alpha - 1) / d_w + 2 - alpha.
double beta_shape(double alpha, double d_w);

/// theta ~ Beta(alpha, beta(d_w)), strictly inside (0, 1).
double sample_cycle_dose(const DosePolicyConfig& policy, double d_w, Rng& rng);

double update_policy_center(double d_w, double outcome_now, double outcome_prev, PolicyAdjustment adjustment);

}  // namespace ctsel::data
