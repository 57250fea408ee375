#include "ctsel/data/policy.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "ctsel/common/error.hpp"

namespace ctsel::data {

std::string_view to_string(PolicyAdjustment adjustment) {
  return adjustment == PolicyAdjustment::covid_multiplicative ? "covid-multiplicative" : "cvs-constant";
}

PolicyAdjustment policy_adjustment_from_string(std::string_view name) {
  if (name == "covid-multiplicative") return PolicyAdjustment::covid_multiplicative;
  if (name == "cvs-constant") return PolicyAdjustment::cvs_constant;
  throw ValidationError("unknown policy adjustment '" + std::string(name) + "'");
}

PolicyAdjustment default_adjustment(sim::System system) {
  return system == sim::System::covid ? PolicyAdjustment::covid_multiplicative : PolicyAdjustment::cvs_constant;
}

void DosePolicyConfig::validate() const {
  if (!(alpha >= 1.0) || !std::isfinite(alpha)) throw ValidationError("policy: alpha must be >= 1");
  if (!(d_w0 > 0.0 && d_w0 < 1.0)) throw ValidationError("policy: d_w0 must lie in (0, 1)");
  if (!(dose_scale > 0.0) || !std::isfinite(dose_scale)) throw ValidationError("policy: dose_scale must be > 0");
}

sim::StateVector sample_initial_conditions(sim::System system, Rng& rng) {
  if (system == sim::System::cvs) {
    auto unif = [&rng](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
    const double sv = unif(0.9, 1.0);
    const double pa = unif(0.75, 0.85);
    const double pv = unif(0.3, 0.7);
    const double s = unif(0.15, 0.25);
    return {sv, pa, pv, s};
  }
  std::exponential_distribution<double> expo(0.01);
  sim::StateVector z{};
  for (double& c : z) c = expo(rng);
  return z;
}

double beta_shape(double alpha, double d_w) { return (alpha - 1.0) / d_w + 2.0 - alpha; }

double sample_cycle_dose(const DosePolicyConfig& policy, double d_w, Rng& rng) {
  if (!(d_w >= kCenterMin && d_w <= kCenterMax))
    throw ValidationError("sample_cycle_dose: d_w = " + std::to_string(d_w) + " outside [0.01, 0.99]");
  const double beta = beta_shape(policy.alpha, d_w);
  if (!(beta > 0.0)) throw ValidationError("sample_cycle_dose: beta shape " + std::to_string(beta) + " <= 0");
  std::gamma_distribution<double> ga(policy.alpha, 1.0);
  std::gamma_distribution<double> gb(beta, 1.0);
  for (;;) {
    const double u = ga(rng);
    const double v = gb(rng);
    const double theta = u / (u + v);
    if (theta > 0.0 && theta < 1.0) return theta;
  }
}

double update_policy_center(double d_w, double outcome_now, double outcome_prev, PolicyAdjustment adjustment) {
  double next = d_w;
  if (adjustment == PolicyAdjustment::covid_multiplicative) next = outcome_now >= outcome_prev ? d_w * 1.1 : d_w * 0.9;
  return std::clamp(next, kCenterMin, kCenterMax);
}

}  // namespace ctsel::data
