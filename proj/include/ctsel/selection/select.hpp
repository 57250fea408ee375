#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "ctsel/data/policy.hpp"
#include "ctsel/selection/constraints.hpp"
#include "ctsel/uncertainty/ensemble.hpp"

namespace ctsel::selection {

struct SelectionConfig {
  double lambda = 0.0;
  double mse_weight = 0.02;
  /// Desired outcomes y*_{t+1..t+tau}.
  std::vector<double> target;
  Constraint constraint;
  std::size_t steps = 50;
  double lr = 0.1;
  double weight_decay = 0.01;
  /// Doses the raw parameters are initialised to map onto (length tau).
  std::vector<double> initial_doses;
  std::uint64_t seed = 0;

  void validate(std::size_t horizon) const;
};

/// Constant default target: CVS venous pressure 0.6, COVID Z1 0.
double default_target(sim::System system);

/// The dose the observational policy would apply next: d_w * dose_scale.
std::vector<double> policy_initial_doses(const sim::PatientHistory& history, const data::DosePolicyConfig& policy,
                                         const sim::TimeGrid& grid, std::size_t horizon);

struct SelectionResult {
  std::vector<double> a_star;      // v(raw_params)
  std::vector<double> raw_params;
  std::vector<double> objective_trace;  // one entry per evaluated iterate, steps + 1
  std::vector<double> best_trace;       // running minimum of objective_trace
  std::size_t best_step = 0;
  double best_objective = 0.0;
  /// Iterates at which a range clamp had every component on a bound.
  std::size_t saturated_steps = 0;
  uncertainty::UncertaintyEstimate final_estimate;
};

/// Seed of the stochastic passes used at optimisation step `step`.
std::uint64_t step_seed(std::uint64_t seed, std::size_t step);
/// Seed of the passes used for the reported estimate at a*.
std::uint64_t evaluation_seed(std::uint64_t seed);

/// L = mse_weight * mean((mu - y*)^2) + lambda * mean(var), on the tape.
ad::Var selection_objective(const uncertainty::MomentVars& m, const std::vector<double>& target, double mse_weight,
                            double lambda);

/// AdamW on the raw treatment parameters u with a = v(u); returns the iterate
/// with the lowest recorded objective.
SelectionResult select_treatment(const uncertainty::EnsembleHandle& handle, const sim::PatientHistory& history,
                                 const SelectionConfig& config);
SelectionResult select_treatment(const uncertainty::BoundEnsemble& bound, const SelectionConfig& config);

}  // namespace ctsel::selection
