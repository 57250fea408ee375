#include "ctsel/selection/select.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "ctsel/ad/adamw.hpp"
#include "ctsel/common/error.hpp"
#include "ctsel/data/dataset.hpp"

namespace ctsel::selection {

namespace {

constexpr std::uint64_t kStepStream = 0;
constexpr std::uint64_t kEvaluationStream = 1;

std::string format_trace(const std::vector<double>& trace) {
  std::string s = "[";
  for (std::size_t i = 0; i < trace.size(); ++i) s += (i ? ", " : "") + std::to_string(trace[i]);
  return s + "]";
}

}  // namespace

void SelectionConfig::validate(std::size_t horizon) const {
  if (!(lambda >= 0.0)) throw ValidationError("uncertainty weight lambda must be >= 0, got " + std::to_string(lambda));
  if (!(mse_weight >= 0.0)) throw ValidationError("mse weight must be >= 0");
  if (steps < 1) throw ValidationError("selection needs at least one optimisation step");
  if (!(lr > 0.0)) throw ValidationError("selection learning rate must be positive");
  if (target.size() != horizon)
    throw ValidationError("target has " + std::to_string(target.size()) + " entries, horizon is " +
                          std::to_string(horizon));
  if (initial_doses.size() != horizon)
    throw ValidationError("initial doses have " + std::to_string(initial_doses.size()) + " entries, horizon is " +
                          std::to_string(horizon));
  constraint.validate();
}

double default_target(sim::System system) { return system == sim::System::cvs ? 0.6 : 0.0; }

std::vector<double> policy_initial_doses(const sim::PatientHistory& history, const data::DosePolicyConfig& policy,
                                         const sim::TimeGrid& grid, std::size_t horizon) {
  return std::vector<double>(horizon, data::policy_center_at(history, policy, grid) * policy.dose_scale);
}

std::uint64_t step_seed(std::uint64_t seed, std::size_t step) { return derive_seed(seed, {kStepStream, step}); }
std::uint64_t evaluation_seed(std::uint64_t seed) { return derive_seed(seed, {kEvaluationStream}); }

ad::Var selection_objective(const uncertainty::MomentVars& m, const std::vector<double>& target, double mse_weight,
                            double lambda) {
  ad::Tape& tape = *m.mu.tape;
  const ad::Var fit = ad::mse(m.mu, tape.constant(ad::Tensor::row(target)));
  return ad::add(ad::scale(fit, mse_weight), ad::scale(ad::mean(m.var), lambda));
}

SelectionResult select_treatment(const uncertainty::EnsembleHandle& handle, const sim::PatientHistory& history,
                                 const SelectionConfig& config) {
  return select_treatment(uncertainty::BoundEnsemble(handle, history), config);
}

SelectionResult select_treatment(const uncertainty::BoundEnsemble& bound, const SelectionConfig& config) {
  const std::size_t tau = bound.horizon();
  config.validate(tau);

  ad::Tensor u = ad::Tensor::row(std::vector<double>(tau));
  for (std::size_t i = 0; i < tau; ++i) u[i] = invert_constraint(config.initial_doses[i], config.constraint);
  ad::AdamWState state;
  const ad::AdamWConfig opt{config.lr, 0.9, 0.999, 1e-8, config.weight_decay};

  SelectionResult result;
  double best = std::numeric_limits<double>::infinity();
  ad::Tensor best_u = u;
  for (std::size_t step = 0; step <= config.steps; ++step) {
    double loss_value = 0.0;
    ad::Tensor grad;
    try {
      ad::Tape tape;
      const ad::Var raw = tape.input(u);
      const ad::Var a = apply_constraint(raw, config.constraint);
      const auto m = uncertainty::moments(bound.passes(tape, a, step_seed(config.seed, step)));
      const ad::Var loss = selection_objective(m, config.target, config.mse_weight, config.lambda);
      loss_value = loss.value().item();
      if (step < config.steps) {
        tape.backward(loss);
        grad = tape.grad(raw);
      }
    } catch (const NumericError& e) {
      throw NumericError("selection objective became non-finite at step " + std::to_string(step) +
                         "; trace so far " + format_trace(result.objective_trace) + ": " + e.what());
    }
    if (!std::isfinite(loss_value))
      throw NumericError("selection objective became non-finite at step " + std::to_string(step) +
                         "; trace so far " + format_trace(result.objective_trace));
    if (range_saturated(u.storage(), config.constraint)) ++result.saturated_steps;
    result.objective_trace.push_back(loss_value);
    if (loss_value < best) {
      best = loss_value;
      best_u = u;
      result.best_step = step;
    }
    result.best_trace.push_back(best);
    if (step < config.steps) ad::adamw_step(u, grad, state, opt);
  }

  result.raw_params = best_u.storage();
  result.a_star = apply_constraint(result.raw_params, config.constraint);
  result.best_objective = best;
  result.final_estimate = uncertainty::estimate(bound, result.a_star, evaluation_seed(config.seed));
  return result;
}

}  // namespace ctsel::selection
