#include "ctsel/data/dataset.hpp"

#include <iostream>
#include <utility>

#include "ctsel/common/error.hpp"

namespace ctsel::data {

namespace {

constexpr std::size_t kMaxAttempts = 100;

}  // namespace

std::string_view to_string(Split split) {
  switch (split) {
    case Split::train:
      return "train";
    case Split::val:
      return "val";
    case Split::test:
      return "test";
  }
  return "unknown";
}

GenerationConfig default_generation_config(sim::System system) {
  GenerationConfig c;
  c.system = system;
  c.policy.adjustment = default_adjustment(system);
  return c;
}

const std::vector<PatientTrajectory>& Dataset::split(Split s) const {
  switch (s) {
    case Split::train:
      return train;
    case Split::val:
      return val;
    case Split::test:
      return test;
  }
  return test;
}

std::vector<PatientTrajectory>& Dataset::split(Split s) {
  return const_cast<std::vector<PatientTrajectory>&>(std::as_const(*this).split(s));
}

std::uint64_t patient_seed(std::uint64_t master_seed, Split split, std::size_t index) {
  return derive_seed(master_seed, {static_cast<std::uint64_t>(split), index});
}

PatientTrajectory generate_patient(const GenerationConfig& config, std::uint64_t seed) {
  const sim::TimeGrid& grid = config.grid;
  grid.validate();
  config.policy.validate();
  Rng rng(seed);
  const sim::StateVector initial = sample_initial_conditions(config.system, rng);
  const std::size_t out = sim::outcome_channel(config.system);

  std::vector<sim::StateVector> states{initial};
  std::vector<double> doses;
  doses.reserve(grid.n_steps());
  double d_w = config.policy.d_w0;
  double prev_cycle_outcome = initial[out];
  bool first_cycle = true;

  std::size_t step = 0;
  while (step < grid.n_steps()) {
    const double outcome_now = states[step][out];
    if (!first_cycle) d_w = update_policy_center(d_w, outcome_now, prev_cycle_outcome, config.policy.adjustment);
    first_cycle = false;
    prev_cycle_outcome = outcome_now;
    const double dose = sample_cycle_dose(config.policy, d_w, rng) * config.policy.dose_scale;

    std::size_t end = step + 1;
    while (end < grid.n_steps() && !grid.is_cycle_start(end)) ++end;
    const std::vector<double> cycle(end - step, dose);
    auto next = sim::simulate_window(config.system, states[step], step, cycle, grid, config.params);
    states.insert(states.end(), next.begin(), next.end());
    doses.insert(doses.end(), cycle.begin(), cycle.end());
    step = end;
  }
  PatientTrajectory p = sim::assemble_trajectory(config.system, states, doses);
  p.seed = seed;
  return p;
}

double policy_center_at(const sim::PatientHistory& history, const DosePolicyConfig& policy,
                        const sim::TimeGrid& grid) {
  double d_w = policy.d_w0;
  double prev = history.y.front()[0];
  for (std::size_t i = 1; i < history.length(); ++i) {
    if (!grid.is_cycle_start(i)) continue;
    const double now = history.y[i][0];
    d_w = update_policy_center(d_w, now, prev, policy.adjustment);
    prev = now;
  }
  return d_w;
}

Dataset generate_dataset(const GenerationConfig& config) {
  config.grid.validate();
  config.policy.validate();
  if (config.sizes.train == 0 || config.sizes.val == 0 || config.sizes.test == 0)
    throw ValidationError("generate_dataset: split sizes must be positive");

  Dataset ds;
  ds.manifest.config = config;
  auto fill = [&](Split split, std::size_t n, std::vector<PatientTrajectory>& out) {
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      std::uint64_t seed = patient_seed(config.master_seed, split, i);
      for (std::size_t attempt = 0;; ++attempt) {
        try {
          out.push_back(generate_patient(config, seed));
          break;
        } catch (const DivergenceError&) {
          if (attempt + 1 >= kMaxAttempts)
            throw DivergenceError("generate_dataset: patient " + std::to_string(i) + " of " +
                                  std::string(to_string(split)) + " diverged " + std::to_string(kMaxAttempts) +
                                  " times");
          ++ds.manifest.resampled;
          seed = derive_seed(seed, {attempt + 1});
        }
      }
    }
  };
  fill(Split::train, config.sizes.train, ds.train);
  fill(Split::val, config.sizes.val, ds.val);
  fill(Split::test, config.sizes.test, ds.test);
  if (ds.manifest.resampled > 0)
    std::clog << "generate_dataset: resampled " << ds.manifest.resampled << " diverged patient(s)\n";
  return ds;
}

}  // namespace ctsel::data
