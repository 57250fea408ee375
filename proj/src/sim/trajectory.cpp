#include "ctsel/sim/trajectory.hpp"

#include <string>

namespace ctsel::sim {

std::size_t outcome_channel(System system) { return system == System::cvs ? 2 : 0; }

std::size_t covariate_count(System) { return 3; }

std::vector<double> expand_schedule(const DoseSchedule& schedule, const TimeGrid& grid) {
  grid.validate();
  if (schedule.cycle_doses.size() != grid.n_cycles)
    throw ValidationError("dose schedule has " + std::to_string(schedule.cycle_doses.size()) +
                          " cycle doses, grid expects " + std::to_string(grid.n_cycles));
  if (schedule.horizon_doses.size() != grid.n_horizon)
    throw ValidationError("dose schedule has " + std::to_string(schedule.horizon_doses.size()) +
                          " horizon doses, grid expects " + std::to_string(grid.n_horizon));
  std::vector<double> doses(grid.n_steps());
  for (std::size_t step = 0; step < grid.t_index(); ++step) doses[step] = schedule.cycle_doses[grid.cycle_of_step(step)];
  for (std::size_t k = 0; k < grid.n_horizon; ++k) doses[grid.t_index() + k] = schedule.horizon_doses[k];
  return doses;
}

PatientTrajectory assemble_trajectory(System system, const std::vector<StateVector>& states,
                                      std::span<const double> step_doses) {
  if (states.empty() || step_doses.size() + 1 != states.size())
    throw ValidationError("assemble_trajectory: need one dose per interval");
  const std::size_t out = outcome_channel(system);
  PatientTrajectory p;
  p.y.reserve(states.size());
  for (std::size_t i = 0; i < states.size(); ++i) {
    const StateVector& s = states[i];
    p.y.push_back({s[out]});
    std::vector<double> cov;
    for (std::size_t c = 0; c < s.size(); ++c)
      if (c != out) cov.push_back(s[c]);
    p.x.push_back(std::move(cov));
    p.state.emplace_back(s.begin(), s.end());
    // The final grid point has no interval of its own; it repeats the last dose.
    p.a.push_back({i < step_doses.size() ? step_doses[i] : step_doses.back()});
  }
  return p;
}

PatientTrajectory simulate_trajectory(System system, const StateVector& initial, std::span<const double> step_doses,
                                      const TimeGrid& grid, const SimParams& params) {
  grid.validate();
  if (step_doses.size() != grid.n_steps())
    throw ValidationError("simulate_trajectory: " + std::to_string(step_doses.size()) + " doses for " +
                          std::to_string(grid.n_steps()) + " grid intervals");
  std::vector<StateVector> states;
  states.reserve(grid.n_points());
  states.push_back(initial);
  auto rest = simulate_window(system, initial, 0, step_doses, grid, params);
  states.insert(states.end(), rest.begin(), rest.end());
  return assemble_trajectory(system, states, step_doses);
}

PatientTrajectory simulate_trajectory(System system, const StateVector& initial, const DoseSchedule& schedule,
                                      const TimeGrid& grid, const SimParams& params) {
  const auto doses = expand_schedule(schedule, grid);
  return simulate_trajectory(system, initial, doses, grid, params);
}

PatientHistory history_at(const PatientTrajectory& patient, std::size_t t_index) {
  if (t_index >= patient.length())
    throw ValidationError("history_at: index " + std::to_string(t_index) + " beyond trajectory of length " +
                          std::to_string(patient.length()));
  PatientHistory h;
  h.y.assign(patient.y.begin(), patient.y.begin() + static_cast<std::ptrdiff_t>(t_index + 1));
  h.x.assign(patient.x.begin(), patient.x.begin() + static_cast<std::ptrdiff_t>(t_index + 1));
  h.a.assign(patient.a.begin(), patient.a.begin() + static_cast<std::ptrdiff_t>(t_index));
  return h;
}

std::vector<double> future_treatments(const PatientTrajectory& patient, std::size_t t_index, std::size_t n) {
  if (t_index + n > patient.length()) throw ValidationError("future_treatments: window beyond trajectory");
  std::vector<double> out(n);
  for (std::size_t k = 0; k < n; ++k) out[k] = patient.a[t_index + k][0];
  return out;
}

std::vector<double> future_outcomes(const PatientTrajectory& patient, std::size_t t_index, std::size_t n) {
  if (t_index + n >= patient.length()) throw ValidationError("future_outcomes: window beyond trajectory");
  std::vector<double> out(n);
  for (std::size_t k = 0; k < n; ++k) out[k] = patient.y[t_index + 1 + k][0];
  return out;
}

}  // namespace ctsel::sim
