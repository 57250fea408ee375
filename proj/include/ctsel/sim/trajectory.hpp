#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "ctsel/sim/dynamics.hpp"

namespace ctsel::sim {

using Rows = std::vector<std::vector<double>>;

/// One simulated patient on the full grid (observation window + horizon).
/// Row i of every channel belongs to grid point i; a[i] is the dose applied
/// over [t_i, t_{i+1}).
struct PatientTrajectory {
  std::uint64_t seed = 0;
  Rows y;      // outcomes, n_points x d_y
  Rows a;      // treatments, n_points x d_a
  Rows x;      // covariates, n_points x d_x
  Rows state;  // full simulator state (ground truth only)

  std::size_t length() const { return y.size(); }
  bool operator==(const PatientTrajectory&) const = default;
};

/// Observed history up to and including grid index t: y and x at 0..t,
/// treatments a_0..a_{t-1}.
struct PatientHistory {
  Rows y;
  Rows x;
  Rows a;

  std::size_t length() const { return y.size(); }
};

/// Per-cycle doses for the observation window plus one dose per horizon step.
struct DoseSchedule {
  std::vector<double> cycle_doses;
  std::vector<double> horizon_doses;
};

std::size_t outcome_channel(System system);
std::size_t covariate_count(System system);

/// Per-step dose vector (length n_steps) for a schedule.
std::vector<double> expand_schedule(const DoseSchedule& schedule, const TimeGrid& grid);

PatientTrajectory simulate_trajectory(System system, const StateVector& initial, std::span<const double> step_doses,
                                      const TimeGrid& grid, const SimParams& params);

PatientTrajectory simulate_trajectory(System system, const StateVector& initial, const DoseSchedule& schedule,
                                      const TimeGrid& grid, const SimParams& params);

/// Build the observed channels of a trajectory from simulated states.
PatientTrajectory assemble_trajectory(System system, const std::vector<StateVector>& states,
                                      std::span<const double> step_doses);

PatientHistory history_at(const PatientTrajectory& patient, std::size_t t_index);

/// Factual treatments a_t .. a_{t+n-1} (first channel).
std::vector<double> future_treatments(const PatientTrajectory& patient, std::size_t t_index, std::size_t n);

/// Factual outcomes y_{t+1} .. y_{t+n} (first channel).
std::vector<double> future_outcomes(const PatientTrajectory& patient, std::size_t t_index, std::size_t n);

}  // namespace ctsel::sim
