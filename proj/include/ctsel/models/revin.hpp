#pragma once

#include <vector>

#include "ctsel/sim/trajectory.hpp"

namespace ctsel::models {

inline constexpr double kRevinStdFloor = 1e-6;

/// Per-channel statistics of one instance's observed window.
struct RevinStats {
  std::vector<double> mean;
  std::vector<double> std;

  static RevinStats identity(std::size_t channels);
};

/// Mean and (population) standard deviation per channel; std floored at 1e-6.
RevinStats revin_stats(const sim::Rows& rows);

sim::Rows revin_normalize(const sim::Rows& rows, const RevinStats& stats);
sim::Rows revin_denormalize(const sim::Rows& rows, const RevinStats& stats);

/// History with outcomes and covariates normalized; treatments untouched.
struct NormalizedHistory {
  sim::PatientHistory history;
  RevinStats y_stats;
  RevinStats x_stats;
};

/// Requires at least two observed steps. With `enabled` false the statistics
/// are the identity (mean 0, std 1).
NormalizedHistory revin_normalize(const sim::PatientHistory& history, bool enabled = true);

}  // namespace ctsel::models
