#include "ctsel/models/revin.hpp"

#include <algorithm>
#include <cmath>

#include "ctsel/common/error.hpp"

namespace ctsel::models {

RevinStats RevinStats::identity(std::size_t channels) {
  return RevinStats{std::vector<double>(channels, 0.0), std::vector<double>(channels, 1.0)};
}

RevinStats revin_stats(const sim::Rows& rows) {
  if (rows.size() < 2) throw ValidationError("revin: observed window needs at least 2 steps");
  const std::size_t c = rows.front().size();
  RevinStats s{std::vector<double>(c, 0.0), std::vector<double>(c, 0.0)};
  const double n = static_cast<double>(rows.size());
  for (const auto& r : rows)
    for (std::size_t j = 0; j < c; ++j) s.mean[j] += r[j];
  for (double& m : s.mean) m /= n;
  for (const auto& r : rows)
    for (std::size_t j = 0; j < c; ++j) {
      const double d = r[j] - s.mean[j];
      s.std[j] += d * d;
    }
  for (double& v : s.std) v = std::max(std::sqrt(v / n), kRevinStdFloor);
  return s;
}

sim::Rows revin_normalize(const sim::Rows& rows, const RevinStats& stats) {
  sim::Rows out = rows;
  for (auto& r : out)
    for (std::size_t j = 0; j < r.size(); ++j) r[j] = (r[j] - stats.mean[j]) / stats.std[j];
  return out;
}

sim::Rows revin_denormalize(const sim::Rows& rows, const RevinStats& stats) {
  sim::Rows out = rows;
  for (auto& r : out)
    for (std::size_t j = 0; j < r.size(); ++j) r[j] = r[j] * stats.std[j] + stats.mean[j];
  return out;
}

NormalizedHistory revin_normalize(const sim::PatientHistory& history, bool enabled) {
  if (history.length() < 2) throw ValidationError("revin: observed window needs at least 2 steps");
  NormalizedHistory n;
  n.y_stats = enabled ? revin_stats(history.y) : RevinStats::identity(history.y.front().size());
  n.x_stats = enabled ? revin_stats(history.x) : RevinStats::identity(history.x.front().size());
  n.history.y = revin_normalize(history.y, n.y_stats);
  n.history.x = revin_normalize(history.x, n.x_stats);
  n.history.a = history.a;
  return n;
}

}  // namespace ctsel::models
