#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "ctsel/selection/select.hpp"
#include "ctsel/sim/trajectory.hpp"

namespace ctsel::eval {

struct EvalRecord {
  std::string dataset;
  std::string method;
  std::string constraint;
  double lambda = 0.0;
  std::size_t replicate = 0;
  std::size_t patient = 0;
  double rmse_selection = 0.0;  // model mean vs simulated outcome under a*
  double rmse_target = 0.0;     // simulated outcome under a* vs y*
  double mean_variance = 0.0;

  bool operator==(const EvalRecord&) const = default;
};

/// Ground-truth outcomes y_{t+1..t+tau} when the patient's stored state at t
/// is re-simulated under `doses`.
std::vector<double> counterfactual_outcomes(const sim::PatientTrajectory& patient, sim::System system,
                                            const sim::SimParams& params, const sim::TimeGrid& grid,
                                            std::span<const double> doses);

double rmse(std::span<const double> a, std::span<const double> b);

EvalRecord evaluate_selection(const selection::SelectionResult& result, const sim::PatientTrajectory& patient,
                              sim::System system, const sim::SimParams& params, const sim::TimeGrid& grid,
                              std::span<const double> target);

inline constexpr std::string_view kRecordsHeader =
    "dataset,method,constraint,lambda,replicate,patient,rmse_selection,rmse_target,mean_variance";

/// Shortest round-trip decimal form of a double.
std::string format_number(double v);

std::string record_line(const EvalRecord& r);
void write_records_csv(const std::filesystem::path& path, const std::vector<EvalRecord>& records);
/// Appends rows (writing the header first when the file is new or empty).
void append_records_csv(const std::filesystem::path& path, const std::vector<EvalRecord>& records);
std::vector<EvalRecord> read_records_csv(const std::filesystem::path& path);

struct MeanStderr {
  double mean = 0.0;
  double stderr_ = 0.0;
};

/// Mean and standard error of the mean (n - 1 denominator); stderr 0 for n < 2.
MeanStderr mean_stderr(std::span<const double> values);

/// One row per (dataset, method, constraint, lambda) cell. Each metric is
/// averaged within a replicate first; mean and standard error are then taken
/// across replicates.
struct SummaryRow {
  std::string dataset;
  std::string method;
  std::string constraint;
  double lambda = 0.0;
  std::size_t replicates = 0;
  std::size_t records = 0;
  MeanStderr rmse_selection;
  MeanStderr rmse_target;
  MeanStderr mean_variance;
};

std::vector<SummaryRow> summarize(const std::vector<EvalRecord>& records);

inline constexpr std::string_view kSummaryHeader =
    "dataset,method,constraint,lambda,replicates,records,rmse_selection_mean,rmse_selection_stderr,"
    "rmse_target_mean,rmse_target_stderr,mean_variance_mean,mean_variance_stderr";

void write_summary_csv(const std::filesystem::path& path, const std::vector<SummaryRow>& rows);

}  // namespace ctsel::eval
