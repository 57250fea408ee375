#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "ctsel/eval/evaluate.hpp"

namespace ctsel::eval {

/// Line plot of mean rmse_selection (with standard-error bars) against lambda,
/// one series per (dataset, method, constraint). Positive lambdas sit on a
/// log axis; lambda = 0 is pinned to the left edge.
std::string render_lambda_svg(const std::vector<SummaryRow>& rows);

/// summary.csv and curves.svg under `out_dir`.
void write_report(const std::vector<EvalRecord>& records, const std::filesystem::path& out_dir);

}  // namespace ctsel::eval
