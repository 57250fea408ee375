#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <vector>

#include "ctsel/data/dataset.hpp"
#include "ctsel/eval/evaluate.hpp"
#include "ctsel/models/train.hpp"
#include "ctsel/uncertainty/geometric.hpp"

namespace ctsel::eval {

/// The uncertainty-weight list of the treatment-selection parameter table.
std::vector<double> default_lambdas();

struct ModelSpec {
  models::Architecture arch;
  models::TrainConfig train;
  uncertainty::GeometricConfig geometric;
  std::size_t ensemble_size = uncertainty::kDefaultPasses;
  std::size_t n_passes = uncertainty::kDefaultPasses;
};

/// Seeds: replicate r trains from derive_seed(seed, {0, r, member}) and selects
/// patient i with derive_seed(seed, {1, r, i}).
std::uint64_t training_seed(std::uint64_t seed, std::size_t replicate, std::size_t member);
std::uint64_t selection_seed(std::uint64_t seed, std::size_t replicate, std::size_t patient);

/// Train the members an uncertainty method needs and wrap them in a handle.
uncertainty::EnsembleHandle train_handle(uncertainty::Method method, const ModelSpec& spec,
                                         const data::Dataset& dataset, std::uint64_t seed, std::size_t replicate);

struct SweepSpec {
  std::vector<double> lambdas = default_lambdas();
  std::size_t replicates = 6;
  std::vector<selection::Constraint> constraints{selection::Constraint{}};
  std::vector<uncertainty::Method> methods{uncertainty::Method::mc_dropout};
  ModelSpec model;
  /// Base selection settings; lambda, constraint, target, initial doses and
  /// seed are filled per cell.
  selection::SelectionConfig selection;
  /// Constant desired outcome; NaN selects the dataset default.
  double target = std::numeric_limits<double>::quiet_NaN();
  /// Evaluate only the first n test patients (0 = all).
  std::size_t max_test_patients = 0;
  std::size_t workers = 1;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Handles indexed [method][replicate].
using HandleGrid = std::vector<std::vector<uncertainty::EnsembleHandle>>;

HandleGrid train_handles(const SweepSpec& spec, const data::Dataset& dataset);

/// For every method, constraint, lambda and replicate: select on each test
/// patient and evaluate against the simulator. `on_lambda` receives each
/// lambda's records as soon as they are complete.
std::vector<EvalRecord> run_lambda_sweep(const SweepSpec& spec, const data::Dataset& dataset,
                                         const HandleGrid& handles,
                                         const std::function<void(const std::vector<EvalRecord>&)>& on_lambda = {});

std::vector<EvalRecord> run_lambda_sweep(const SweepSpec& spec, const data::Dataset& dataset);

struct DeferralPoint {
  std::string dataset;
  std::string method;
  std::string constraint;
  double lambda = 0.0;
  std::size_t replicate = 0;
  double percentile = 0.0;
  std::size_t n = 0;
  double least_uncertain_rmse = 0.0;
  double random_rmse = 0.0;
};

std::vector<double> default_percentiles();

/// Per (dataset, method, constraint, lambda, replicate) group of records:
/// mean rmse_selection of the least-uncertain p% versus a size-matched random
/// subset drawn with derive_seed(seed, {replicate, p}).
std::vector<DeferralPoint> run_deferral_curve(const std::vector<EvalRecord>& records,
                                              const std::vector<double>& percentiles, std::uint64_t seed);

inline constexpr std::string_view kDeferralHeader =
    "dataset,method,constraint,lambda,replicate,percentile,n,least_uncertain_rmse,random_rmse";
void write_deferral_csv(const std::filesystem::path& path, const std::vector<DeferralPoint>& points);

struct ConfoundingSpec {
  std::vector<double> hsic_weights{0.0, 0.1, 1.0};
  std::size_t replicates = 3;
  /// Policy alpha the dataset must have been generated with.
  double alpha = 2.0;
  ModelSpec model;
  selection::SelectionConfig selection;
  double lambda = 0.0;
  double target = std::numeric_limits<double>::quiet_NaN();
  std::size_t max_test_patients = 0;
  std::size_t workers = 1;
  std::uint64_t seed = 0;

  void validate() const;
};

struct ConfoundingRow {
  double hsic_weight = 0.0;
  std::size_t replicate = 0;
  /// HSIC(a_t, Phi(H_t)) of the trained encoder on the validation split.
  double hsic = 0.0;
  double rmse_selection = 0.0;
  double rmse_target = 0.0;
  double mean_variance = 0.0;
};

struct ConfoundingResult {
  std::vector<ConfoundingRow> rows;
  std::vector<EvalRecord> records;  // method tag "mc-dropout/hsic=<w>"
};

ConfoundingResult run_confounding_sweep(const ConfoundingSpec& spec, const data::Dataset& dataset);

inline constexpr std::string_view kConfoundingHeader =
    "hsic_weight,replicate,hsic,rmse_selection,rmse_target,mean_variance";
void write_confounding_csv(const std::filesystem::path& path, const std::vector<ConfoundingRow>& rows);

/// Run fn(i) for i in [0, n) on up to `workers` threads; the first exception
/// is rethrown after all workers stop.
void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn);

}  // namespace ctsel::eval
