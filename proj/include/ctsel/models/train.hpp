#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "ctsel/data/dataset.hpp"
#include "ctsel/models/surrogate.hpp"

namespace ctsel::models {

struct TrainConfig {
  std::size_t epochs = 40;
  std::size_t batch_size = 32;
  double lr = 3e-3;
  double weight_decay = 0.01;
  /// Weight of HSIC(a_t, Phi(H_t)) in the loss; 0 skips the term entirely.
  double hsic_weight = 0.0;
  std::uint64_t seed = 0;
  /// Epochs without validation improvement before stopping; 0 disables.
  std::size_t patience = 8;
  /// Global gradient-norm clip; 0 disables.
  double grad_clip = 5.0;

  void validate() const;
};

struct TrainHistory {
  std::vector<double> train_loss;
  std::vector<double> val_loss;
  std::size_t best_epoch = 0;
  bool stopped_early = false;
};

/// One training window per patient, cut at the last observed grid index.
struct TrainingSample {
  ad::Tensor steps;        // observed encoder inputs, n_obs x encoder_input
  ad::Tensor full_steps;   // encoder inputs for s = 0 .. n_points-2 (normalized with observed stats)
  ad::Tensor transitions;  // (n_points-1) x (d_y + d_x) next-step targets, normalized
  std::vector<double> treatments;  // a_t .. a_{t+tau-1}
  std::vector<double> targets;     // y_{t+1} .. y_{t+tau}, normalized
  double y_last = 0.0;             // y_t, normalized
  RevinStats y_stats;
};

struct TrainingSet {
  Architecture arch;
  std::vector<TrainingSample> samples;
};

TrainingSet prepare_training_set(const std::vector<sim::PatientTrajectory>& patients, const Architecture& arch,
                                 const sim::TimeGrid& grid);

/// Training objective on a minibatch: normalized horizon MSE (teacher-forced
/// decoder) for recurrent-seq2seq, mean one-step (y, x) MSE over every
/// transition for gcomp-rollout, plus hsic_weight * HSIC(a_t, Phi).
ad::Var batch_loss(ad::Tape& tape, const Architecture& arch, const WeightVars& w, const TrainingSet& set,
                   std::span<const std::size_t> batch, const Dropout& dropout, double hsic_weight);

/// batch_loss over the whole set without dropout or HSIC, averaged per sample.
double training_objective(const SurrogateModel& model, const TrainingSet& set);

/// Deterministic autoregressive horizon MSE in normalized space.
double evaluation_loss(const SurrogateModel& model, const TrainingSet& set);

/// Horizon MSE in physical units of the deterministic prediction under the
/// factual treatments.
double factual_mse(const CounterfactualModel& model, const std::vector<sim::PatientTrajectory>& patients,
                   const sim::TimeGrid& grid);

/// Same metric for the persistence baseline y_hat = y_t.
double persistence_mse(const std::vector<sim::PatientTrajectory>& patients, const sim::TimeGrid& grid,
                       std::size_t horizon);

/// Minibatch AdamW on the train split with early stopping on the validation
/// split. The model keeps the weights of the best validation epoch.
TrainHistory train(SurrogateModel& model, const data::Dataset& dataset, const TrainConfig& config);

/// Final encoder states Phi(H_t) (n x hidden) and current treatments a_t
/// (n x 1) for a patient set.
struct Representations {
  ad::Tensor phi;
  ad::Tensor treatments;
};
Representations representations(const SurrogateModel& model, const std::vector<sim::PatientTrajectory>& patients,
                                 const sim::TimeGrid& grid);

}  // namespace ctsel::models
