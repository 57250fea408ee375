#include "ctsel/models/train.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "ctsel/ad/adamw.hpp"
#include "ctsel/balancing/hsic.hpp"
#include "ctsel/common/error.hpp"

namespace ctsel::models {

namespace {

ad::Tensor gather_rows(const std::vector<double> TrainingSample::*field, const TrainingSet& set,
                       std::span<const std::size_t> batch, std::size_t cols) {
  ad::Tensor t = ad::Tensor::matrix(batch.size(), cols);
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const auto& v = set.samples[batch[b]].*field;
    std::copy(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(cols), t.data() + b * cols);
  }
  return t;
}

double clip_gradients(std::vector<ad::Tensor>& grads, double max_norm) {
  double sq = 0.0;
  for (const auto& g : grads)
    for (double v : g.values()) sq += v * v;
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double s = max_norm / norm;
    for (auto& g : grads)
      for (double& v : g.values()) v *= s;
  }
  return norm;
}

}  // namespace

void TrainConfig::validate() const {
  if (epochs == 0) throw ValidationError("training epochs must be positive");
  if (batch_size == 0) throw ValidationError("training batch size must be positive");
  if (!(lr > 0.0)) throw ValidationError("training learning rate must be positive");
  if (!(weight_decay >= 0.0)) throw ValidationError("weight decay must be non-negative");
  if (!(hsic_weight >= 0.0)) throw ValidationError("hsic weight must be non-negative");
  if (!(grad_clip >= 0.0)) throw ValidationError("gradient clip must be non-negative");
}

TrainingSet prepare_training_set(const std::vector<sim::PatientTrajectory>& patients, const Architecture& arch,
                                 const sim::TimeGrid& grid) {
  const std::size_t t = grid.t_index();
  const std::size_t tau = arch.horizon;
  const std::size_t n_in = arch.encoder_input();
  const std::size_t n_next = arch.d_y + arch.d_x;
  TrainingSet set{arch, {}};
  set.samples.reserve(patients.size());
  for (const auto& p : patients) {
    if (p.length() < t + tau + 1)
      throw ShapeError("patient trajectory has " + std::to_string(p.length()) + " points, need " +
                       std::to_string(t + tau + 1));
    PreparedHistory h = prepare_history(sim::history_at(p, t), arch);
    TrainingSample s;
    s.steps = std::move(h.steps);
    s.y_last = s.steps(t, 0);
    s.treatments = sim::future_treatments(p, t, tau);
    for (double y : sim::future_outcomes(p, t, tau)) s.targets.push_back((y - h.y_stats.mean[0]) / h.y_stats.std[0]);

    const std::size_t n_trans = p.length() - 1;
    s.full_steps = ad::Tensor::matrix(n_trans, n_in);
    s.transitions = ad::Tensor::matrix(n_trans, n_next);
    auto ny = [&](std::size_t i, std::size_t j) { return (p.y[i][j] - h.y_stats.mean[j]) / h.y_stats.std[j]; };
    auto nx = [&](std::size_t i, std::size_t j) { return (p.x[i][j] - h.x_stats.mean[j]) / h.x_stats.std[j]; };
    for (std::size_t s_i = 0; s_i < n_trans; ++s_i) {
      std::size_t c = 0;
      for (std::size_t j = 0; j < arch.d_y; ++j) s.full_steps(s_i, c++) = ny(s_i, j);
      for (std::size_t j = 0; j < arch.d_x; ++j) s.full_steps(s_i, c++) = nx(s_i, j);
      for (std::size_t j = 0; j < arch.d_a; ++j) s.full_steps(s_i, c++) = s_i == 0 ? 0.0 : p.a[s_i - 1][j];
      c = 0;
      for (std::size_t j = 0; j < arch.d_y; ++j) s.transitions(s_i, c++) = ny(s_i + 1, j);
      for (std::size_t j = 0; j < arch.d_x; ++j) s.transitions(s_i, c++) = nx(s_i + 1, j);
    }
    s.y_stats = std::move(h.y_stats);
    set.samples.push_back(std::move(s));
  }
  return set;
}

ad::Var batch_loss(ad::Tape& tape, const Architecture& arch, const WeightVars& w, const TrainingSet& set,
                   std::span<const std::size_t> batch, const Dropout& dropout, double hsic_weight) {
  if (batch.empty()) throw ShapeError("batch_loss: empty batch");
  const std::size_t B = batch.size();
  const std::size_t tau = arch.horizon;
  const ad::Tensor treatments = gather_rows(&TrainingSample::treatments, set, batch, tau);

  ad::Var loss;
  ad::Var phi;
  if (arch.flavor == Flavor::recurrent_seq2seq) {
    std::vector<const ad::Tensor*> inputs;
    for (std::size_t i : batch) inputs.push_back(&set.samples[i].steps);
    const auto steps = batch_steps(inputs, inputs.front()->rows());
    phi = encode_all(tape, arch, w, steps).back();
    const ad::Tensor targets = gather_rows(&TrainingSample::targets, set, batch, tau);
    ad::Tensor y_last = ad::Tensor::matrix(B, 1);
    for (std::size_t b = 0; b < B; ++b) y_last[b] = set.samples[batch[b]].y_last;
    const ad::Var pred = seq2seq_decode(tape, arch, w, phi, tape.constant(treatments), y_last, &targets, dropout);
    loss = ad::mse(pred, tape.constant(targets));
  } else {
    std::vector<const ad::Tensor*> inputs;
    for (std::size_t i : batch) inputs.push_back(&set.samples[i].full_steps);
    const std::size_t n_trans = inputs.front()->rows();
    const auto steps = batch_steps(inputs, n_trans);
    const auto states = encode_all(tape, arch, w, steps);
    phi = states[set.samples[batch[0]].steps.rows() - 1];
    const std::size_t n_next = arch.d_y + arch.d_x;
    ad::Tensor a = ad::Tensor::matrix(n_trans * B, 1);
    ad::Tensor targets = ad::Tensor::matrix(n_trans * B, n_next);
    for (std::size_t s = 0; s < n_trans; ++s)
      for (std::size_t b = 0; b < B; ++b) {
        const auto& sample = set.samples[batch[b]];
        a[s * B + b] = sample.full_steps.rows() > s + 1 ? sample.full_steps(s + 1, n_next) : 0.0;
        for (std::size_t j = 0; j < n_next; ++j) targets(s * B + b, j) = sample.transitions(s, j);
      }
    // The treatment applied over [t_s, t_{s+1}) is the a-column of step s+1;
    // for the final transition it comes from the horizon treatments.
    for (std::size_t b = 0; b < B; ++b) a[(n_trans - 1) * B + b] = set.samples[batch[b]].treatments.back();
    const ad::Var h = ad::concat_rows(states);
    const ad::Var pred = gcomp_head(tape, arch, w, h, tape.constant(std::move(a)), dropout);
    loss = ad::mse(pred, tape.constant(std::move(targets)));
  }

  if (hsic_weight > 0.0 && B >= balancing::kHsicMinSamples) {
    ad::Tensor a_t = ad::Tensor::matrix(B, 1);
    for (std::size_t b = 0; b < B; ++b) a_t[b] = treatments(b, 0);
    loss = ad::add(loss, ad::scale(balancing::hsic(tape.constant(std::move(a_t)), phi), hsic_weight));
  }
  return loss;
}

double training_objective(const SurrogateModel& model, const TrainingSet& set) {
  constexpr std::size_t kChunk = 128;
  double total = 0.0;
  for (std::size_t begin = 0; begin < set.samples.size(); begin += kChunk) {
    const std::size_t end = std::min(set.samples.size(), begin + kChunk);
    std::vector<std::size_t> batch(end - begin);
    std::iota(batch.begin(), batch.end(), begin);
    ad::Tape tape;
    const ad::Var loss = batch_loss(tape, model.arch(), model.weight_vars(tape, false), set, batch, Dropout{}, 0.0);
    total += loss.value().item() * static_cast<double>(batch.size());
  }
  return total / static_cast<double>(set.samples.size());
}

double evaluation_loss(const SurrogateModel& model, const TrainingSet& set) {
  const Architecture& arch = model.arch();
  double total = 0.0;
  std::size_t count = 0;
  constexpr std::size_t kChunk = 128;
  for (std::size_t begin = 0; begin < set.samples.size(); begin += kChunk) {
    const std::size_t end = std::min(set.samples.size(), begin + kChunk);
    std::vector<std::size_t> batch(end - begin);
    std::iota(batch.begin(), batch.end(), begin);
    ad::Tape tape;
    const WeightVars w = model.weight_vars(tape, false);
    std::vector<const ad::Tensor*> inputs;
    for (std::size_t i : batch) inputs.push_back(&set.samples[i].steps);
    const auto steps = batch_steps(inputs, inputs.front()->rows());
    const ad::Var phi = encode_all(tape, arch, w, steps).back();
    const ad::Tensor treatments = gather_rows(&TrainingSample::treatments, set, batch, arch.horizon);
    const ad::Tensor targets = gather_rows(&TrainingSample::targets, set, batch, arch.horizon);
    ad::Tensor y_last = ad::Tensor::matrix(batch.size(), 1);
    for (std::size_t b = 0; b < batch.size(); ++b) y_last[b] = set.samples[batch[b]].y_last;
    const ad::Var pred = predict_normalized(tape, arch, w, phi, tape.constant(treatments), y_last, Dropout{});
    const ad::Tensor& pv = pred.value();
    for (std::size_t i = 0; i < pv.size(); ++i) {
      const double d = pv[i] - targets[i];
      total += d * d;
    }
    count += pv.size();
  }
  return total / static_cast<double>(count);
}

double factual_mse(const CounterfactualModel& model, const std::vector<sim::PatientTrajectory>& patients,
                   const sim::TimeGrid& grid) {
  const std::size_t t = grid.t_index();
  const std::size_t tau = model.horizon();
  double total = 0.0;
  for (const auto& p : patients) {
    const auto pred = predict(model, sim::history_at(p, t), sim::future_treatments(p, t, tau));
    const auto truth = sim::future_outcomes(p, t, tau);
    for (std::size_t k = 0; k < tau; ++k) total += (pred[k] - truth[k]) * (pred[k] - truth[k]);
  }
  return total / static_cast<double>(patients.size() * tau);
}

double persistence_mse(const std::vector<sim::PatientTrajectory>& patients, const sim::TimeGrid& grid,
                       std::size_t horizon) {
  const std::size_t t = grid.t_index();
  double total = 0.0;
  for (const auto& p : patients) {
    const double last = p.y[t][0];
    for (double y : sim::future_outcomes(p, t, horizon)) total += (y - last) * (y - last);
  }
  return total / static_cast<double>(patients.size() * horizon);
}

TrainHistory train(SurrogateModel& model, const data::Dataset& dataset, const TrainConfig& config) {
  config.validate();
  if (dataset.train.empty()) throw ValidationError("train: training split is empty");
  const Architecture& arch = model.arch();
  const TrainingSet train_set = prepare_training_set(dataset.train, arch, dataset.grid());
  const TrainingSet val_set =
      prepare_training_set(dataset.val.empty() ? dataset.train : dataset.val, arch, dataset.grid());

  model.initialize(derive_seed(config.seed, {0}));
  Rng shuffle_rng = make_rng(config.seed, {1});
  Rng dropout_rng = make_rng(config.seed, {2});
  ad::AdamW opt(model.parameters(), ad::AdamWConfig{config.lr, 0.9, 0.999, 1e-8, config.weight_decay});

  TrainHistory hist;
  double best_val = std::numeric_limits<double>::infinity();
  std::vector<NamedTensor> best_weights = model.weights();
  std::size_t since_best = 0;
  std::vector<std::size_t> order(train_set.samples.size());
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double epoch_loss = 0.0;
    std::size_t n_batches = 0;
    for (std::size_t begin = 0, batch_index = 0; begin < order.size(); begin += config.batch_size, ++batch_index) {
      const std::size_t end = std::min(order.size(), begin + config.batch_size);
      const std::span<const std::size_t> batch(order.data() + begin, end - begin);
      double loss_value = 0.0;
      std::vector<ad::Tensor> grads;
      try {
        ad::Tape tape;
        const WeightVars w = model.weight_vars(tape, true);
        const ad::Var loss =
            batch_loss(tape, arch, w, train_set, batch, Dropout{arch.dropout, &dropout_rng, {}}, config.hsic_weight);
        loss_value = loss.value().item();
        tape.backward(loss);
        grads.reserve(w.size());
        for (const ad::Var& v : w) grads.push_back(tape.grad(v));
      } catch (const NumericError& e) {
        throw NumericError("training diverged at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(batch_index) + ": " + e.what());
      }
      if (!std::isfinite(loss_value))
        throw NumericError("non-finite training loss at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(batch_index));
      clip_gradients(grads, config.grad_clip);
      opt.step(grads);
      epoch_loss += loss_value;
      ++n_batches;
    }
    hist.train_loss.push_back(epoch_loss / static_cast<double>(n_batches));
    const double val = evaluation_loss(model, val_set);
    if (!std::isfinite(val)) throw NumericError("non-finite validation loss at epoch " + std::to_string(epoch));
    hist.val_loss.push_back(val);
    if (val < best_val) {
      best_val = val;
      best_weights = model.weights();
      hist.best_epoch = epoch;
      since_best = 0;
    } else if (config.patience > 0 && ++since_best >= config.patience) {
      hist.stopped_early = true;
      break;
    }
  }
  model.weights() = std::move(best_weights);
  return hist;
}

Representations representations(const SurrogateModel& model, const std::vector<sim::PatientTrajectory>& patients,
                                 const sim::TimeGrid& grid) {
  const Architecture& arch = model.arch();
  const std::size_t t = grid.t_index();
  Representations r{ad::Tensor::matrix(patients.size(), arch.hidden), ad::Tensor::matrix(patients.size(), 1)};
  for (std::size_t i = 0; i < patients.size(); ++i) {
    const PreparedHistory h = prepare_history(sim::history_at(patients[i], t), arch);
    ad::Tape tape;
    const WeightVars w = model.weight_vars(tape, false);
    const ad::Var phi = encode_all(tape, arch, w, batch_steps({&h.steps}, h.steps.rows())).back();
    std::copy(phi.value().data(), phi.value().data() + arch.hidden, r.phi.data() + i * arch.hidden);
    r.treatments[i] = patients[i].a[t][0];
  }
  return r;
}

}  // namespace ctsel::models
