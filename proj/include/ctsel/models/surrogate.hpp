#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ctsel/ad/ops.hpp"
#include "ctsel/common/rng.hpp"
#include "ctsel/models/revin.hpp"
#include "ctsel/sim/trajectory.hpp"

namespace ctsel::models {

enum class Flavor {
  recurrent_seq2seq,  // GRU encoder, GRU decoder fed (treatment, previous prediction)
  gcomp_rollout,      // GRU encoder plus one-step head, rolled forward on its own predictions
};

/// "crn-lite" / "gnet-lite".
std::string_view to_string(Flavor flavor);
Flavor flavor_from_string(std::string_view name);

struct Architecture {
  Flavor flavor = Flavor::recurrent_seq2seq;
  std::size_t hidden = 64;
  double dropout = 0.1;
  bool revin = true;
  std::size_t d_y = 1;
  std::size_t d_x = 3;
  std::size_t d_a = 1;
  std::size_t horizon = 10;

  std::size_t encoder_input() const { return d_y + d_x + d_a; }
  void validate() const;
  bool operator==(const Architecture&) const = default;
};

struct NamedTensor {
  std::string name;
  ad::Tensor value;

  bool operator==(const NamedTensor&) const = default;
};

/// Weight list in canonical order for an architecture, zero-filled.
std::vector<NamedTensor> weight_layout(const Architecture& arch);

/// Dropout source for one forward pass. Masks come either from one stream
/// shared by all rows (training) or from one stream per row (MC passes), so a
/// pass's mask sequence does not depend on how many passes are batched.
struct Dropout {
  double p = 0.0;
  Rng* rng = nullptr;
  std::span<Rng> row_rngs;

  bool active() const { return p > 0.0 && (rng != nullptr || !row_rngs.empty()); }
  ad::Var apply(ad::Var x) const;
};

/// Weights as tape variables, in weight_layout order.
using WeightVars = std::vector<ad::Var>;

/// Encoder input at step s is [y_s, x_s, a_{s-1}] (a_{-1} = 0); `steps[s]` is
/// the batch x encoder_input matrix for step s. Returns every hidden state.
std::vector<ad::Var> encode_all(ad::Tape& tape, const Architecture& arch, const WeightVars& w,
                                const std::vector<ad::Tensor>& steps);

/// Normalized horizon outcomes, batch x horizon. `phi` is the final encoder
/// state, `treatments` batch x horizon, `y_last` batch x 1 (normalized),
/// `teacher` batch x horizon ground truth for teacher forcing or null.
ad::Var seq2seq_decode(ad::Tape& tape, const Architecture& arch, const WeightVars& w, ad::Var phi, ad::Var treatments,
                       const ad::Tensor& y_last, const ad::Tensor* teacher, const Dropout& dropout);

/// One-step head: [dropout(h), a] -> next normalized (y, x).
ad::Var gcomp_head(ad::Tape& tape, const Architecture& arch, const WeightVars& w, ad::Var h, ad::Var a,
                   const Dropout& dropout);

/// Roll the one-step head forward for treatments.cols() steps.
ad::Var gcomp_rollout(ad::Tape& tape, const Architecture& arch, const WeightVars& w, ad::Var h, ad::Var treatments,
                      const Dropout& dropout);

/// Horizon prediction in normalized space for either flavor.
ad::Var predict_normalized(ad::Tape& tape, const Architecture& arch, const WeightVars& w, ad::Var phi,
                           ad::Var treatments, const ad::Tensor& y_last, const Dropout& dropout);

/// Encoder inputs of one patient, normalized, one row per observed step.
struct PreparedHistory {
  ad::Tensor steps;  // length x encoder_input
  RevinStats y_stats;
  RevinStats x_stats;
};

PreparedHistory prepare_history(const sim::PatientHistory& history, const Architecture& arch);

/// Stack row s of every prepared matrix into per-step batch matrices.
std::vector<ad::Tensor> batch_steps(const std::vector<const ad::Tensor*>& per_patient, std::size_t length);

/// A predictor conditioned on one patient's history. Weights are fixed; the
/// treatment trajectory may be a differentiable tape input.
class BoundPredictor {
 public:
  virtual ~BoundPredictor() = default;
  /// Physical-unit outcomes, one row per pass. With `pass_rngs` empty a single
  /// deterministic pass is returned; otherwise row r uses pass_rngs[r] for its
  /// dropout masks.
  virtual ad::Var predict(ad::Tape& tape, ad::Var treatments, std::span<Rng> pass_rngs) const = 0;
  virtual std::size_t horizon() const = 0;
};

/// Plug-in estimator interface consumed by uncertainty and selection.
class CounterfactualModel {
 public:
  virtual ~CounterfactualModel() = default;
  virtual std::unique_ptr<BoundPredictor> bind(const sim::PatientHistory& history) const = 0;
  virtual std::size_t horizon() const = 0;
  virtual bool stochastic() const = 0;
};

class SurrogateModel : public CounterfactualModel {
 public:
  explicit SurrogateModel(Architecture arch);
  SurrogateModel(Architecture arch, std::vector<NamedTensor> weights);

  /// Uniform(-1/sqrt(hidden), 1/sqrt(hidden)) matrices, zero biases.
  void initialize(std::uint64_t seed);

  const Architecture& arch() const { return arch_; }
  std::vector<NamedTensor>& weights() { return weights_; }
  const std::vector<NamedTensor>& weights() const { return weights_; }
  std::vector<ad::Tensor*> parameters();

  /// Weights on a tape, trainable (grad) or as constants.
  WeightVars weight_vars(ad::Tape& tape, bool trainable) const;

  std::unique_ptr<BoundPredictor> bind(const sim::PatientHistory& history) const override;
  std::size_t horizon() const override { return arch_.horizon; }
  bool stochastic() const override { return arch_.dropout > 0.0; }

  bool operator==(const SurrogateModel& other) const {
    return arch_ == other.arch_ && weights_ == other.weights_;
  }

 private:
  Architecture arch_;
  std::vector<NamedTensor> weights_;
};

/// Physical-unit horizon prediction for one history. With `rng` null the
/// pass is deterministic; otherwise dropout is active.
std::vector<double> predict(const CounterfactualModel& model, const sim::PatientHistory& history,
                            std::span<const double> future_treatments, Rng* rng = nullptr);

}  // namespace ctsel::models
