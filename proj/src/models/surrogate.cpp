#include "ctsel/models/surrogate.hpp"

#include <cmath>
#include <random>

#include "ctsel/common/error.hpp"

namespace ctsel::models {

namespace {

// Indices into the weight list; see weight_layout.
enum : std::size_t { kEncW = 0, kEncU = 1, kEncB = 2 };
enum : std::size_t { kDecW = 3, kDecU = 4, kDecB = 5, kOutW = 6, kOutB = 7 };
enum : std::size_t { kHeadW1 = 3, kHeadB1 = 4, kHeadW2 = 5, kHeadB2 = 6 };

ad::Var gru_step(const Architecture& arch, ad::Var W, ad::Var U, ad::Var b, ad::Var x, ad::Var h) {
  const std::size_t H = arch.hidden;
  const ad::Var xw = ad::add(ad::matmul(x, W), b);
  const ad::Var hu = ad::matmul(h, U);
  const ad::Var z = ad::sigmoid(ad::add(ad::slice_cols(xw, 0, H), ad::slice_cols(hu, 0, H)));
  const ad::Var r = ad::sigmoid(ad::add(ad::slice_cols(xw, H, 2 * H), ad::slice_cols(hu, H, 2 * H)));
  const ad::Var n = ad::tanh(ad::add(ad::slice_cols(xw, 2 * H, 3 * H), ad::mul(r, ad::slice_cols(hu, 2 * H, 3 * H))));
  return ad::add(n, ad::mul(z, ad::sub(h, n)));
}

void check_weights(const Architecture& arch, const WeightVars& w) {
  const std::size_t expected = arch.flavor == Flavor::recurrent_seq2seq ? 8 : 7;
  if (w.size() != expected)
    throw ShapeError("expected " + std::to_string(expected) + " weight tensors, got " + std::to_string(w.size()));
}

class BoundSurrogate final : public BoundPredictor {
 public:
  BoundSurrogate(const SurrogateModel& model, ad::Tensor phi, double y_last, RevinStats y_stats)
      : model_(model), phi_(std::move(phi)), y_last_(y_last), y_stats_(std::move(y_stats)) {}

  ad::Var predict(ad::Tape& tape, ad::Var treatments, std::span<Rng> pass_rngs) const override {
    const Architecture& arch = model_.arch();
    if (treatments.rows() != 1 || treatments.cols() != arch.horizon)
      throw ShapeError("predict: expected treatments of shape [1, " + std::to_string(arch.horizon) + "], got " +
                       treatments.value().shape_string());
    const std::size_t P = pass_rngs.empty() ? 1 : pass_rngs.size();
    const WeightVars w = model_.weight_vars(tape, false);
    ad::Tensor phi = ad::Tensor::matrix(P, arch.hidden);
    for (std::size_t r = 0; r < P; ++r)
      std::copy(phi_.data(), phi_.data() + arch.hidden, phi.data() + r * arch.hidden);
    const ad::Var phi_v = tape.constant(std::move(phi));
    const ad::Var tr = P > 1 ? ad::repeat_rows(treatments, P) : treatments;
    const Dropout drop{pass_rngs.empty() ? 0.0 : arch.dropout, nullptr, pass_rngs};
    const ad::Var out =
        predict_normalized(tape, arch, w, phi_v, tr, ad::Tensor::matrix(P, 1, y_last_), drop);
    return ad::add_scalar(ad::scale(out, y_stats_.std[0]), y_stats_.mean[0]);
  }

  std::size_t horizon() const override { return model_.arch().horizon; }

 private:
  const SurrogateModel& model_;
  ad::Tensor phi_;
  double y_last_;
  RevinStats y_stats_;
};

}  // namespace

std::string_view to_string(Flavor flavor) {
  return flavor == Flavor::recurrent_seq2seq ? "crn-lite" : "gnet-lite";
}

Flavor flavor_from_string(std::string_view name) {
  if (name == "crn-lite" || name == "recurrent-seq2seq") return Flavor::recurrent_seq2seq;
  if (name == "gnet-lite" || name == "gcomp-rollout") return Flavor::gcomp_rollout;
  throw ValidationError("unknown model flavor '" + std::string(name) + "' (expected crn-lite or gnet-lite)");
}

void Architecture::validate() const {
  if (hidden == 0) throw ValidationError("hidden size must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ValidationError("dropout rate must lie in [0, 1)");
  if (d_y != 1) throw ValidationError("exactly one outcome channel is supported");
  if (d_a != 1) throw ValidationError("exactly one treatment channel is supported");
  if (horizon == 0) throw ValidationError("horizon must be positive");
}

std::vector<NamedTensor> weight_layout(const Architecture& arch) {
  const std::size_t H = arch.hidden;
  auto m = [](std::size_t r, std::size_t c) { return ad::Tensor::matrix(r, c); };
  std::vector<NamedTensor> w{
      {"enc.W", m(arch.encoder_input(), 3 * H)},
      {"enc.U", m(H, 3 * H)},
      {"enc.b", m(1, 3 * H)},
  };
  if (arch.flavor == Flavor::recurrent_seq2seq) {
    w.push_back({"dec.W", m(arch.d_a + arch.d_y, 3 * H)});
    w.push_back({"dec.U", m(H, 3 * H)});
    w.push_back({"dec.b", m(1, 3 * H)});
    w.push_back({"out.W", m(H, arch.d_y)});
    w.push_back({"out.b", m(1, arch.d_y)});
  } else {
    w.push_back({"head.W1", m(H + arch.d_a, H)});
    w.push_back({"head.b1", m(1, H)});
    w.push_back({"head.W2", m(H, arch.d_y + arch.d_x)});
    w.push_back({"head.b2", m(1, arch.d_y + arch.d_x)});
  }
  return w;
}

ad::Var Dropout::apply(ad::Var x) const {
  if (!active()) return x;
  if (rng != nullptr) return ad::dropout_mask_apply(x, ad::dropout_mask(x.rows(), x.cols(), p, *rng));
  if (row_rngs.size() != x.rows())
    throw ShapeError("dropout: " + std::to_string(row_rngs.size()) + " row streams for " + std::to_string(x.rows()) +
                     " rows");
  return ad::dropout_mask_apply(x, ad::dropout_mask(x.cols(), p, row_rngs));
}

std::vector<ad::Var> encode_all(ad::Tape& tape, const Architecture& arch, const WeightVars& w,
                                const std::vector<ad::Tensor>& steps) {
  if (steps.empty()) throw ShapeError("encoder: empty history");
  const std::size_t B = steps.front().rows();
  ad::Var h = tape.constant(ad::Tensor::matrix(B, arch.hidden));
  std::vector<ad::Var> states;
  states.reserve(steps.size());
  for (const ad::Tensor& s : steps) {
    if (s.cols() != arch.encoder_input())
      throw ShapeError("encoder: step input " + s.shape_string() + " does not match input size " +
                       std::to_string(arch.encoder_input()));
    h = gru_step(arch, w[kEncW], w[kEncU], w[kEncB], tape.constant(s), h);
    states.push_back(h);
  }
  return states;
}

ad::Var seq2seq_decode(ad::Tape& tape, const Architecture& arch, const WeightVars& w, ad::Var phi, ad::Var treatments,
                       const ad::Tensor& y_last, const ad::Tensor* teacher, const Dropout& dropout) {
  check_weights(arch, w);
  const std::size_t tau = treatments.cols();
  ad::Var h = dropout.apply(phi);
  ad::Var prev = tape.constant(y_last);
  std::vector<ad::Var> outs;
  outs.reserve(tau);
  for (std::size_t k = 0; k < tau; ++k) {
    const ad::Var in = ad::concat_cols({ad::slice_cols(treatments, k, k + 1), prev});
    h = gru_step(arch, w[kDecW], w[kDecU], w[kDecB], in, h);
    const ad::Var o = ad::add(ad::matmul(dropout.apply(h), w[kOutW]), w[kOutB]);
    outs.push_back(o);
    if (teacher != nullptr) {
      ad::Tensor col = ad::Tensor::matrix(teacher->rows(), 1);
      for (std::size_t r = 0; r < teacher->rows(); ++r) col[r] = (*teacher)(r, k);
      prev = tape.constant(std::move(col));
    } else {
      prev = o;
    }
  }
  return ad::concat_cols(outs);
}

ad::Var gcomp_head(ad::Tape&, const Architecture& arch, const WeightVars& w, ad::Var h, ad::Var a,
                   const Dropout& dropout) {
  check_weights(arch, w);
  const ad::Var in = ad::concat_cols({dropout.apply(h), a});
  const ad::Var hidden = ad::relu(ad::add(ad::matmul(in, w[kHeadW1]), w[kHeadB1]));
  return ad::add(ad::matmul(dropout.apply(hidden), w[kHeadW2]), w[kHeadB2]);
}

ad::Var gcomp_rollout(ad::Tape& tape, const Architecture& arch, const WeightVars& w, ad::Var h, ad::Var treatments,
                      const Dropout& dropout) {
  const std::size_t tau = treatments.cols();
  std::vector<ad::Var> outs;
  outs.reserve(tau);
  for (std::size_t k = 0; k < tau; ++k) {
    const ad::Var a = ad::slice_cols(treatments, k, k + 1);
    const ad::Var pred = gcomp_head(tape, arch, w, h, a, dropout);
    outs.push_back(ad::slice_cols(pred, 0, arch.d_y));
    if (k + 1 < tau) h = gru_step(arch, w[kEncW], w[kEncU], w[kEncB], ad::concat_cols({pred, a}), h);
  }
  return ad::concat_cols(outs);
}

ad::Var predict_normalized(ad::Tape& tape, const Architecture& arch, const WeightVars& w, ad::Var phi,
                           ad::Var treatments, const ad::Tensor& y_last, const Dropout& dropout) {
  if (arch.flavor == Flavor::recurrent_seq2seq)
    return seq2seq_decode(tape, arch, w, phi, treatments, y_last, nullptr, dropout);
  return gcomp_rollout(tape, arch, w, phi, treatments, dropout);
}

PreparedHistory prepare_history(const sim::PatientHistory& history, const Architecture& arch) {
  const NormalizedHistory n = revin_normalize(history, arch.revin);
  const std::size_t L = history.length();
  if (history.a.size() + 1 != L)
    throw ShapeError("history: expected " + std::to_string(L - 1) + " treatment rows, got " +
                     std::to_string(history.a.size()));
  PreparedHistory p;
  p.steps = ad::Tensor::matrix(L, arch.encoder_input());
  for (std::size_t s = 0; s < L; ++s) {
    std::size_t c = 0;
    for (std::size_t j = 0; j < arch.d_y; ++j) p.steps(s, c++) = n.history.y[s][j];
    for (std::size_t j = 0; j < arch.d_x; ++j) p.steps(s, c++) = n.history.x[s][j];
    for (std::size_t j = 0; j < arch.d_a; ++j) p.steps(s, c++) = s == 0 ? 0.0 : history.a[s - 1][j];
  }
  p.y_stats = n.y_stats;
  p.x_stats = n.x_stats;
  return p;
}

std::vector<ad::Tensor> batch_steps(const std::vector<const ad::Tensor*>& per_patient, std::size_t length) {
  const std::size_t B = per_patient.size();
  if (B == 0) throw ShapeError("batch_steps: empty batch");
  const std::size_t c = per_patient.front()->cols();
  std::vector<ad::Tensor> steps(length, ad::Tensor::matrix(B, c));
  for (std::size_t b = 0; b < B; ++b) {
    const ad::Tensor& m = *per_patient[b];
    if (m.rows() < length || m.cols() != c) throw ShapeError("batch_steps: ragged patient inputs");
    for (std::size_t s = 0; s < length; ++s)
      std::copy(m.data() + s * c, m.data() + (s + 1) * c, steps[s].data() + b * c);
  }
  return steps;
}

SurrogateModel::SurrogateModel(Architecture arch) : arch_(arch), weights_(weight_layout(arch)) { arch_.validate(); }

SurrogateModel::SurrogateModel(Architecture arch, std::vector<NamedTensor> weights)
    : arch_(arch), weights_(std::move(weights)) {
  arch_.validate();
  const auto layout = weight_layout(arch_);
  if (layout.size() != weights_.size())
    throw FormatError("weight count " + std::to_string(weights_.size()) + " does not match architecture (" +
                      std::to_string(layout.size()) + ")");
  for (std::size_t i = 0; i < layout.size(); ++i)
    if (layout[i].name != weights_[i].name || !layout[i].value.same_shape(weights_[i].value))
      throw FormatError("weight '" + weights_[i].name + "' " + weights_[i].value.shape_string() +
                        " does not match architecture slot '" + layout[i].name + "' " +
                        layout[i].value.shape_string());
}

void SurrogateModel::initialize(std::uint64_t seed) {
  Rng rng(seed);
  const double k = 1.0 / std::sqrt(static_cast<double>(arch_.hidden));
  std::uniform_real_distribution<double> u(-k, k);
  for (auto& [name, t] : weights_) {
    const bool bias = name.find(".b") != std::string::npos;
    for (double& v : t.values()) v = bias ? 0.0 : u(rng);
  }
}

std::vector<ad::Tensor*> SurrogateModel::parameters() {
  std::vector<ad::Tensor*> p;
  for (auto& nt : weights_) p.push_back(&nt.value);
  return p;
}

WeightVars SurrogateModel::weight_vars(ad::Tape& tape, bool trainable) const {
  WeightVars w;
  w.reserve(weights_.size());
  for (const auto& nt : weights_) w.push_back(trainable ? tape.weight(nt.value) : tape.constant_ref(nt.value));
  return w;
}

std::unique_ptr<BoundPredictor> SurrogateModel::bind(const sim::PatientHistory& history) const {
  PreparedHistory p = prepare_history(history, arch_);
  ad::Tape tape;
  const WeightVars w = weight_vars(tape, false);
  const std::size_t L = p.steps.rows();
  const std::vector<ad::Tensor> steps = batch_steps({&p.steps}, L);
  const ad::Var phi = encode_all(tape, arch_, w, steps).back();
  return std::make_unique<BoundSurrogate>(*this, phi.value(), p.steps(L - 1, 0), std::move(p.y_stats));
}

std::vector<double> predict(const CounterfactualModel& model, const sim::PatientHistory& history,
                            std::span<const double> future_treatments, Rng* rng) {
  if (future_treatments.size() != model.horizon())
    throw ShapeError("predict: expected " + std::to_string(model.horizon()) + " future treatments, got " +
                     std::to_string(future_treatments.size()));
  const auto bound = model.bind(history);
  ad::Tape tape;
  const ad::Var a =
      tape.constant(ad::Tensor::row(std::vector<double>(future_treatments.begin(), future_treatments.end())));
  const ad::Var out = bound->predict(tape, a, rng != nullptr ? std::span<Rng>(rng, 1) : std::span<Rng>());
  return out.value().storage();
}

}  // namespace ctsel::models
