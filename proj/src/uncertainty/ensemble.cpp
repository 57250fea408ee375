#include "ctsel/uncertainty/ensemble.hpp"

#include <string>

#include "ctsel/common/error.hpp"

namespace ctsel::uncertainty {

std::string_view to_string(Method method) {
  switch (method) {
    case Method::mc_dropout:
      return "mc-dropout";
    case Method::ensemble:
      return "ensemble";
    case Method::geometric:
      return "geometric";
  }
  return "unknown";
}

Method method_from_string(std::string_view name) {
  if (name == "mc-dropout") return Method::mc_dropout;
  if (name == "ensemble") return Method::ensemble;
  if (name == "geometric") return Method::geometric;
  throw ValidationError("unknown uncertainty method '" + std::string(name) +
                        "' (expected mc-dropout, ensemble or geometric)");
}

double UncertaintyEstimate::mean_variance() const {
  double s = 0.0;
  for (double v : var) s += v;
  return var.empty() ? 0.0 : s / static_cast<double>(var.size());
}

std::size_t EnsembleHandle::horizon() const {
  if (members.empty()) throw ValidationError("ensemble handle has no members");
  return members.front()->horizon();
}

void EnsembleHandle::validate() const {
  if (members.empty()) throw ValidationError("ensemble handle has no members");
  for (const auto& m : members)
    if (!m || m->horizon() != members.front()->horizon())
      throw ValidationError("ensemble members must share one architecture");
  if (method == Method::mc_dropout && members.size() != 1)
    throw ValidationError("mc-dropout handle takes exactly one member");
  if (passes() < 2) throw ValidationError("uncertainty estimates need at least 2 passes");
}

EnsembleHandle mc_dropout_handle(std::shared_ptr<const models::CounterfactualModel> model, std::size_t n_passes) {
  EnsembleHandle h{Method::mc_dropout, {std::move(model)}, n_passes};
  h.validate();
  return h;
}

EnsembleHandle ensemble_handle(std::vector<std::shared_ptr<const models::CounterfactualModel>> members) {
  const std::size_t n = members.size();
  EnsembleHandle h{Method::ensemble, std::move(members), n};
  h.validate();
  return h;
}

std::uint64_t pass_seed(std::uint64_t seed, std::size_t pass) { return derive_seed(seed, {pass}); }

BoundEnsemble::BoundEnsemble(const EnsembleHandle& handle, const sim::PatientHistory& history)
    : method_(handle.method), n_passes_(handle.passes()), horizon_(handle.horizon()) {
  handle.validate();
  for (const auto& m : handle.members) bound_.push_back(m->bind(history));
}

ad::Var BoundEnsemble::passes(ad::Tape& tape, ad::Var treatments, std::uint64_t seed) const {
  if (method_ == Method::mc_dropout) {
    std::vector<Rng> rngs;
    rngs.reserve(n_passes_);
    for (std::size_t r = 0; r < n_passes_; ++r) rngs.emplace_back(pass_seed(seed, r));
    return bound_.front()->predict(tape, treatments, rngs);
  }
  std::vector<ad::Var> rows;
  rows.reserve(bound_.size());
  for (const auto& b : bound_) rows.push_back(b->predict(tape, treatments, {}));
  return ad::concat_rows(rows);
}

MomentVars moments(ad::Var passes) {
  const std::size_t n = passes.rows();
  if (n < 2) throw ValidationError("uncertainty estimates need at least 2 passes");
  // Shift by the first pass so that identical passes give exactly zero variance.
  const ad::Var ref = ad::slice_rows(passes, 0, 1);
  const ad::Var d = ad::sub(passes, ref);
  const ad::Var md = ad::mean_rows(d);
  const ad::Var var =
      ad::scale(ad::mean_rows(ad::square(ad::sub(d, md))), static_cast<double>(n) / static_cast<double>(n - 1));
  return {ad::add(ref, md), var};
}

UncertaintyEstimate to_estimate(const MomentVars& m, std::size_t n_passes, Method method) {
  return UncertaintyEstimate{m.mu.value().storage(), m.var.value().storage(), n_passes, method};
}

UncertaintyEstimate estimate(const BoundEnsemble& bound, std::span<const double> treatments, std::uint64_t seed) {
  if (treatments.size() != bound.horizon())
    throw ShapeError("estimate: expected " + std::to_string(bound.horizon()) + " treatments, got " +
                     std::to_string(treatments.size()));
  ad::Tape tape;
  const ad::Var a = tape.constant(ad::Tensor::row(std::vector<double>(treatments.begin(), treatments.end())));
  const ad::Var p = bound.passes(tape, a, seed);
  return to_estimate(moments(p), p.rows(), bound.method());
}

UncertaintyEstimate estimate(const EnsembleHandle& handle, const sim::PatientHistory& history,
                             std::span<const double> treatments, std::uint64_t seed) {
  return estimate(BoundEnsemble(handle, history), treatments, seed);
}

}  // namespace ctsel::uncertainty
