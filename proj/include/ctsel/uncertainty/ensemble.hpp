#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <string_view>
#include <vector>

#include "ctsel/models/surrogate.hpp"

namespace ctsel::uncertainty {

enum class Method { mc_dropout, ensemble, geometric };

std::string_view to_string(Method method);
Method method_from_string(std::string_view name);

inline constexpr std::size_t kDefaultPasses = 8;

struct UncertaintyEstimate {
  std::vector<double> mu;
  std::vector<double> var;
  std::size_t n_passes = 0;
  Method method = Method::mc_dropout;

  /// (1/tau) sum var, the scalar used for ranking and in the objective.
  double mean_variance() const;
};

/// mc-dropout: one stochastic member and n_passes dropout passes. ensemble and
/// geometric: one deterministic pass per member.
struct EnsembleHandle {
  Method method = Method::mc_dropout;
  std::vector<std::shared_ptr<const models::CounterfactualModel>> members;
  std::size_t n_passes = kDefaultPasses;

  std::size_t passes() const { return method == Method::mc_dropout ? n_passes : members.size(); }
  std::size_t horizon() const;
  void validate() const;
};

EnsembleHandle mc_dropout_handle(std::shared_ptr<const models::CounterfactualModel> model,
                                 std::size_t n_passes = kDefaultPasses);
EnsembleHandle ensemble_handle(std::vector<std::shared_ptr<const models::CounterfactualModel>> members);

/// Seed of stochastic pass `pass` under stream seed `seed`.
std::uint64_t pass_seed(std::uint64_t seed, std::size_t pass);

/// A handle bound to one patient history.
class BoundEnsemble {
 public:
  BoundEnsemble(const EnsembleHandle& handle, const sim::PatientHistory& history);

  /// passes x tau matrix of per-pass predictions; stochastic passes draw from
  /// pass_seed(seed, r).
  ad::Var passes(ad::Tape& tape, ad::Var treatments, std::uint64_t seed) const;
  std::size_t horizon() const { return horizon_; }
  Method method() const { return method_; }

 private:
  Method method_;
  std::size_t n_passes_;
  std::size_t horizon_;
  std::vector<std::unique_ptr<models::BoundPredictor>> bound_;
};

struct MomentVars {
  ad::Var mu;   // 1 x tau
  ad::Var var;  // 1 x tau, unbiased (n-1)
};

/// Per-step sample mean and unbiased variance of a passes x tau matrix.
MomentVars moments(ad::Var passes);

UncertaintyEstimate to_estimate(const MomentVars& m, std::size_t n_passes, Method method);

UncertaintyEstimate estimate(const BoundEnsemble& bound, std::span<const double> treatments, std::uint64_t seed);
UncertaintyEstimate estimate(const EnsembleHandle& handle, const sim::PatientHistory& history,
                             std::span<const double> treatments, std::uint64_t seed);

}  // namespace ctsel::uncertainty
