#include "ctsel/eval/sweeps.hpp"

#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <map>
#include <mutex>
#include <thread>

#include "ctsel/balancing/hsic.hpp"
#include "ctsel/common/error.hpp"
#include "ctsel/uncertainty/ranking.hpp"

namespace ctsel::eval {

namespace {

constexpr std::uint64_t kTrainStream = 0;
constexpr std::uint64_t kSelectStream = 1;

std::vector<double> target_vector(double target, const data::Dataset& dataset, std::size_t horizon) {
  const double v = std::isnan(target) ? selection::default_target(dataset.system()) : target;
  return std::vector<double>(horizon, v);
}

std::size_t test_count(const data::Dataset& dataset, std::size_t limit) {
  const std::size_t n = dataset.test.size();
  return limit == 0 ? n : std::min(n, limit);
}

// Select on test patients [0, n) for one handle and cell; records in patient order.
std::vector<EvalRecord> select_cell(const uncertainty::EnsembleHandle& handle, const data::Dataset& dataset,
                                    const selection::SelectionConfig& base, const selection::Constraint& constraint,
                                    double lambda, const std::vector<double>& target, std::size_t n_patients,
                                    std::uint64_t seed, std::size_t replicate, const std::string& method_tag,
                                    std::size_t workers) {
  const sim::TimeGrid& grid = dataset.grid();
  const std::size_t t = grid.t_index();
  const std::size_t tau = handle.horizon();
  std::vector<EvalRecord> records(n_patients);
  parallel_for(n_patients, workers, [&](std::size_t i) {
    const sim::PatientTrajectory& patient = dataset.test[i];
    const sim::PatientHistory history = sim::history_at(patient, t);
    selection::SelectionConfig cfg = base;
    cfg.lambda = lambda;
    cfg.constraint = constraint;
    cfg.target = target;
    cfg.initial_doses = selection::policy_initial_doses(history, dataset.manifest.config.policy, grid, tau);
    cfg.seed = selection_seed(seed, replicate, i);
    const auto result = selection::select_treatment(handle, history, cfg);
    EvalRecord r = evaluate_selection(result, patient, dataset.system(), dataset.manifest.config.params, grid, target);
    r.dataset = std::string(sim::to_string(dataset.system()));
    r.method = method_tag;
    r.constraint = std::string(selection::to_string(constraint.kind));
    r.lambda = lambda;
    r.replicate = replicate;
    r.patient = i;
    records[i] = std::move(r);
  });
  return records;
}

}  // namespace

std::vector<double> default_lambdas() {
  return {0.0, 1e-5, 1e-4, 1e-3, 1e-2, 0.0625, 0.125, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0};
}

std::vector<double> default_percentiles() { return {10.0, 25.0, 50.0, 75.0, 100.0}; }

std::uint64_t training_seed(std::uint64_t seed, std::size_t replicate, std::size_t member) {
  return derive_seed(seed, {kTrainStream, replicate, member});
}

std::uint64_t selection_seed(std::uint64_t seed, std::size_t replicate, std::size_t patient) {
  return derive_seed(seed, {kSelectStream, replicate, patient});
}

void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn) {
  workers = std::max<std::size_t>(1, std::min(workers, n));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> threads;
  for (std::size_t w = 0; w < workers; ++w)
    threads.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
          next = n;
        }
      }
    });
  for (auto& th : threads) th.join();
  if (error) std::rethrow_exception(error);
}

uncertainty::EnsembleHandle train_handle(uncertainty::Method method, const ModelSpec& spec,
                                         const data::Dataset& dataset, std::uint64_t seed, std::size_t replicate) {
  auto train_member = [&](std::size_t member) {
    auto model = std::make_shared<models::SurrogateModel>(spec.arch);
    models::TrainConfig cfg = spec.train;
    cfg.seed = training_seed(seed, replicate, member);
    models::train(*model, dataset, cfg);
    return model;
  };
  switch (method) {
    case uncertainty::Method::mc_dropout:
      return uncertainty::mc_dropout_handle(train_member(0), spec.n_passes);
    case uncertainty::Method::ensemble: {
      std::vector<std::shared_ptr<const models::CounterfactualModel>> members;
      for (std::size_t m = 0; m < spec.ensemble_size; ++m) members.push_back(train_member(m));
      return uncertainty::ensemble_handle(std::move(members));
    }
    case uncertainty::Method::geometric: {
      const auto a = train_member(0);
      const auto b = train_member(1);
      uncertainty::GeometricConfig g = spec.geometric;
      g.seed = training_seed(seed, replicate, 2);
      return uncertainty::build_geometric_ensemble(*a, *b, dataset, g);
    }
  }
  throw ValidationError("unknown uncertainty method");
}

void SweepSpec::validate() const {
  if (lambdas.empty()) throw ValidationError("sweep: lambda list is empty");
  for (double l : lambdas)
    if (!(l >= 0.0)) throw ValidationError("sweep: lambda values must be >= 0");
  if (replicates == 0) throw ValidationError("sweep: replicates must be positive");
  if (constraints.empty()) throw ValidationError("sweep: constraint list is empty");
  for (const auto& c : constraints) c.validate();
  if (methods.empty()) throw ValidationError("sweep: method list is empty");
  model.arch.validate();
  model.train.validate();
}

HandleGrid train_handles(const SweepSpec& spec, const data::Dataset& dataset) {
  HandleGrid grid;
  for (const auto method : spec.methods) {
    std::vector<uncertainty::EnsembleHandle> per_rep;
    for (std::size_t r = 0; r < spec.replicates; ++r)
      per_rep.push_back(train_handle(method, spec.model, dataset, spec.seed, r));
    grid.push_back(std::move(per_rep));
  }
  return grid;
}

std::vector<EvalRecord> run_lambda_sweep(const SweepSpec& spec, const data::Dataset& dataset,
                                         const HandleGrid& handles,
                                         const std::function<void(const std::vector<EvalRecord>&)>& on_lambda) {
  spec.validate();
  if (handles.size() != spec.methods.size()) throw ValidationError("sweep: handle grid does not match method list");
  const std::size_t n = test_count(dataset, spec.max_test_patients);
  const auto target = target_vector(spec.target, dataset, spec.model.arch.horizon);
  std::vector<EvalRecord> all;
  for (std::size_t m = 0; m < spec.methods.size(); ++m) {
    const std::string tag(uncertainty::to_string(spec.methods[m]));
    for (const auto& constraint : spec.constraints)
      for (double lambda : spec.lambdas) {
        std::vector<EvalRecord> cell;
        for (std::size_t r = 0; r < spec.replicates; ++r) {
          auto recs = select_cell(handles[m].at(r), dataset, spec.selection, constraint, lambda, target, n, spec.seed,
                                  r, tag, spec.workers);
          cell.insert(cell.end(), recs.begin(), recs.end());
        }
        if (on_lambda) on_lambda(cell);
        all.insert(all.end(), cell.begin(), cell.end());
      }
  }
  return all;
}

std::vector<EvalRecord> run_lambda_sweep(const SweepSpec& spec, const data::Dataset& dataset) {
  spec.validate();
  return run_lambda_sweep(spec, dataset, train_handles(spec, dataset));
}

std::vector<DeferralPoint> run_deferral_curve(const std::vector<EvalRecord>& records,
                                              const std::vector<double>& percentiles, std::uint64_t seed) {
  if (percentiles.empty()) throw ValidationError("deferral: percentile list is empty");
  using Key = std::tuple<std::string, std::string, std::string, double, std::size_t>;
  std::map<Key, std::vector<const EvalRecord*>> groups;
  std::vector<Key> order;
  for (const auto& r : records) {
    const Key k{r.dataset, r.method, r.constraint, r.lambda, r.replicate};
    auto [it, inserted] = groups.try_emplace(k);
    if (inserted) order.push_back(k);
    it->second.push_back(&r);
  }
  std::vector<DeferralPoint> points;
  for (const auto& k : order) {
    const auto& g = groups[k];
    std::vector<double> var, err;
    for (const auto* r : g) {
      var.push_back(r->mean_variance);
      err.push_back(r->rmse_selection);
    }
    for (double p : percentiles) {
      const auto s = uncertainty::percentile_subsets(
          var, p, derive_seed(seed, {std::get<4>(k), static_cast<std::uint64_t>(std::llround(p * 1000.0))}));
      auto mean_of = [&](const std::vector<std::size_t>& idx) {
        double sum = 0.0;
        for (std::size_t i : idx) sum += err[i];
        return sum / static_cast<double>(idx.size());
      };
      points.push_back(DeferralPoint{std::get<0>(k), std::get<1>(k), std::get<2>(k), std::get<3>(k), std::get<4>(k),
                                     p, s.least_uncertain.size(), mean_of(s.least_uncertain), mean_of(s.random)});
    }
  }
  return points;
}

void write_deferral_csv(const std::filesystem::path& path, const std::vector<DeferralPoint>& points) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << kDeferralHeader << '\n';
  for (const auto& p : points)
    out << p.dataset << ',' << p.method << ',' << p.constraint << ',' << format_number(p.lambda) << ','
        << p.replicate << ',' << format_number(p.percentile) << ',' << p.n << ','
        << format_number(p.least_uncertain_rmse) << ',' << format_number(p.random_rmse) << '\n';
}

void ConfoundingSpec::validate() const {
  if (hsic_weights.empty()) throw ValidationError("confounding: hsic weight list is empty");
  for (double w : hsic_weights)
    if (!(w >= 0.0)) throw ValidationError("confounding: hsic weights must be >= 0");
  if (replicates == 0) throw ValidationError("confounding: replicates must be positive");
  if (!(lambda >= 0.0)) throw ValidationError("confounding: lambda must be >= 0");
  model.arch.validate();
  model.train.validate();
}

ConfoundingResult run_confounding_sweep(const ConfoundingSpec& spec, const data::Dataset& dataset) {
  spec.validate();
  if (dataset.manifest.config.policy.alpha != spec.alpha)
    throw ValidationError("confounding sweep expects data generated with alpha = " + format_number(spec.alpha) +
                          ", dataset has alpha = " + format_number(dataset.manifest.config.policy.alpha));
  const std::size_t n = test_count(dataset, spec.max_test_patients);
  const auto target = target_vector(spec.target, dataset, spec.model.arch.horizon);
  ConfoundingResult out;
  for (double w : spec.hsic_weights)
    for (std::size_t r = 0; r < spec.replicates; ++r) {
      ModelSpec ms = spec.model;
      ms.train.hsic_weight = w;
      const auto handle = train_handle(uncertainty::Method::mc_dropout, ms, dataset, spec.seed, r);
      const auto& model = static_cast<const models::SurrogateModel&>(*handle.members.front());
      const auto rep = models::representations(model, dataset.val, dataset.grid());
      const std::string tag = "mc-dropout/hsic=" + format_number(w);
      auto recs = select_cell(handle, dataset, spec.selection, spec.selection.constraint, spec.lambda, target, n,
                              spec.seed, r, tag, spec.workers);
      ConfoundingRow row;
      row.hsic_weight = w;
      row.replicate = r;
      row.hsic = balancing::hsic_value(rep.treatments, rep.phi);
      for (const auto& rec : recs) {
        row.rmse_selection += rec.rmse_selection;
        row.rmse_target += rec.rmse_target;
        row.mean_variance += rec.mean_variance;
      }
      const double k = static_cast<double>(recs.size());
      row.rmse_selection /= k;
      row.rmse_target /= k;
      row.mean_variance /= k;
      out.rows.push_back(row);
      out.records.insert(out.records.end(), recs.begin(), recs.end());
    }
  return out;
}

void write_confounding_csv(const std::filesystem::path& path, const std::vector<ConfoundingRow>& rows) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << kConfoundingHeader << '\n';
  for (const auto& r : rows)
    out << format_number(r.hsic_weight) << ',' << r.replicate << ',' << format_number(r.hsic) << ','
        << format_number(r.rmse_selection) << ',' << format_number(r.rmse_target) << ','
        << format_number(r.mean_variance) << '\n';
}

}  // namespace ctsel::eval
