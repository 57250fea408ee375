// ctsel: simulate, train, select, sweep, deferral, confounding, report.
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <list>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ctsel/cli/config.hpp"
#include "ctsel/common/error.hpp"
#include "ctsel/data/dataset.hpp"
#include "ctsel/eval/evaluate.hpp"
#include "ctsel/eval/report.hpp"
#include "ctsel/eval/sweeps.hpp"
#include "ctsel/models/model_io.hpp"
#include "ctsel/models/train.hpp"
#include "ctsel/selection/select.hpp"

namespace fs = std::filesystem;
using namespace ctsel;
using nlohmann::ordered_json;

namespace {

constexpr int kUsageError = 1;
constexpr int kRuntimeError = 2;

// Flags that map onto config keys; empty optionals are left alone.
struct Overrides {
  std::list<std::pair<std::string, std::optional<std::string>>> items;  // stable addresses for CLI11

  std::optional<std::string>& slot(const std::string& key) {
    items.emplace_back(key, std::nullopt);
    return items.back().second;
  }
};

struct Common {
  std::string config_path;
  std::string seed;
  std::string out;
  std::string workers;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config_path, "TOML-style config file")->check(CLI::ExistingFile);
  cmd->add_option("--seed", c.seed, "master seed (overrides config and CTSEL_SEED)");
  cmd->add_option("--out", c.out, "output directory");
}

cli::RunConfig resolve(const Common& c, const std::vector<std::pair<std::string, std::string>>& flags) {
  cli::RunConfig config = cli::load_config(c.config_path);
  if (!c.seed.empty()) cli::apply_override(config, "seed", c.seed);
  if (!c.out.empty()) config.output = c.out;
  if (!c.workers.empty()) cli::apply_override(config, "sweep.workers", c.workers);
  for (const auto& [key, value] : flags) cli::apply_override(config, key, value);
  return config;
}

// Print and echo the resolved config; call once all flags and data-derived
// settings are in.
void announce(const cli::RunConfig& config) {
  config.validate();
  std::cout << cli::to_json(config);
  cli::write_resolved(config, config.output);
}

// The dataset's own generation settings replace the configured ones.
void adopt_dataset(cli::RunConfig& config, const data::Dataset& dataset) {
  config.generation = dataset.manifest.config;
  config.model.arch.horizon = dataset.grid().n_horizon;
}

data::Dataset load_data(const std::string& dir) {
  if (!fs::is_directory(dir)) throw ConfigError("data directory '" + dir + "' not found; run 'ctsel simulate' first");
  return data::load_dataset(dir);
}

data::Dataset data_for(cli::RunConfig& config, const std::string& data_dir) {
  if (!data_dir.empty()) {
    auto ds = load_data(data_dir);
    adopt_dataset(config, ds);
    return ds;
  }
  config.generation.master_seed = config.seed;
  config.model.arch.horizon = config.generation.grid.n_horizon;
  return data::Dataset{};  // generated after validation
}

data::Dataset generate_into(const cli::RunConfig& config, const fs::path& dir) {
  std::cerr << "generating " << sim::to_string(config.generation.system) << " data into " << dir.string() << "\n";
  auto ds = data::generate_dataset(config.generation);
  data::save_dataset(ds, dir);
  return ds;
}

std::vector<std::pair<std::string, std::string>> collect(const Overrides& o) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& [k, v] : o.items)
    if (v) out.emplace_back(k, *v);
  return out;
}

void save_handle(const uncertainty::EnsembleHandle& handle, const fs::path& dir, const std::string& data_dir) {
  fs::create_directories(dir);
  ordered_json j;
  j["method"] = std::string(uncertainty::to_string(handle.method));
  j["n_passes"] = handle.n_passes;
  j["data"] = data_dir.empty() ? std::string() : fs::absolute(data_dir).string();
  ordered_json files = ordered_json::array();
  for (std::size_t k = 0; k < handle.members.size(); ++k) {
    const auto* model = dynamic_cast<const models::SurrogateModel*>(handle.members[k].get());
    if (model == nullptr) throw Error("handle member is not a surrogate model");
    const std::string name = "member-" + std::to_string(k) + ".ctsel";
    models::save_model(*model, dir / name);
    files.push_back(name);
  }
  j["members"] = files;
  std::ofstream(dir / "handle.json", std::ios::binary | std::ios::trunc) << j.dump(2) << "\n";
}

struct LoadedHandle {
  uncertainty::EnsembleHandle handle;
  std::string data_dir;
};

LoadedHandle load_handle(const fs::path& dir) {
  const fs::path path = dir / "handle.json";
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("no handle.json in '" + dir.string() + "'; run 'ctsel train' first");
  ordered_json j;
  try {
    j = ordered_json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  LoadedHandle out;
  out.handle.method = uncertainty::method_from_string(j.at("method").get<std::string>());
  out.handle.n_passes = j.at("n_passes").get<std::size_t>();
  out.data_dir = j.value("data", std::string());
  for (const auto& f : j.at("members"))
    out.handle.members.push_back(std::make_shared<models::SurrogateModel>(models::load_model(dir / f.get<std::string>())));
  out.handle.validate();
  return out;
}

int cmd_simulate(const Common& c, const Overrides& o) {
  cli::RunConfig config = resolve(c, collect(o));
  config.generation.master_seed = config.seed;
  announce(config);
  const auto ds = generate_into(config, config.output);
  std::cout << "wrote " << ds.train.size() << "/" << ds.val.size() << "/" << ds.test.size()
            << " train/val/test patients to " << config.output << " (" << ds.manifest.resampled << " resampled)\n";
  return 0;
}

int cmd_train(const Common& c, const Overrides& o, const std::string& data_dir, const std::string& ensemble,
              bool method_given) {
  auto flags = collect(o);
  if (!ensemble.empty() && ensemble != "1") flags.emplace_back("uncertainty.ensemble_size", ensemble);
  if (!ensemble.empty() && !method_given)
    flags.emplace_back("uncertainty.method", ensemble == "1" ? "mc-dropout" : "ensemble");
  cli::RunConfig config = resolve(c, flags);
  auto ds = load_data(data_dir);
  adopt_dataset(config, ds);
  announce(config);
  const auto handle = eval::train_handle(config.method, config.model, ds, config.seed, 0);
  save_handle(handle, config.output, data_dir);
  const auto& first = *handle.members.front();
  const double mse = models::factual_mse(first, ds.val, ds.grid());
  const double base = models::persistence_mse(ds.val, ds.grid(), ds.grid().n_horizon);
  std::cout << "saved " << handle.members.size() << " member(s) to " << config.output << "; val factual mse "
            << eval::format_number(mse) << " (persistence " << eval::format_number(base) << ")\n";
  return 0;
}

int cmd_select(const Common& c, const Overrides& o, const std::string& model_dir, std::string data_dir) {
  cli::RunConfig config = resolve(c, collect(o));
  config.validate();  // flag errors surface before any file is read
  auto loaded = load_handle(model_dir);
  if (data_dir.empty()) data_dir = loaded.data_dir;
  if (data_dir.empty()) throw ConfigError("no data directory recorded in the model; pass --data DIR");
  auto ds = load_data(data_dir);
  adopt_dataset(config, ds);
  config.method = loaded.handle.method;
  config.model.n_passes = loaded.handle.n_passes;
  if (config.patient >= ds.test.size())
    throw ConfigError("selection.patient: index " + std::to_string(config.patient) + " out of range (test split has " +
                      std::to_string(ds.test.size()) + " patients)");
  announce(config);

  const auto& grid = ds.grid();
  const std::size_t tau = loaded.handle.horizon();
  const auto& patient = ds.test[config.patient];
  const auto history = sim::history_at(patient, grid.t_index());
  selection::SelectionConfig cfg = config.selection;
  const double y_star = std::isnan(config.target) ? selection::default_target(ds.system()) : config.target;
  cfg.target.assign(tau, y_star);
  cfg.initial_doses = selection::policy_initial_doses(history, ds.manifest.config.policy, grid, tau);
  cfg.seed = eval::selection_seed(config.seed, 0, config.patient);
  const auto result = selection::select_treatment(loaded.handle, history, cfg);
  auto record = eval::evaluate_selection(result, patient, ds.system(), ds.manifest.config.params, grid, cfg.target);
  record.dataset = std::string(sim::to_string(ds.system()));
  record.method = std::string(uncertainty::to_string(loaded.handle.method));
  record.constraint = std::string(selection::to_string(cfg.constraint.kind));
  record.lambda = cfg.lambda;
  record.patient = config.patient;

  ordered_json j;
  j["patient"] = config.patient;
  j["a_star"] = result.a_star;
  j["mu"] = result.final_estimate.mu;
  j["var"] = result.final_estimate.var;
  j["outcome"] = eval::counterfactual_outcomes(patient, ds.system(), ds.manifest.config.params, grid, result.a_star);
  j["objective_trace"] = result.objective_trace;
  j["best_step"] = result.best_step;
  j["best_objective"] = result.best_objective;
  j["saturated_steps"] = result.saturated_steps;
  std::ofstream(fs::path(config.output) / "selection.json", std::ios::binary | std::ios::trunc) << j.dump(2) << "\n";
  eval::write_records_csv(fs::path(config.output) / "records.csv", {record});
  std::cout << eval::kRecordsHeader << "\n" << eval::record_line(record) << "\n";
  return 0;
}

int cmd_sweep(const Common& c, const Overrides& o, const std::string& data_dir) {
  cli::RunConfig config = resolve(c, collect(o));
  auto ds = data_for(config, data_dir);
  announce(config);
  const fs::path out = config.output;
  if (data_dir.empty()) ds = generate_into(config, out / "data");
  const auto spec = config.sweep_spec();
  const fs::path records_path = out / "records.csv";
  fs::remove(records_path);
  std::cerr << "training " << spec.methods.size() * spec.replicates << " handle(s)\n";
  const auto handles = eval::train_handles(spec, ds);
  const auto records = eval::run_lambda_sweep(spec, ds, handles, [&](const std::vector<eval::EvalRecord>& cell) {
    eval::append_records_csv(records_path, cell);
    std::cerr << "lambda " << eval::format_number(cell.front().lambda) << " done\n";
  });
  eval::write_report(records, out);
  std::cout << "wrote " << records.size() << " records to " << records_path.string() << "\n";
  return 0;
}

int cmd_deferral(const Common& c, const Overrides& o, const std::string& records_path) {
  cli::RunConfig config = resolve(c, collect(o));
  announce(config);
  std::vector<eval::EvalRecord> chosen;
  for (const auto& r : eval::read_records_csv(records_path))
    if (r.lambda == config.deferral_lambda) chosen.push_back(r);
  if (chosen.empty())
    throw ConfigError("no records with lambda = " + eval::format_number(config.deferral_lambda) + " in " +
                      records_path + "; set --lambda");
  const auto points = eval::run_deferral_curve(chosen, config.percentiles, config.seed);
  const fs::path path = fs::path(config.output) / "deferral.csv";
  eval::write_deferral_csv(path, points);
  std::cout << eval::kDeferralHeader << "\n";
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) std::cout << line << "\n";
  return 0;
}

int cmd_confounding(const Common& c, const Overrides& o, const std::string& data_dir) {
  auto flags = collect(o);
  cli::RunConfig config = resolve(c, flags);
  if (data_dir.empty()) config.generation.policy.alpha = config.confounding_alpha;
  auto ds = data_for(config, data_dir);
  announce(config);
  const fs::path out = config.output;
  if (data_dir.empty()) ds = generate_into(config, out / "data");
  const auto result = eval::run_confounding_sweep(config.confounding_spec(), ds);
  eval::write_confounding_csv(out / "confounding.csv", result.rows);
  eval::write_records_csv(out / "records.csv", result.records);
  std::cout << eval::kConfoundingHeader << "\n";
  for (const auto& r : result.rows)
    std::cout << eval::format_number(r.hsic_weight) << ',' << r.replicate << ',' << eval::format_number(r.hsic) << ','
              << eval::format_number(r.rmse_selection) << ',' << eval::format_number(r.rmse_target) << ','
              << eval::format_number(r.mean_variance) << "\n";
  return 0;
}

int cmd_report(const Common& c, const std::string& records_path) {
  cli::RunConfig config = resolve(c, {});
  announce(config);
  const auto records = eval::read_records_csv(records_path);
  eval::write_report(records, config.output);
  std::cout << "wrote summary.csv and curves.svg to " << config.output << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Uncertainty-aware treatment selection on simulated patients"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "show help for every subcommand");

  Common common;
  Overrides o;
  std::string data_dir, model_dir, records, ensemble, method;

  auto* simulate = app.add_subcommand("simulate", "generate a dataset");
  add_common(simulate, common);
  simulate->add_option("--dataset", o.slot("simulation.system"), "cvs or covid");
  simulate->add_option("--train-size", o.slot("simulation.train_size"));
  simulate->add_option("--val-size", o.slot("simulation.val_size"));
  simulate->add_option("--test-size", o.slot("simulation.test_size"));
  simulate->add_option("--alpha", o.slot("policy.alpha"), "policy confounding strength");

  auto* train = app.add_subcommand("train", "train surrogate model(s) for one uncertainty method");
  add_common(train, common);
  train->add_option("--data", data_dir, "dataset directory")->required();
  train->add_option("--model", o.slot("model.flavor"), "crn-lite or gnet-lite");
  train->add_option("--ensemble", ensemble, "ensemble size (1 = mc-dropout)");
  train->add_option("--method", method, "mc-dropout, ensemble or geometric");
  train->add_option("--hsic-weight", o.slot("training.hsic_weight"));
  train->add_option("--epochs", o.slot("training.epochs"));
  train->add_option("--hidden", o.slot("model.hidden"));

  auto* select = app.add_subcommand("select", "optimise the treatment of one test patient");
  add_common(select, common);
  select->add_option("--model-dir", model_dir, "directory written by 'train'")->required();
  select->add_option("--data", data_dir, "dataset directory (default: the one the model was trained on)");
  select->add_option("--lambda", o.slot("selection.lambda"), "uncertainty weight (>= 0)");
  select->add_option("--constraint", o.slot("selection.constraint"), "range, soft, soft-discontinuous or tanh");
  select->add_option("--patient", o.slot("selection.patient"), "test patient index");
  select->add_option("--target", o.slot("selection.target"), "constant desired outcome");
  select->add_option("--steps", o.slot("selection.steps"));

  auto* sweep = app.add_subcommand("sweep", "lambda sweep over test patients and replicates");
  add_common(sweep, common);
  sweep->add_option("--data", data_dir, "dataset directory (default: generate from the config)");
  sweep->add_option("--workers", common.workers, "parallel selections");
  sweep->add_option("--lambda", o.slot("sweep.lambdas"), "comma-separated lambda list");

  auto* deferral = app.add_subcommand("deferral", "least-uncertain versus random subsets of sweep records");
  add_common(deferral, common);
  deferral->add_option("--records", records, "records.csv from a sweep")->required()->check(CLI::ExistingFile);
  deferral->add_option("--lambda", o.slot("sweep.deferral_lambda"), "records lambda to rank");

  auto* confounding = app.add_subcommand("confounding", "HSIC balancing weight study");
  add_common(confounding, common);
  confounding->add_option("--data", data_dir, "dataset directory (default: generate with the configured alpha)");
  confounding->add_option("--workers", common.workers, "parallel selections");

  auto* report = app.add_subcommand("report", "summary table and lambda curves from records");
  add_common(report, common);
  report->add_option("--records", records, "records.csv")->required()->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << " (see --help)\n";
    return kUsageError;
  }

  try {
    if (!method.empty()) o.slot("uncertainty.method") = method;
    if (*simulate) return cmd_simulate(common, o);
    if (*train) return cmd_train(common, o, data_dir, ensemble, !method.empty());
    if (*select) return cmd_select(common, o, model_dir, data_dir);
    if (*sweep) return cmd_sweep(common, o, data_dir);
    if (*deferral) return cmd_deferral(common, o, records);
    if (*confounding) return cmd_confounding(common, o, data_dir);
    if (*report) return cmd_report(common, records);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsageError;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsageError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntimeError;
  }
  return kUsageError;
}
