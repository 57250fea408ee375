#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "ctsel/data/dataset.hpp"
#include "ctsel/eval/sweeps.hpp"

namespace ctsel::cli {

/// A scalar or array value from the config file, with its source text.
struct ConfigValue {
  enum class Kind { number, boolean, string, array };
  Kind kind = Kind::string;
  std::string text;  // number literal, string contents, or "true"/"false"
  std::vector<ConfigValue> items;
  std::size_t line = 0;
};

/// TOML subset: [section] headers, key = value, # comments; values are
/// numbers, "strings", true/false, and single-line [arrays]. Keys are
/// returned as "section.key".
std::map<std::string, ConfigValue> parse_config_text(std::string_view text);

struct RunConfig {
  std::uint64_t seed = 0;
  std::string output = "out";

  data::GenerationConfig generation = data::default_generation_config(sim::System::covid);
  eval::ModelSpec model;
  uncertainty::Method method = uncertainty::Method::mc_dropout;
  selection::SelectionConfig selection;
  /// Constant desired outcome; NaN picks the dataset default.
  double target = std::numeric_limits<double>::quiet_NaN();
  std::size_t patient = 0;

  std::vector<double> lambdas = eval::default_lambdas();
  std::size_t replicates = 6;
  std::vector<std::string> constraints{"soft"};
  std::vector<std::string> methods{"mc-dropout"};
  std::size_t max_test_patients = 0;
  std::size_t workers = 1;
  std::vector<double> percentiles = eval::default_percentiles();
  double deferral_lambda = 0.0;

  std::vector<double> hsic_weights{0.0, 0.1, 1.0};
  std::size_t confounding_replicates = 3;
  double confounding_alpha = 2.0;
  double confounding_lambda = 0.0;

  void validate() const;
  eval::SweepSpec sweep_spec() const;
  eval::ConfoundingSpec confounding_spec() const;
  /// Constraint named `name` with this config's clamp parameters.
  selection::Constraint constraint(std::string_view name) const;
};

/// Every accepted "section.key".
const std::vector<std::string>& known_keys();

/// Closest known key by edit distance, or empty when nothing is close.
std::string suggest_key(std::string_view unknown);

/// Apply parsed values; unknown keys and type mismatches raise ConfigError
/// naming the key path.
void apply_values(RunConfig& config, const std::map<std::string, ConfigValue>& values);

/// Apply one "section.key" override given as text (command-line flags).
void apply_override(RunConfig& config, const std::string& key, const std::string& value);

/// Defaults, then the file (if non-empty), then CTSEL_SEED. Flags are applied
/// by the caller afterwards.
RunConfig load_config(const std::filesystem::path& path);
RunConfig default_config();

std::string to_json(const RunConfig& config);
void write_resolved(const RunConfig& config, const std::filesystem::path& out_dir);

std::size_t levenshtein(std::string_view a, std::string_view b);

}  // namespace ctsel::cli
