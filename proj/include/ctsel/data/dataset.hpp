#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ctsel/data/policy.hpp"
#include "ctsel/sim/trajectory.hpp"

namespace ctsel::data {

using sim::PatientTrajectory;

struct DatasetSizes {
  std::size_t train = 1024;
  std::size_t val = 128;
  std::size_t test = 128;

  bool operator==(const DatasetSizes&) const = default;
};

enum class Split : std::uint64_t { train = 0, val = 1, test = 2 };
std::string_view to_string(Split split);

struct GenerationConfig {
  sim::System system = sim::System::covid;
  DatasetSizes sizes;
  DosePolicyConfig policy;
  sim::TimeGrid grid;
  sim::SimParams params;
  std::uint64_t master_seed = 0;

  bool operator==(const GenerationConfig&) const = default;
};

/// Defaults for a system: policy adjustment matched to the system.
GenerationConfig default_generation_config(sim::System system);

struct DatasetManifest {
  std::string schema_version = "1";
  GenerationConfig config;
  /// Patients regenerated after a simulator divergence.
  std::size_t resampled = 0;

  bool operator==(const DatasetManifest&) const = default;
};

struct Dataset {
  DatasetManifest manifest;
  std::vector<PatientTrajectory> train;
  std::vector<PatientTrajectory> val;
  std::vector<PatientTrajectory> test;

  const std::vector<PatientTrajectory>& split(Split s) const;
  std::vector<PatientTrajectory>& split(Split s);
  const sim::TimeGrid& grid() const { return manifest.config.grid; }
  sim::System system() const { return manifest.config.system; }
  bool operator==(const Dataset&) const = default;
};

/// Seed of the first generation attempt for patient `index` of `split`.
std::uint64_t patient_seed(std::uint64_t master_seed, Split split, std::size_t index);

/// Simulate one patient under the observational policy, cycle by cycle.
/// Throws DivergenceError if the simulator diverges.
PatientTrajectory generate_patient(const GenerationConfig& config, std::uint64_t seed);

/// Policy center the observational policy uses for the cycle active at the
/// end of `history`, replayed from the observed outcomes.
double policy_center_at(const sim::PatientHistory& history, const DosePolicyConfig& policy, const sim::TimeGrid& grid);

Dataset generate_dataset(const GenerationConfig& config);

/// Newline-delimited JSON: one `<split>-seed<master>.ndjson` per split plus
/// `manifest.json`.
void save_dataset(const Dataset& dataset, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);

std::string serialize_patient(const PatientTrajectory& patient);
PatientTrajectory parse_patient(const std::string& line, std::size_t line_number);

}  // namespace ctsel::data
