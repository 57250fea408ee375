#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "ctsel/models/surrogate.hpp"

namespace ctsel::models {

inline constexpr std::string_view kModelMagic = "CTSELMDL";
inline constexpr std::string_view kModelSchemaVersion = "1";

/// Layout: 8-byte magic, u32 header length, JSON header (schema version,
/// flavor, architecture, weight names and shapes), little-endian float64
/// weight blocks in header order, u32 CRC-32 of everything before it.
std::string serialize_model(const SurrogateModel& model);
SurrogateModel deserialize_model(const std::string& bytes, std::optional<Flavor> expected_flavor = std::nullopt);

void save_model(const SurrogateModel& model, const std::filesystem::path& path);
/// Throws FormatError on version or flavor mismatch, ChecksumError when the
/// stored checksum does not match the contents.
SurrogateModel load_model(const std::filesystem::path& path, std::optional<Flavor> expected_flavor = std::nullopt);

}  // namespace ctsel::models
