#pragma once

#include <filesystem>
#include <string>

#include "json.hpp"
#include "ssnas/diffcore/params.hpp"

namespace ssnas::diffcore {

inline constexpr int kCheckpointFormatVersion = 1;

struct Checkpoint {
  ParameterStore store;
  // Free-form model description (kind, widths, input dim, ...).
  nlohmann::json metadata;
};

// JSON document: {"format_version", "metadata", "params": {name: {rows, cols,
// data}}, "buffers": {...}}. Doubles are written with round-trip precision so
// save followed by load reproduces every value bit for bit.
nlohmann::json checkpoint_to_json(const ParameterStore& store, const nlohmann::json& metadata);
Checkpoint checkpoint_from_json(const nlohmann::json& doc);

void save_checkpoint(const std::filesystem::path& path, const ParameterStore& store, const nlohmann::json& metadata);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace ssnas::diffcore
