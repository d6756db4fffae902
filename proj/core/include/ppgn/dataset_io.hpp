#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "ppgn/fault_sim.hpp"
#include "ppgn/feeder.hpp"

namespace ppgn {

inline constexpr const char* kDataFormat = "ppgn-data-v1";

std::uint64_t fnv1a64(std::string_view bytes);
std::string file_hash(const std::filesystem::path& path);

nlohmann::json sample_to_json(const Sample& s, const FeederGraph& g);
Sample sample_from_json(const nlohmann::json& j, const FeederGraph& g);

/// Writes DIR/samples.ndjson (raw features) and DIR/manifest.json carrying the
/// feeder path and hash, grid, seed and normalization statistics.
void write_dataset(const std::filesystem::path& dir, const Dataset& ds, const FeederGraph& g,
                   const std::filesystem::path& feeder_path, const NormStats& stats);

struct LoadedDataset {
  FeederGraph feeder;
  Dataset dataset;
  NormStats stats;
  nlohmann::json manifest;
};

/// Reads a dataset directory; the feeder is reloaded from the manifest path
/// and its hash must match.
LoadedDataset read_dataset(const std::filesystem::path& dir);

}  // namespace ppgn
