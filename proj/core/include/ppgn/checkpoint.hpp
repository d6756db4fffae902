#pragma once

#include <filesystem>
#include <map>
#include <string>

#include <nlohmann/json.hpp>

#include "ppgn/tensor.hpp"

namespace ppgn {

inline constexpr const char* kCheckpointFormat = "ppgn-ckpt-v1";

/// Named parameter stores plus optimizer and RNG state. `meta` carries
/// whatever the owner needs to rebuild the model around the parameters.
struct Checkpoint {
  std::map<std::string, ParamStore> stores;
  std::string rng_state;
  nlohmann::json meta = nlohmann::json::object();
};

nlohmann::json store_to_json(const ParamStore& store);
ParamStore store_from_json(const nlohmann::json& j);

std::string rng_state_string(const Rng& rng);
Rng rng_from_state(const std::string& state);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace ppgn
