#include "ppgn/checkpoint.hpp"

#include <fstream>
#include <sstream>

#include "ppgn/diagnostics.hpp"

namespace ppgn {
namespace {

nlohmann::json matrix_json(const Matrix& m) {
  return nlohmann::json{{"shape", {m.rows(), m.cols()}},
                        {"values", std::vector<double>(m.data(), m.data() + m.size())}};
}

Matrix matrix_from(const nlohmann::json& j, const std::string& what) {
  const auto shape = j.at("shape").get<std::vector<Eigen::Index>>();
  const auto values = j.at("values").get<std::vector<double>>();
  if (shape.size() != 2 || static_cast<Eigen::Index>(values.size()) != shape[0] * shape[1])
    throw ParseError("checkpoint: bad shape for " + what);
  Matrix m(shape[0], shape[1]);
  std::copy(values.begin(), values.end(), m.data());
  return m;
}

}  // namespace

nlohmann::json store_to_json(const ParamStore& store) {
  nlohmann::json params = nlohmann::json::array();
  for (const auto& p : store.params()) {
    params.push_back({{"name", p.name},
                      {"value", matrix_json(p.value)},
                      {"adam_m", matrix_json(p.m)},
                      {"adam_v", matrix_json(p.v)},
                      {"steps", p.steps}});
  }
  return {{"step", store.step()}, {"params", params}};
}

ParamStore store_from_json(const nlohmann::json& j) {
  ParamStore store;
  for (const auto& pj : j.at("params")) {
    const auto name = pj.at("name").get<std::string>();
    store.add(name, matrix_from(pj.at("value"), name));
    auto& p = store.at(name);
    p.m = matrix_from(pj.at("adam_m"), name);
    p.v = matrix_from(pj.at("adam_v"), name);
    p.steps = pj.at("steps").get<std::int64_t>();
  }
  store.set_step(j.at("step").get<std::int64_t>());
  return store;
}

std::string rng_state_string(const Rng& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

Rng rng_from_state(const std::string& state) {
  Rng rng;
  std::istringstream is(state);
  is >> rng;
  if (!is) throw ParseError("checkpoint: malformed rng state");
  return rng;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  nlohmann::json j;
  j["format"] = kCheckpointFormat;
  for (const auto& [name, store] : ckpt.stores) j["stores"][name] = store_to_json(store);
  j["rng_state"] = ckpt.rng_state;
  j["meta"] = ckpt.meta;
  std::ofstream out(path);
  if (!out) throw Error("cannot write checkpoint " + path.string());
  out << j.dump() << '\n';
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open checkpoint " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("checkpoint " + path.string() + ": " + e.what());
  }
  if (j.value("format", "") != kCheckpointFormat)
    throw ParseError("checkpoint " + path.string() + ": expected format " + kCheckpointFormat);
  Checkpoint ckpt;
  try {
    if (j.contains("stores"))
      for (const auto& [name, sj] : j.at("stores").items()) ckpt.stores.emplace(name, store_from_json(sj));
    ckpt.rng_state = j.value("rng_state", "");
    ckpt.meta = j.value("meta", nlohmann::json::object());
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("checkpoint " + path.string() + ": " + e.what());
  }
  return ckpt;
}

}  // namespace ppgn
