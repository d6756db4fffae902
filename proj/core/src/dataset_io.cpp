#include "ppgn/dataset_io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "ppgn/diagnostics.hpp"

namespace ppgn {

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string file_hash(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(ss.str())));
  return buf;
}

nlohmann::json sample_to_json(const Sample& s, const FeederGraph& g) {
  nlohmann::json x = nlohmann::json::array();
  for (Eigen::Index r = 0; r < s.x.rows(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index c = 0; c < s.x.cols(); ++c) row.push_back(s.x(r, c));
    x.push_back(std::move(row));
  }
  const auto& f = s.meta.fault;
  return {{"label", g.id_of(s.label)},
          {"x", std::move(x)},
          {"meta",
           {{"node", g.id_of(f.node)},
            {"kind", to_string(f.kind)},
            {"phases", f.phases.str()},
            {"impedance", f.impedance},
            {"load_scale", s.meta.load_scale},
            {"switch_scenario", s.meta.switch_scenario},
            {"seed", s.meta.seed}}}};
}

Sample sample_from_json(const nlohmann::json& j, const FeederGraph& g) {
  Sample s;
  s.label = g.index_of(j.at("label").get<int>());
  const auto& x = j.at("x");
  if (x.size() != g.node_count()) throw ParseError("sample row count differs from feeder node count");
  s.x.resize(static_cast<Eigen::Index>(g.node_count()), 6);
  for (std::size_t r = 0; r < x.size(); ++r) {
    if (x[r].size() != 6) throw ParseError("sample rows must have 6 columns");
    for (std::size_t c = 0; c < 6; ++c) s.x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = x[r][c].get<double>();
  }
  const auto& m = j.at("meta");
  s.meta.fault.node = g.index_of(m.at("node").get<int>());
  s.meta.fault.kind = fault_kind_from(m.at("kind").get<std::string>());
  s.meta.fault.phases = PhaseSet::parse(m.at("phases").get<std::string>());
  s.meta.fault.impedance = m.at("impedance").get<double>();
  s.meta.load_scale = m.at("load_scale").get<std::vector<double>>();
  s.meta.switch_scenario = m.value("switch_scenario", "base");
  s.meta.seed = m.value("seed", std::uint64_t{0});
  return s;
}

void write_dataset(const std::filesystem::path& dir, const Dataset& ds, const FeederGraph& g,
                   const std::filesystem::path& feeder_path, const NormStats& stats) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "samples.ndjson");
    if (!out) throw Error("cannot write " + (dir / "samples.ndjson").string());
    for (const auto& s : ds.samples) out << sample_to_json(s, g).dump() << '\n';
  }
  nlohmann::json classes = nlohmann::json::array();
  for (std::size_t k = 0; k < ds.meta.classes.size(); ++k)
    classes.push_back({{"label", g.id_of(ds.meta.classes[k])}, {"count", ds.meta.class_counts[k]}});
  nlohmann::json manifest = {{"format", kDataFormat},
                             {"feeder", std::filesystem::absolute(feeder_path).lexically_normal().string()},
                             {"feeder_hash", file_hash(feeder_path)},
                             {"grid", ds.meta.grid},
                             {"seed", ds.meta.seed},
                             {"samples", ds.samples.size()},
                             {"classes", classes},
                             {"norm_stats", norm_stats_to_json(stats)}};
  std::ofstream out(dir / "manifest.json");
  if (!out) throw Error("cannot write " + (dir / "manifest.json").string());
  out << manifest.dump(1) << '\n';
}

LoadedDataset read_dataset(const std::filesystem::path& dir) {
  std::ifstream min(dir / "manifest.json");
  if (!min) throw ParseError("missing " + (dir / "manifest.json").string());
  nlohmann::json manifest;
  try {
    min >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError((dir / "manifest.json").string() + ": " + e.what());
  }
  if (manifest.value("format", "") != kDataFormat) throw ParseError("manifest format must be " + std::string(kDataFormat));
  const std::filesystem::path feeder_path = manifest.at("feeder").get<std::string>();
  if (file_hash(feeder_path) != manifest.at("feeder_hash").get<std::string>())
    throw ValidationError("feeder " + feeder_path.string() + " changed since the dataset was generated");

  LoadedDataset out{load_feeder(feeder_path), {}, norm_stats_from_json(manifest.at("norm_stats")), manifest};
  std::ifstream in(dir / "samples.ndjson");
  if (!in) throw ParseError("missing " + (dir / "samples.ndjson").string());
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      out.dataset.samples.push_back(sample_from_json(nlohmann::json::parse(line), out.feeder));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("samples.ndjson line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  out.dataset.meta.grid = manifest.at("grid");
  out.dataset.meta.seed = manifest.at("seed").get<std::uint64_t>();
  for (const auto& c : manifest.at("classes")) {
    out.dataset.meta.classes.push_back(out.feeder.index_of(c.at("label").get<int>()));
    out.dataset.meta.class_counts.push_back(c.at("count").get<std::size_t>());
  }
  return out;
}

}  // namespace ppgn
