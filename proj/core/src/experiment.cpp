#include "ppgn/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "ppgn/dataset_io.hpp"
#include "ppgn/diagnostics.hpp"

namespace ppgn {
namespace {

using json = nlohmann::json;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

bool has(const std::vector<std::string>& v, std::string_view s) { return std::find(v.begin(), v.end(), s) != v.end(); }

std::string mode_suffix(const std::string& mode) { return mode == "joint" ? "-joint" : ""; }

std::vector<Matrix> features_of(std::span<const Sample> samples) {
  std::vector<Matrix> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(s.x);
  return out;
}

std::vector<std::size_t> labels_of(std::span<const Sample> samples) {
  std::vector<std::size_t> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(s.label);
  return out;
}

template <class T>
std::vector<T> pick(std::span<const T> v, std::span<const std::size_t> idx) {
  std::vector<T> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(v[i]);
  return out;
}

std::vector<std::size_t> tail(const std::vector<std::size_t>& v, std::size_t from) {
  return {v.begin() + static_cast<std::ptrdiff_t>(from), v.end()};
}

AdjacencyA model_adjacency(const FeederGraph& g, const ModelSettings& s) {
  return build_A(shortest_paths(g, s.distance), s.k_I);
}

void validate_plan(const RunPlan& plan) {
  for (const auto& s : plan.stages)
    if (s != "I" && s != "I+II" && s != "II-only") throw ConfigError("unknown stage '" + s + "' (I, I+II, II-only)");
  for (const auto& b : plan.baselines)
    if (b != "mlp" && b != "gcn") throw ConfigError("unknown baseline '" + b + "' (mlp, gcn)");
  for (const auto& t : plan.training)
    if (t != "alternating" && t != "joint") throw ConfigError("unknown training mode '" + t + "' (alternating, joint)");
  if (plan.training.empty()) throw ConfigError("at least one training mode is required");
}

Stage2Config stage2_config(const ModelSettings& s, std::uint64_t seed) {
  Stage2Config c = s.stage2;
  c.seed = derive_seed(seed, 12);
  return c;
}

std::vector<int> transductive_targets(std::size_t n, std::span<const std::size_t> labels,
                                      std::span<const std::size_t> labeled) {
  std::vector<int> t(n, -1);
  for (std::size_t i : labeled) t[i] = static_cast<int>(labels[i]);
  return t;
}

}  // namespace

// ---- settings and config --------------------------------------------------

ModelSettings settings_from_json(const json& j) {
  ModelSettings s;
  try {
    if (j.contains("stage1")) {
      const auto& a = j["stage1"];
      s.stage1.layers = a.value("layers", s.stage1.layers);
      s.stage1.width = a.value("width", s.stage1.width);
      s.stage1.lambda = a.value("lambda", s.stage1.lambda);
      s.stage1.adam.lr = a.value("lr", s.stage1.adam.lr);
      s.stage1.t1 = a.value("t1", s.stage1.t1);
      s.stage1.t2 = a.value("t2", s.stage1.t2);
      s.stage1.epochs = a.value("epochs", s.stage1.epochs);
      s.stage1.batch = a.value("batch", s.stage1.batch);
      s.k_I = a.value("k", s.k_I);
      const std::string d = a.value("distance", std::string("hop"));
      if (d == "hop") s.distance = DistanceWeight::Hop;
      else if (d == "impedance") s.distance = DistanceWeight::Impedance;
      else throw ConfigError("stage1.distance must be hop or impedance");
    }
    if (j.contains("stage2")) {
      const auto& b = j["stage2"];
      s.stage2.layers = b.value("layers", s.stage2.layers);
      s.stage2.width_factor = b.value("width_factor", s.stage2.width_factor);
      s.stage2.lambda = b.value("lambda", s.stage2.lambda);
      s.stage2.adam.lr = b.value("lr", s.stage2.adam.lr);
      s.stage2.epochs = b.value("epochs", s.stage2.epochs);
      s.k_II = b.value("k", s.k_II);
    }
    if (j.contains("baseline")) {
      const auto& c = j["baseline"];
      s.baseline.lambda = c.value("lambda", s.baseline.lambda);
      s.baseline.adam.lr = c.value("lr", s.baseline.adam.lr);
      s.baseline.epochs = c.value("epochs", s.baseline.epochs);
      s.baseline.batch = c.value("batch", s.baseline.batch);
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("model settings: ") + e.what());
  }
  if (s.stage1.t1 == 0 || s.stage1.t2 == 0) throw ConfigError("stage1.t1 and stage1.t2 must be at least 1");
  if (s.k_I == 0 || s.k_II == 0) throw ConfigError("neighbour counts must be at least 1");
  return s;
}

json settings_to_json(const ModelSettings& s) {
  return {{"stage1",
           {{"layers", s.stage1.layers},
            {"width", s.stage1.width},
            {"lambda", s.stage1.lambda},
            {"lr", s.stage1.adam.lr},
            {"t1", s.stage1.t1},
            {"t2", s.stage1.t2},
            {"epochs", s.stage1.epochs},
            {"batch", s.stage1.batch},
            {"k", s.k_I},
            {"distance", s.distance == DistanceWeight::Hop ? "hop" : "impedance"}}},
          {"stage2",
           {{"layers", s.stage2.layers},
            {"width_factor", s.stage2.width_factor},
            {"lambda", s.stage2.lambda},
            {"lr", s.stage2.adam.lr},
            {"epochs", s.stage2.epochs},
            {"k", s.k_II}}},
          {"baseline",
           {{"lambda", s.baseline.lambda},
            {"lr", s.baseline.adam.lr},
            {"epochs", s.baseline.epochs},
            {"batch", s.baseline.batch}}}};
}

std::string Scenario::name() const {
  switch (kind) {
    case Kind::Base: return "base";
    case Kind::Load: {
      std::ostringstream os;
      os << "load:" << delta_p;
      return os.str();
    }
    case Kind::Switch: return "switch:" + topology;
  }
  return "base";
}

Scenario parse_scenario(std::string_view text) {
  Scenario s;
  if (text == "base") return s;
  if (text.starts_with("load:")) {
    s.kind = Scenario::Kind::Load;
    const std::string v(text.substr(5));
    try {
      std::size_t used = 0;
      s.delta_p = std::stod(v, &used);
      if (used != v.size()) throw std::invalid_argument(v);
    } catch (const std::exception&) {
      throw ConfigError("scenario '" + std::string(text) + "': load variation must be a number");
    }
    if (!(s.delta_p > 0.0)) throw ConfigError("scenario '" + std::string(text) + "': load variation must be positive");
    return s;
  }
  if (text.starts_with("switch:") && text.size() > 7) {
    s.kind = Scenario::Kind::Switch;
    s.topology = std::string(text.substr(7));
    return s;
  }
  throw ConfigError("unknown scenario '" + std::string(text) + "' (base, load:DP, switch:NAME)");
}

ExperimentConfig experiment_from_json(const json& j, const std::filesystem::path& base_dir) {
  ExperimentConfig c;
  c.source = j;
  auto resolve = [&](const std::string& p) {
    std::filesystem::path path(p);
    return path.is_absolute() ? path : base_dir / path;
  };
  try {
    if (j.value("format", std::string()) != kExperimentFormat)
      throw ConfigError(std::string("experiment config must declare format ") + kExperimentFormat);
    if (j.contains("dataset")) c.dataset = resolve(j["dataset"].get<std::string>());
    if (j.contains("feeder")) c.feeder = resolve(j["feeder"].get<std::string>());
    if (!c.dataset && c.feeder.empty()) throw ConfigError("experiment config needs feeder or dataset");
    if (c.dataset && !std::filesystem::exists(*c.dataset / "manifest.json"))
      throw ConfigError("dataset " + c.dataset->string() + " has no manifest.json");
    if (!c.dataset && !std::filesystem::exists(c.feeder)) throw ConfigError("feeder " + c.feeder.string() + " not found");
    if (j.contains("grid")) c.grid = grid_from_json(j["grid"]);
    c.data_seed = j.value("data_seed", c.data_seed);
    if (j.contains("label_rates")) c.label_rates = j["label_rates"].get<std::vector<double>>();
    if (j.contains("seeds")) c.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
    if (j.contains("stages")) c.plan.stages = j["stages"].get<std::vector<std::string>>();
    if (j.contains("baselines")) c.plan.baselines = j["baselines"].get<std::vector<std::string>>();
    if (j.contains("training")) c.plan.training = j["training"].get<std::vector<std::string>>();
    if (j.contains("ood"))
      for (const auto& s : j["ood"]) c.ood.push_back(parse_scenario(s.get<std::string>()));
    if (j.contains("ood_grid")) c.ood_grid = grid_from_json(j["ood_grid"]);
    c.ood_seed = j.value("ood_seed", c.data_seed + 1);
    const std::string kinds = j.value("fault_types", std::string("all"));
    if (kinds != "all" && kinds != "separate") throw ConfigError("fault_types must be all or separate");
    c.separate_kinds = kinds == "separate";
    c.models = settings_from_json(j);
    c.timing = j.value("timing", false);
    if (j.contains("out")) c.out = resolve(j["out"].get<std::string>());
  } catch (const json::exception& e) {
    throw ConfigError(std::string("experiment config: ") + e.what());
  }
  if (c.label_rates.empty() || c.seeds.empty()) throw ConfigError("label_rates and seeds must be non-empty");
  for (double b : c.label_rates)
    if (!(b > 0.0 && b <= 1.0)) throw ConfigError("label rate " + std::to_string(b) + " outside (0, 1]");
  validate_plan(c.plan);
  return c;
}

ExperimentConfig load_experiment(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open experiment config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return experiment_from_json(j, path.parent_path());
}

// ---- harness state ---------------------------------------------------------

void HarnessState::begin_training(std::string_view what) {
  if (frozen_) throw Error("training call '" + std::string(what) + "' after the models were frozen");
  ++training_calls_;
}

// ---- data -------------------------------------------------------------------

PreparedData prepare_data(const ExperimentConfig& config) {
  if (config.dataset) return prepare_data(*config.dataset);
  FeederGraph g = load_feeder(config.feeder);
  Dataset ds = generate_dataset(g, config.grid, config.data_seed);
  NormStats stats = normalize_dataset(ds.samples, g.observed());
  return PreparedData{std::move(g), std::move(ds.samples), stats, config.grid, config.data_seed,
                      file_hash(config.feeder)};
}

PreparedData prepare_data(const std::filesystem::path& dataset_dir) {
  LoadedDataset d = read_dataset(dataset_dir);
  apply_norm(d.dataset.samples, d.stats, d.feeder.observed());
  ScenarioGrid grid = d.manifest.contains("grid") ? grid_from_json(d.manifest["grid"]) : ScenarioGrid{};
  return PreparedData{std::move(d.feeder), std::move(d.dataset.samples), d.stats, grid,
                      d.manifest.value("seed", std::uint64_t{0}), d.manifest.value("feeder_hash", std::string())};
}

std::vector<Sample> scenario_samples(const FeederGraph& g, const ScenarioGrid& grid, const Scenario& scenario,
                                     const NormStats& stats, std::uint64_t seed) {
  ScenarioGrid shifted = grid;
  if (scenario.kind == Scenario::Kind::Load) {
    shifted.loads = load_bounds_for_variation(scenario.delta_p, grid.loads.low);
  } else if (scenario.kind == Scenario::Kind::Switch) {
    if (!g.scenarios().contains(scenario.topology))
      throw ConfigError("feeder has no switch scenario '" + scenario.topology + "'");
    shifted.switch_scenarios = {scenario.topology};
  }
  Dataset ds = generate_dataset(g, shifted, seed);
  apply_norm(ds.samples, stats, g.observed());
  return std::move(ds.samples);
}

// ---- models -----------------------------------------------------------------

std::uint64_t fingerprint(const ParamStore& store) {
  std::string bytes;
  for (const auto& p : store.params()) {
    bytes += p.name;
    for (const Matrix* m : {&p.value, &p.m, &p.v})
      bytes.append(reinterpret_cast<const char*>(m->data()), static_cast<std::size_t>(m->size()) * sizeof(double));
    bytes.append(reinterpret_cast<const char*>(&p.steps), sizeof(p.steps));
  }
  return fnv1a64(bytes);
}

std::uint64_t fingerprint(const TrainedModels& models) {
  std::string acc;
  auto mix = [&](const std::string& tag, const ParamStore& s) {
    const std::uint64_t h = fingerprint(s);
    acc += tag;
    acc.append(reinterpret_cast<const char*>(&h), sizeof(h));
  };
  for (const auto& [k, v] : models.stage1) mix("1" + k, v.params());
  for (const auto& [k, v] : models.stage2) mix("2" + k, v.params());
  if (models.mlp) mix("mlp", models.mlp->params());
  if (models.gcn) mix("gcn", models.gcn->params());
  return fnv1a64(acc);
}

std::vector<std::string> reported_stages(const RunPlan& plan) {
  std::vector<std::string> out;
  for (const auto& s : plan.stages) {
    if (s == "II-only") {
      out.push_back(s);
      continue;
    }
    for (const auto& mode : plan.training) out.push_back(s + mode_suffix(mode));
  }
  for (const auto& b : plan.baselines) out.push_back(b);
  return out;
}

RunOutput train_run(const FeederGraph& g, std::span<const Sample> samples, const Split& split, const RunPlan& plan,
                    const ModelSettings& settings, std::uint64_t seed, HarnessState& state) {
  validate_plan(plan);
  state.begin_training("train_run");
  RunOutput out;
  out.models.labeled = split.labeled;
  const std::vector<Matrix> features = features_of(samples);
  const std::vector<std::size_t> labels = labels_of(samples);
  const std::size_t n = g.node_count();
  const std::vector<int> targets = transductive_targets(samples.size(), labels, split.labeled);
  auto on_unlabeled = [&](const std::vector<std::size_t>& all) { return pick<std::size_t>(all, split.unlabeled); };

  const bool need_stage1 = has(plan.stages, "I") || has(plan.stages, "I+II");
  const bool need_c0 = has(plan.stages, "I+II") || has(plan.stages, "II-only");
  const Matrix c0 = need_c0 ? flatten_samples(features) : Matrix();

  if (need_stage1) {
    const AdjacencyA a = model_adjacency(g, settings);
    if (!coverage_check(a, g.observed(), settings.stage1.layers).pass)
      warn("k_I=" + std::to_string(settings.k_I) + " leaves nodes without an observed node within " +
           std::to_string(settings.stage1.layers) + " hops of A");
    for (const auto& mode : plan.training) {
      const std::string sfx = mode_suffix(mode);
      Stage1Config cfg = settings.stage1;
      cfg.alternating = mode == "alternating";
      cfg.seed = derive_seed(seed, 11);
      const auto t0 = Clock::now();
      Stage1Result r = train_stage1(features, labels, split.labeled, a, cfg);
      const Stage1Prediction pred = predict_stage1(r.network, features);
      const double t1 = seconds_since(t0);
      out.history["I" + sfx] = r.history;
      if (has(plan.stages, "I")) {
        out.predictions["I" + sfx] = on_unlabeled(pred.labels);
        out.runtime["I" + sfx] = t1;
      }
      if (has(plan.stages, "I+II")) {
        const auto t2 = Clock::now();
        const SimilarityB b = build_B(mask_embeddings(pred.z, g), settings.k_II);
        Stage2Result s2 = train_stage2(c0, b, targets, n, stage2_config(settings, seed));
        out.predictions["I+II" + sfx] = on_unlabeled(predict_stage2(gcl_forward(c0, b, s2.network)));
        out.runtime["I+II" + sfx] = t1 + seconds_since(t2);
        out.models.stage2.emplace("I+II" + sfx, std::move(s2.network));
      }
      out.models.stage1.emplace("I" + sfx, std::move(r.network));
    }
  }
  if (has(plan.stages, "II-only")) {
    const auto t0 = Clock::now();
    const SimilarityB b = build_B(c0, settings.k_II);
    Stage2Result s2 = train_stage2(c0, b, targets, n, stage2_config(settings, seed));
    out.predictions["II-only"] = on_unlabeled(predict_stage2(gcl_forward(c0, b, s2.network)));
    out.runtime["II-only"] = seconds_since(t0);
    out.models.stage2.emplace("II-only", std::move(s2.network));
  }
  if (has(plan.baselines, "mlp")) {
    BaselineConfig cfg = settings.baseline;
    cfg.seed = derive_seed(seed, 13);
    const auto t0 = Clock::now();
    out.models.mlp = train_mlp(features, labels, split.labeled, cfg);
    out.predictions["mlp"] = on_unlabeled(predict_mlp(*out.models.mlp, features));
    out.runtime["mlp"] = seconds_since(t0);
  }
  if (has(plan.baselines, "gcn")) {
    BaselineConfig cfg = settings.baseline;
    cfg.seed = derive_seed(seed, 14);
    const auto t0 = Clock::now();
    out.models.gcn = train_gcn(features, labels, split.labeled, physical_adjacency(g), cfg);
    out.predictions["gcn"] = on_unlabeled(predict_gcn(*out.models.gcn, features));
    out.runtime["gcn"] = seconds_since(t0);
  }
  return out;
}

std::map<std::string, std::vector<std::size_t>> predict_frozen(const TrainedModels& models, const FeederGraph& g,
                                                               const ModelSettings& settings,
                                                               std::span<const Matrix> reference,
                                                               std::span<const Matrix> targets) {
  std::map<std::string, std::vector<std::size_t>> out;
  std::vector<Matrix> combined(reference.begin(), reference.end());
  combined.insert(combined.end(), targets.begin(), targets.end());
  const std::size_t skip = reference.size();
  Matrix c0;
  if (!models.stage2.empty()) c0 = flatten_samples(combined);

  for (const auto& [label, net] : models.stage1) out[label] = predict_stage1(net, targets).labels;
  for (const auto& [label, net] : models.stage2) {
    SimilarityB b;
    if (label == "II-only") {
      b = build_B(c0, settings.k_II);
    } else {
      const std::string s1 = "I" + label.substr(4);
      const auto it = models.stage1.find(s1);
      if (it == models.stage1.end()) throw ConfigError("Stage II model " + label + " has no Stage I network " + s1);
      b = build_B(mask_embeddings(predict_stage1(it->second, combined).z, g), settings.k_II);
    }
    out[label] = tail(predict_stage2(gcl_forward(c0, b, net)), skip);
  }
  if (models.mlp) out["mlp"] = predict_mlp(*models.mlp, targets);
  if (models.gcn) out["gcn"] = predict_gcn(*models.gcn, targets);
  return out;
}

Checkpoint models_to_checkpoint(const TrainedModels& models, const json& meta) {
  Checkpoint c;
  c.meta = meta;
  c.meta["labeled"] = models.labeled;
  for (const auto& [k, v] : models.stage1) c.stores.emplace("stage1:" + k, v.params());
  for (const auto& [k, v] : models.stage2) c.stores.emplace("stage2:" + k, v.params());
  if (models.mlp) c.stores.emplace("mlp", models.mlp->params());
  if (models.gcn) c.stores.emplace("gcn", models.gcn->params());
  return c;
}

TrainedModels models_from_checkpoint(const Checkpoint& ckpt, const FeederGraph& g, const ModelSettings& settings) {
  TrainedModels m;
  if (ckpt.meta.contains("labeled")) m.labeled = ckpt.meta["labeled"].get<std::vector<std::size_t>>();
  std::optional<Matrix> aggregation;
  for (const auto& [name, store] : ckpt.stores) {
    if (name.starts_with("stage1:")) {
      if (!aggregation) aggregation = model_adjacency(g, settings).aggregation();
      m.stage1.emplace(name.substr(7), Stage1Network(g.node_count(), *aggregation, store));
    } else if (name.starts_with("stage2:")) {
      m.stage2.emplace(name.substr(7), Stage2Network(store));
    } else if (name == "mlp") {
      m.mlp = MlpBaseline(store);
    } else if (name == "gcn") {
      m.gcn = GcnBaseline(gcn_propagation(physical_adjacency(g)), store);
    } else {
      throw ConfigError("checkpoint holds unknown model '" + name + "'");
    }
  }
  return m;
}

// ---- results ----------------------------------------------------------------

void write_results_csv(const std::filesystem::path& path, std::span<const ResultRow> rows, bool timing) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << "scenario,seed,beta,stage,f1,lar,lar1hop,runtime_s,lar_classwise\n";
  for (const auto& r : rows) {
    out << r.scenario << ',' << r.seed << ',' << std::setprecision(6) << r.beta << ',' << r.stage << ','
        << std::setprecision(10) << r.metrics.f1 << ',' << r.metrics.lar << ',' << r.metrics.lar1hop << ','
        << std::setprecision(6) << (timing ? r.runtime_s : 0.0) << ',' << std::setprecision(10)
        << r.metrics.lar_classwise << '\n';
  }
}

ExperimentResult run_experiment(const ExperimentConfig& config, std::ostream* log) {
  validate_plan(config.plan);
  ExperimentResult result;
  result.manifest = {{"format", kExperimentFormat},
                     {"version", "0.1.0"},
                     {"config", config.source},
                     {"data_seed", config.data_seed},
                     {"ood_seed", config.ood_seed},
                     {"seeds", config.seeds},
                     {"label_rates", config.label_rates}};

  auto persist = [&](const std::string& status) {
    result.manifest["status"] = status;
    result.manifest["rows"] = result.rows.size();
    if (config.out.empty()) return;
    std::filesystem::create_directories(config.out);
    write_results_csv(config.out / "results.csv", result.rows, config.timing);
    std::ofstream(config.out / "manifest.json") << result.manifest.dump(2) << '\n';
  };

  try {
    const PreparedData data = prepare_data(config);
    const FeederGraph& g = data.feeder;
    result.manifest["feeder"] = g.name();
    result.manifest["feeder_hash"] = data.feeder_hash;
    result.manifest["samples"] = data.samples.size();
    result.manifest["norm_stats"] = norm_stats_to_json(data.stats);
    const ScenarioGrid& ood_grid = config.ood_grid ? *config.ood_grid : data.grid;

    std::vector<std::vector<Sample>> ood_sets;
    std::vector<FeederGraph> ood_graphs;
    for (std::size_t i = 0; i < config.ood.size(); ++i) {
      ood_sets.push_back(scenario_samples(g, ood_grid, config.ood[i], data.stats, derive_seed(config.ood_seed, i + 1)));
      ood_graphs.push_back(config.ood[i].kind == Scenario::Kind::Switch ? apply_scenario(g, config.ood[i].topology) : g);
    }

    struct Subset {
      std::string suffix;
      std::optional<FaultKind> kind;
    };
    std::vector<Subset> subsets;
    if (config.separate_kinds) {
      for (FaultKind k : data.grid.kinds) subsets.push_back({"/" + to_string(k), k});
    } else {
      subsets.push_back({"", std::nullopt});
    }
    auto filter = [](const std::vector<Sample>& all, const std::optional<FaultKind>& k) {
      std::vector<Sample> out;
      for (const auto& s : all)
        if (!k || s.meta.fault.kind == *k) out.push_back(s);
      return out;
    };

    const std::vector<std::string> stages = reported_stages(config.plan);
    for (double beta : config.label_rates) {
      for (std::uint64_t seed : config.seeds) {
        for (const auto& subset : subsets) {
          const std::vector<Sample> samples = filter(data.samples, subset.kind);
          const std::vector<std::size_t> labels = labels_of(samples);
          const Split split = stratified_split(labels, beta, derive_seed(seed, 10));
          HarnessState state;
          const RunOutput run = train_run(g, samples, split, config.plan, config.models, seed, state);
          state.freeze();
          const std::vector<std::size_t> truth = pick<std::size_t>(labels, split.unlabeled);
          for (const auto& stage : stages) {
            result.rows.push_back({"base" + subset.suffix, seed, beta, stage,
                                   compute_metrics(truth, run.predictions.at(stage), g), run.runtime.at(stage)});
            if (log)
              *log << "beta=" << beta << " seed=" << seed << " base" << subset.suffix << ' ' << stage
                   << " lar=" << result.rows.back().metrics.lar << " lar1hop=" << result.rows.back().metrics.lar1hop
                   << " (" << std::setprecision(3) << run.runtime.at(stage) << " s)" << std::setprecision(6) << '\n';
          }

          const std::vector<Matrix> reference = pick<Matrix>(features_of(samples), split.labeled);
          const std::uint64_t before = fingerprint(run.models);
          for (std::size_t i = 0; i < config.ood.size(); ++i) {
            const std::vector<Sample> targets = filter(ood_sets[i], subset.kind);
            const auto t0 = Clock::now();
            const auto preds = predict_frozen(run.models, g, config.models, reference, features_of(targets));
            const double dt = seconds_since(t0);
            const std::vector<std::size_t> ood_truth = labels_of(targets);
            for (const auto& stage : stages) {
              result.rows.push_back({config.ood[i].name() + subset.suffix, seed, beta, stage,
                                     compute_metrics(ood_truth, preds.at(stage), ood_graphs[i]), dt});
              if (log)
                *log << "beta=" << beta << " seed=" << seed << ' ' << result.rows.back().scenario << ' ' << stage
                     << " lar=" << result.rows.back().metrics.lar << '\n';
            }
          }
          if (fingerprint(run.models) != before) throw Error("model parameters changed during frozen evaluation");
        }
      }
    }
  } catch (const std::exception& e) {
    persist(std::string("failed: ") + e.what());
    throw;
  }
  persist("ok");
  return result;
}

}  // namespace ppgn
