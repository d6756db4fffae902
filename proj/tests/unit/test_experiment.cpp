#include <gtest/gtest.h>

#include <fstream>
#include <set>
#include <sstream>

#include "ppgn/experiment.hpp"
#include "support.hpp"

namespace ppgn {
namespace {

using nlohmann::json;
using testing::data_path;
using testing::TempDir;

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json small_config(const std::filesystem::path& out) {
  return json{{"format", "ppgn-exp-v1"},
              {"feeder", data_path("feeders/feeder13.json").string()},
              {"grid", {{"impedance_draws", 2}}},
              {"data_seed", 3},
              {"label_rates", {0.5}},
              {"seeds", {1, 2, 3}},
              {"stages", {"I", "I+II"}},
              {"stage1", {{"epochs", 6}, {"batch", 16}}},
              {"stage2", {{"epochs", 10}, {"k", 5}}},
              {"out", out.string()}};
}

TEST(HarnessState, FrozenRejectsTraining) {
  HarnessState s;
  s.begin_training("a");
  EXPECT_EQ(s.training_calls(), 1u);
  s.freeze();
  EXPECT_THROW(s.begin_training("b"), Error);
  EXPECT_EQ(s.training_calls(), 1u);
}

TEST(Scenario, Parsing) {
  EXPECT_EQ(parse_scenario("base").kind, Scenario::Kind::Base);
  Scenario l = parse_scenario("load:0.64");
  EXPECT_EQ(l.kind, Scenario::Kind::Load);
  EXPECT_DOUBLE_EQ(l.delta_p, 0.64);
  Scenario s = parse_scenario("switch:open-1-6");
  EXPECT_EQ(s.kind, Scenario::Kind::Switch);
  EXPECT_EQ(s.topology, "open-1-6");
  EXPECT_THROW(parse_scenario("load:abc"), ConfigError);
  EXPECT_THROW(parse_scenario("weather"), ConfigError);
}

TEST(ExperimentConfig, Errors) {
  TempDir dir("expcfg");
  const json ok = small_config(dir / "out");
  EXPECT_NO_THROW(experiment_from_json(ok, dir.path()));
  auto broken = [&](auto mutate) {
    json j = ok;
    mutate(j);
    return j;
  };
  EXPECT_THROW(experiment_from_json(broken([](json& j) { j["format"] = "x"; }), dir.path()), ConfigError);
  EXPECT_THROW(experiment_from_json(broken([](json& j) { j["label_rates"] = {0.0}; }), dir.path()), ConfigError);
  EXPECT_THROW(experiment_from_json(broken([](json& j) { j["seeds"] = json::array(); }), dir.path()), ConfigError);
  EXPECT_THROW(experiment_from_json(broken([](json& j) { j["stages"] = {"III"}; }), dir.path()), ConfigError);
  EXPECT_THROW(experiment_from_json(broken([](json& j) { j["baselines"] = {"svm"}; }), dir.path()), ConfigError);
  EXPECT_THROW(experiment_from_json(broken([](json& j) { j["feeder"] = "nope.json"; }), dir.path()), ConfigError);
  EXPECT_THROW(experiment_from_json(broken([](json& j) { j["stage1"]["t1"] = 0; }), dir.path()), ConfigError);
  EXPECT_THROW(experiment_from_json(broken([](json& j) { j["stage2"]["k"] = 0; }), dir.path()), ConfigError);
  EXPECT_THROW(experiment_from_json(broken([](json& j) { j["seeds"] = "one"; }), dir.path()), ConfigError);
  EXPECT_THROW(load_experiment(dir / "missing.json"), ConfigError);
  std::ofstream(dir / "bad.json") << "{not json";
  EXPECT_THROW(load_experiment(dir / "bad.json"), ConfigError);
}

TEST(ExperimentConfig, ShippedConfigsParse) {
  for (const auto& e : std::filesystem::directory_iterator(data_path("experiments")))
    EXPECT_NO_THROW(load_experiment(e.path())) << e.path();
}

TEST(ModelSettings, JsonRoundTrip) {
  ModelSettings s;
  s.stage1.epochs = 17;
  s.k_I = 4;
  s.stage2.width_factor = 5;
  s.k_II = 33;
  ModelSettings back = settings_from_json(settings_to_json(s));
  EXPECT_EQ(back.stage1.epochs, 17u);
  EXPECT_EQ(back.k_I, 4u);
  EXPECT_EQ(back.stage2.width_factor, 5u);
  EXPECT_EQ(back.k_II, 33u);
}

TEST(Experiment, EndToEndSmall) {
  TempDir dir("exp");
  ExperimentConfig cfg = experiment_from_json(small_config(dir / "a"), dir.path());
  ExperimentResult r = run_experiment(cfg);
  ASSERT_EQ(r.rows.size(), 6u);
  std::set<std::uint64_t> seeds;
  for (const auto& row : r.rows) {
    seeds.insert(row.seed);
    EXPECT_EQ(row.scenario, "base");
    EXPECT_GE(row.metrics.lar, 0.0);
    EXPECT_LE(row.metrics.lar, row.metrics.lar1hop);
    EXPECT_EQ(row.metrics.total, 36u);
  }
  EXPECT_EQ(seeds.size(), 3u);
  EXPECT_EQ(r.manifest.at("status"), "ok");

  const std::string csv = slurp(dir / "a" / "results.csv");
  std::istringstream lines(csv);
  std::string line;
  std::getline(lines, line);
  EXPECT_EQ(line, "scenario,seed,beta,stage,f1,lar,lar1hop,runtime_s,lar_classwise");
  std::size_t rows = 0;
  while (std::getline(lines, line)) {
    ++rows;
    EXPECT_EQ(std::count(line.begin(), line.end(), ','), 8);
  }
  EXPECT_EQ(rows, 6u);

  // Same configuration, byte-identical results.
  cfg.out = dir / "b";
  run_experiment(cfg);
  EXPECT_EQ(slurp(dir / "b" / "results.csv"), csv);
}

TEST(Experiment, FrozenEvaluationLeavesModelsUntouched) {
  FeederGraph g = load_feeder(data_path("feeders/feeder13.json"));
  ScenarioGrid grid;
  grid.impedance_draws = 2;
  Dataset ds = generate_dataset(g, grid, 5);
  NormStats stats = normalize_dataset(ds.samples, g.observed());
  std::vector<std::size_t> labels;
  for (const auto& s : ds.samples) labels.push_back(s.label);
  Split split = stratified_split(labels, 0.5, 2);
  ModelSettings settings;
  settings.stage1.epochs = 4;
  settings.stage2.epochs = 4;
  settings.k_II = 5;
  settings.baseline.epochs = 2;
  RunPlan plan;
  plan.stages = {"I", "I+II", "II-only"};
  plan.baselines = {"mlp", "gcn"};
  HarnessState state;
  RunOutput run = train_run(g, ds.samples, split, plan, settings, 1, state);
  state.freeze();
  EXPECT_THROW(train_run(g, ds.samples, split, plan, settings, 1, state), Error);

  const std::uint64_t before = fingerprint(run.models);
  std::vector<Matrix> reference, targets;
  for (std::size_t i : split.labeled) reference.push_back(ds.samples[i].x);
  for (const auto& s : scenario_samples(g, grid, parse_scenario("load:0.64"), stats, 9)) targets.push_back(s.x);
  auto preds = predict_frozen(run.models, g, settings, reference, targets);
  EXPECT_EQ(fingerprint(run.models), before);
  for (const auto& stage : reported_stages(plan)) {
    ASSERT_TRUE(preds.contains(stage)) << stage;
    EXPECT_EQ(preds.at(stage).size(), targets.size());
  }

  // Checkpoint round trip keeps every parameter.
  TrainedModels back = models_from_checkpoint(models_to_checkpoint(run.models, json::object()), g, settings);
  EXPECT_EQ(fingerprint(back), before);
}

}  // namespace
}  // namespace ppgn
