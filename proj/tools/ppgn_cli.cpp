#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <set>

#include <nlohmann/json.hpp>

#include "ppgn/adjacency.hpp"
#include "ppgn/checkpoint.hpp"
#include "ppgn/dataset_io.hpp"
#include "ppgn/diagnostics.hpp"
#include "ppgn/experiment.hpp"
#include "ppgn/influence.hpp"

namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ppgn::ConfigError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ppgn::ConfigError(path.string() + ": " + e.what());
  }
}

std::vector<std::string> stages_for(const std::string& stage) {
  if (stage == "1") return {"I"};
  if (stage == "2") return {"II-only"};
  return {"I+II"};
}

void cmd_gen(const std::string& feeder, const std::string& out, const std::string& grid_path, std::uint64_t seed,
             std::size_t threads) {
  const ppgn::FeederGraph g = ppgn::load_feeder(feeder);
  ppgn::ScenarioGrid grid = ppgn::grid_from_json(read_json(grid_path));
  if (threads > 0) grid.threads = threads;
  const ppgn::Dataset ds = ppgn::generate_dataset(g, grid, seed);
  const ppgn::NormStats stats = ppgn::compute_norm_stats(ds.samples, g.observed());
  ppgn::write_dataset(out, ds, g, feeder, stats);
  std::cout << "wrote " << ds.samples.size() << " samples over " << ds.meta.classes.size() << " classes to " << out
            << '\n';
}

void cmd_train(const std::string& data_dir, const std::string& stage, double beta, std::uint64_t seed,
               const std::string& out, const std::string& settings_path, bool joint, const std::string& history) {
  const ppgn::PreparedData data = ppgn::prepare_data(fs::path(data_dir));
  const ppgn::ModelSettings settings =
      settings_path.empty() ? ppgn::ModelSettings{} : ppgn::settings_from_json(read_json(settings_path));
  ppgn::RunPlan plan;
  plan.stages = stages_for(stage);
  plan.training = {joint ? "joint" : "alternating"};
  std::vector<std::size_t> labels;
  for (const auto& s : data.samples) labels.push_back(s.label);
  const ppgn::Split split = ppgn::stratified_split(labels, beta, ppgn::derive_seed(seed, 10));
  ppgn::HarnessState state;
  const ppgn::RunOutput run = ppgn::train_run(data.feeder, data.samples, split, plan, settings, seed, state);
  json meta = {{"stage", stage},
               {"stages", plan.stages},
               {"training", plan.training},
               {"beta", beta},
               {"seed", seed},
               {"settings", ppgn::settings_to_json(settings)},
               {"data", fs::absolute(data_dir).string()},
               {"data_hash", ppgn::file_hash(fs::path(data_dir) / "samples.ndjson")}};
  ppgn::save_checkpoint(out, ppgn::models_to_checkpoint(run.models, meta));
  if (!history.empty())
    for (const auto& [name, h] : run.history) ppgn::write_history_csv(history, h);
  std::vector<std::size_t> truth;
  for (std::size_t i : split.unlabeled) truth.push_back(labels[i]);
  for (const auto& s : ppgn::reported_stages(plan)) {
    const auto m = ppgn::compute_metrics(truth, run.predictions.at(s), data.feeder);
    std::cout << s << ": lar=" << m.lar << " lar1hop=" << m.lar1hop << " f1=" << m.f1 << " on "
              << split.unlabeled.size() << " unlabeled samples\n";
  }
}

void cmd_eval(const std::string& data_dir, const std::string& ckpt_path, const std::string& scenario_text,
              const std::string& out, std::uint64_t samples_seed) {
  const ppgn::PreparedData data = ppgn::prepare_data(fs::path(data_dir));
  const ppgn::Checkpoint ckpt = ppgn::load_checkpoint(ckpt_path);
  const std::string hash = ppgn::file_hash(fs::path(data_dir) / "samples.ndjson");
  if (ckpt.meta.value("data_hash", hash) != hash)
    throw ppgn::ConfigError("checkpoint was trained on a different dataset than " + data_dir);
  const ppgn::ModelSettings settings = ppgn::settings_from_json(ckpt.meta.value("settings", json::object()));
  const ppgn::TrainedModels models = ppgn::models_from_checkpoint(ckpt, data.feeder, settings);
  ppgn::RunPlan plan;
  plan.stages = ckpt.meta.value("stages", std::vector<std::string>{"I+II"});
  plan.training = ckpt.meta.value("training", std::vector<std::string>{"alternating"});
  const ppgn::Scenario scenario = ppgn::parse_scenario(scenario_text);

  std::vector<ppgn::Matrix> reference;
  const std::set<std::size_t> labeled(models.labeled.begin(), models.labeled.end());
  for (std::size_t i : models.labeled) reference.push_back(data.samples.at(i).x);
  std::vector<ppgn::Matrix> targets;
  std::vector<std::size_t> truth;
  ppgn::FeederGraph graph = data.feeder;
  if (scenario.kind == ppgn::Scenario::Kind::Base) {
    for (std::size_t i = 0; i < data.samples.size(); ++i)
      if (!labeled.contains(i)) {
        targets.push_back(data.samples[i].x);
        truth.push_back(data.samples[i].label);
      }
  } else {
    const auto shifted = ppgn::scenario_samples(data.feeder, data.grid, scenario, data.stats, samples_seed);
    for (const auto& s : shifted) {
      targets.push_back(s.x);
      truth.push_back(s.label);
    }
    if (scenario.kind == ppgn::Scenario::Kind::Switch) graph = ppgn::apply_scenario(data.feeder, scenario.topology);
  }
  const auto preds = ppgn::predict_frozen(models, data.feeder, settings, reference, targets);
  std::vector<ppgn::ResultRow> rows;
  for (const auto& s : ppgn::reported_stages(plan))
    rows.push_back({scenario.name(), ckpt.meta.value("seed", std::uint64_t{0}), ckpt.meta.value("beta", 0.0), s,
                    ppgn::compute_metrics(truth, preds.at(s), graph), 0.0});
  ppgn::write_results_csv(out, rows, false);
  for (const auto& r : rows) std::cout << r.scenario << ' ' << r.stage << ": lar=" << r.metrics.lar << '\n';
}

void cmd_sweep(const std::string& config_path, const std::string& out, bool quiet) {
  ppgn::ExperimentConfig cfg = ppgn::load_experiment(config_path);
  if (!out.empty()) cfg.out = out;
  if (cfg.out.empty()) throw ppgn::ConfigError("sweep needs an output directory (config 'out' or --out)");
  const auto result = ppgn::run_experiment(cfg, quiet ? nullptr : &std::cerr);
  std::cout << "wrote " << result.rows.size() << " rows to " << (cfg.out / "results.csv").string() << '\n';
}

void cmd_influence(const std::string& feeder, std::size_t k, std::size_t layers, const std::string& out,
                   const std::string& adjacency, const std::string& distance, const std::string& dump) {
  const ppgn::FeederGraph g = ppgn::load_feeder(feeder);
  ppgn::Matrix transition;
  if (adjacency == "physical") {
    transition = ppgn::row_normalize(ppgn::physical_adjacency(g));
  } else {
    const auto d = ppgn::shortest_paths(g, distance == "impedance" ? ppgn::DistanceWeight::Impedance
                                                                   : ppgn::DistanceWeight::Hop);
    const ppgn::AdjacencyA a = ppgn::build_A(d, k);
    transition = a.a_tilde;
    const auto report = ppgn::coverage_check(d, k, g.observed(), layers);
    if (report.minimum_k) std::cout << "smallest covering k_I at " << layers << " layers: " << *report.minimum_k << '\n';
  }
  if (!dump.empty()) ppgn::write_matrix_csv(dump, transition);
  const auto inf = ppgn::total_observed_influence(transition, g.observed(), layers);
  ppgn::write_influence_csv(out, g, inf);
  std::cout << inf.invisible.size() << " of " << g.node_count() << " nodes have zero observed influence\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-stage graph network for fault localization in distribution feeders"};
  app.require_subcommand(1);

  std::string feeder, out, grid, data, stage = "both", ckpt, scenario = "base", config, settings, history;
  std::string adjacency = "constructed", distance = "hop", dump;
  std::uint64_t seed = 0, samples_seed = 1;
  std::size_t threads = 0, k = ppgn::kDefaultNeighbors, layers = 3;
  double beta = 0.15;
  bool joint = false, quiet = false;

  auto* gen = app.add_subcommand("gen", "Simulate a labeled fault dataset");
  gen->add_option("--feeder", feeder, "Feeder file")->required()->check(CLI::ExistingFile);
  gen->add_option("--out", out, "Output dataset directory")->required();
  gen->add_option("--grid", grid, "Scenario grid JSON")->required()->check(CLI::ExistingFile);
  gen->add_option("--seed", seed, "Dataset seed");
  gen->add_option("--threads", threads, "Worker threads (overrides the grid)");

  auto* train = app.add_subcommand("train", "Train on a labeled fraction of a dataset");
  train->add_option("--data", data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  train->add_option("--stage", stage, "1, 2 or both")->check(CLI::IsMember({"1", "2", "both"}));
  train->add_option("--labels", beta, "Label rate in (0, 1]")->required();
  train->add_option("--seed", seed, "Run seed");
  train->add_option("--out", out, "Checkpoint path")->required();
  train->add_option("--settings", settings, "Model settings JSON")->check(CLI::ExistingFile);
  train->add_flag("--joint", joint, "Update all Stage I parameters every step");
  train->add_option("--history", history, "Stage I history CSV");

  auto* eval = app.add_subcommand("eval", "Evaluate a frozen checkpoint");
  eval->add_option("--data", data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  eval->add_option("--ckpt", ckpt, "Checkpoint")->required()->check(CLI::ExistingFile);
  eval->add_option("--scenario", scenario, "base, load:DP or switch:NAME");
  eval->add_option("--out", out, "Results CSV")->required();
  eval->add_option("--samples-seed", samples_seed, "Seed for shifted-scenario samples");

  auto* sweep = app.add_subcommand("sweep", "Run an experiment config");
  sweep->add_option("--config", config, "Experiment JSON")->required()->check(CLI::ExistingFile);
  sweep->add_option("--out", out, "Output directory (overrides the config)");
  sweep->add_flag("--quiet", quiet, "No progress lines");

  auto* influence = app.add_subcommand("influence", "Observed-node influence report");
  influence->add_option("--feeder", feeder, "Feeder file")->required()->check(CLI::ExistingFile);
  influence->add_option("--kI", k, "Neighbours per node in A");
  influence->add_option("--layers", layers, "Walk length K");
  influence->add_option("--out", out, "Influence CSV")->required();
  influence->add_option("--adjacency", adjacency, "constructed or physical")
      ->check(CLI::IsMember({"constructed", "physical"}));
  influence->add_option("--distance", distance, "hop or impedance")->check(CLI::IsMember({"hop", "impedance"}));
  influence->add_option("--dump-transition", dump, "Write the transition matrix as CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*gen) cmd_gen(feeder, out, grid, seed, threads);
    else if (*train) cmd_train(data, stage, beta, seed, out, settings, joint, history);
    else if (*eval) cmd_eval(data, ckpt, scenario, out, samples_seed);
    else if (*sweep) cmd_sweep(config, out, quiet);
    else if (*influence) cmd_influence(feeder, k, layers, out, adjacency, distance, dump);
  } catch (const ppgn::NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const ppgn::SimulationError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const ppgn::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return kExitOk;
}
