#pragma once

// End-to-end orchestration: data preparation, splits, training of the staged
// network and baselines, frozen evaluation on shifted scenarios, and result
// persistence.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "ppgn/adjacency.hpp"
#include "ppgn/baselines.hpp"
#include "ppgn/checkpoint.hpp"
#include "ppgn/fault_sim.hpp"
#include "ppgn/metrics.hpp"
#include "ppgn/split.hpp"
#include "ppgn/stage1.hpp"
#include "ppgn/stage2.hpp"

namespace ppgn {

inline constexpr const char* kExperimentFormat = "ppgn-exp-v1";

struct ModelSettings {
  Stage1Config stage1;
  std::size_t k_I = kDefaultNeighbors;
  DistanceWeight distance = DistanceWeight::Hop;
  Stage2Config stage2;
  std::size_t k_II = kDefaultSampleNeighbors;
  BaselineConfig baseline;
};

ModelSettings settings_from_json(const nlohmann::json& j);
nlohmann::json settings_to_json(const ModelSettings& s);

/// Evaluation arm: "base", "load:<delta_p>" or "switch:<scenario>".
struct Scenario {
  enum class Kind { Base, Load, Switch };
  Kind kind = Kind::Base;
  double delta_p = 0.0;
  std::string topology;
  std::string name() const;
};

Scenario parse_scenario(std::string_view text);

/// What to train for one (label rate, seed) run. Stage labels: "I", "I+II",
/// "II-only"; baselines: "mlp", "gcn"; training modes: "alternating", "joint".
struct RunPlan {
  std::vector<std::string> stages{"I+II"};
  std::vector<std::string> baselines;
  std::vector<std::string> training{"alternating"};
};

struct ExperimentConfig {
  std::filesystem::path feeder;
  std::optional<std::filesystem::path> dataset;
  ScenarioGrid grid;
  std::uint64_t data_seed = 0;
  std::vector<double> label_rates{0.15};
  std::vector<std::uint64_t> seeds{1};
  RunPlan plan;
  std::vector<Scenario> ood;
  std::optional<ScenarioGrid> ood_grid;
  std::uint64_t ood_seed = 1;
  bool separate_kinds = false;  // one model per fault kind instead of one for all
  ModelSettings models;
  bool timing = false;
  std::filesystem::path out;
  nlohmann::json source = nlohmann::json::object();
};

/// Relative paths resolve against `base_dir`.
ExperimentConfig experiment_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
ExperimentConfig load_experiment(const std::filesystem::path& path);

/// Training is allowed until freeze(); afterwards any training entry point
/// throws.
class HarnessState {
 public:
  void freeze() { frozen_ = true; }
  bool frozen() const { return frozen_; }
  void begin_training(std::string_view what);
  std::size_t training_calls() const { return training_calls_; }

 private:
  bool frozen_ = false;
  std::size_t training_calls_ = 0;
};

struct PreparedData {
  FeederGraph feeder;
  std::vector<Sample> samples;  // normalized
  NormStats stats;
  ScenarioGrid grid;
  std::uint64_t seed = 0;
  std::string feeder_hash;
};

PreparedData prepare_data(const ExperimentConfig& config);
/// Loads a dataset directory and normalizes it with its stored statistics.
PreparedData prepare_data(const std::filesystem::path& dataset_dir);

/// Trained networks of one run, keyed by stage label ("I", "I-joint",
/// "I+II", "I+II-joint", "II-only").
struct TrainedModels {
  std::map<std::string, Stage1Network> stage1;
  std::map<std::string, Stage2Network> stage2;
  std::optional<MlpBaseline> mlp;
  std::optional<GcnBaseline> gcn;
  std::vector<std::size_t> labeled;  // training sample indices
};

std::uint64_t fingerprint(const ParamStore& store);
std::uint64_t fingerprint(const TrainedModels& models);

struct RunOutput {
  TrainedModels models;
  std::map<std::string, std::vector<std::size_t>> predictions;  // per reported stage, over `unlabeled`
  std::map<std::string, double> runtime;
  std::map<std::string, std::vector<EpochRecord>> history;
};

/// Trains every model the plan asks for on split.labeled and predicts the
/// unlabeled samples (transductively for the Stage II arms).
RunOutput train_run(const FeederGraph& g, std::span<const Sample> samples, const Split& split, const RunPlan& plan,
                    const ModelSettings& settings, std::uint64_t seed, HarnessState& state);

/// Reported stage labels for a plan, in output order.
std::vector<std::string> reported_stages(const RunPlan& plan);

/// Frozen forward pass of every reported model over `targets`. Stage II arms
/// build B over the labeled reference samples followed by the targets.
std::map<std::string, std::vector<std::size_t>> predict_frozen(const TrainedModels& models, const FeederGraph& g,
                                                               const ModelSettings& settings,
                                                               std::span<const Matrix> reference,
                                                               std::span<const Matrix> targets);

/// Generates and normalizes the samples of a shifted scenario.
std::vector<Sample> scenario_samples(const FeederGraph& g, const ScenarioGrid& grid, const Scenario& scenario,
                                     const NormStats& stats, std::uint64_t seed);

struct ResultRow {
  std::string scenario;
  std::uint64_t seed = 0;
  double beta = 0.0;
  std::string stage;
  MetricsReport metrics;
  double runtime_s = 0.0;
};

/// runtime_s is written as 0 unless `timing` so results stay byte-stable.
void write_results_csv(const std::filesystem::path& path, std::span<const ResultRow> rows, bool timing);

struct ExperimentResult {
  std::vector<ResultRow> rows;
  nlohmann::json manifest;
};

/// Runs the configured sweep. When config.out is set, results.csv and
/// manifest.json are written there (also on failure, with the rows so far).
ExperimentResult run_experiment(const ExperimentConfig& config, std::ostream* log = nullptr);

Checkpoint models_to_checkpoint(const TrainedModels& models, const nlohmann::json& meta);
TrainedModels models_from_checkpoint(const Checkpoint& ckpt, const FeederGraph& g, const ModelSettings& settings);

}  // namespace ppgn
