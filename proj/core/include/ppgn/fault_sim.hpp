#pragma once

// Constant-current network solves and fault sample generation.
//
// Loads draw fixed currents, so a fault changes only the admittance at the
// faulted bus and the residual Y*dU - dC is supported on that bus's rows.

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ppgn/feeder.hpp"
#include "ppgn/tensor.hpp"

namespace ppgn {

enum class FaultKind { SPG, DPG, PP };

std::string to_string(FaultKind k);
FaultKind fault_kind_from(const std::string& s);

inline constexpr double kMinFaultImpedance = 0.05;
inline constexpr double kMaxFaultImpedance = 20.0;

struct FaultSpec {
  std::size_t node = 0;  // node index
  FaultKind kind = FaultKind::SPG;
  PhaseSet phases;
  double impedance = 1.0;  // ohms; +inf means no fault
};

/// Uniform(low, high) per-node multiplier on the base load currents.
struct LoadDistribution {
  double low = 1.0;
  double high = 1.0;
};

/// Bounds with E|s - 1| = delta_p for s ~ U(low, high) and the given low.
LoadDistribution load_bounds_for_variation(double delta_p, double low = 0.1);

struct LoadScenario {
  std::vector<double> scale;  // per node
  LoadDistribution dist;
};

LoadScenario unit_loads(const FeederGraph& g);
LoadScenario draw_loads(const FeederGraph& g, const LoadDistribution& dist, Rng& rng);

struct NetworkState {
  Eigen::VectorXcd u;  // 3n node-major phase-minor, volts
  Eigen::VectorXcd c;  // 3n net injections, amperes (source current at the slack)
};

/// ||Y u - c||_inf / (||Y||_inf ||u||_inf) over non-slack rows.
double relative_residual(const YBus& y, const NetworkState& s, const FeederGraph& g);

NetworkState solve_prefault(const FeederGraph& g, const LoadScenario& loads);

/// Admittance change at the faulted bus (3x3, siemens).
Block3 fault_admittance_delta(const FaultSpec& spec, const FeederGraph& g);

struct SampleMeta {
  FaultSpec fault;
  std::vector<double> load_scale;
  std::string switch_scenario = "base";
  std::uint64_t seed = 0;
};

/// One fault event: X is n x 6 [|Va|, ang a, |Vb|, ang b, |Vc|, ang c] with
/// zero rows for unobserved nodes; label is the canonical node index.
struct Sample {
  Matrix x;
  std::size_t label = 0;
  SampleMeta meta;
};

/// Angle in (-pi, pi].
double principal_angle(Complex v);

Matrix features_from(const FeederGraph& g, const Eigen::VectorXcd& u);

struct FaultSolution {
  Sample sample;
  NetworkState prefault;
  NetworkState faulted;
  Block3 delta = Block3::Zero();
  Eigen::VectorXcd delta_u;  // U - U0
};

FaultSolution simulate_fault_detailed(const FeederGraph& g, const LoadScenario& loads,
                                      const FaultSpec& spec);
Sample simulate_fault(const FeederGraph& g, const LoadScenario& loads, const FaultSpec& spec);

/// Splits r = Y dU - dC into the faulted node's rows and all other rows.
struct FaultResidual {
  double fault_rows = 0.0;  // ||r||_inf over the faulted node
  double other_rows = 0.0;  // ||r||_inf elsewhere
};

FaultResidual fault_residual(const FeederGraph& g, const FaultSolution& s);

/// Phase sets a fault kind may occupy at a node.
std::vector<PhaseSet> candidate_phase_sets(FaultKind kind, PhaseSet node_phases);

enum class ImpedanceSampling { Uniform, LogUniform };

/// Enumerated fault grid. Sample count is
/// |kinds| x |valid (kind, node)| x impedance_draws x load_draws x |switch_scenarios|.
struct ScenarioGrid {
  std::vector<FaultKind> kinds{FaultKind::SPG, FaultKind::DPG, FaultKind::PP};
  std::vector<int> nodes;  // node ids; empty means every non-slack node
  std::size_t impedance_draws = 20;
  double impedance_low = kMinFaultImpedance;
  double impedance_high = kMaxFaultImpedance;
  ImpedanceSampling impedance_sampling = ImpedanceSampling::Uniform;
  std::size_t load_draws = 1;
  LoadDistribution loads = load_bounds_for_variation(0.53);
  std::vector<std::string> switch_scenarios{"base"};
  std::size_t min_per_class = 1;
  std::size_t threads = 1;
};

ScenarioGrid grid_from_json(const nlohmann::json& j);
nlohmann::json grid_to_json(const ScenarioGrid& grid);

struct DatasetMeta {
  nlohmann::json grid;
  std::uint64_t seed = 0;
  std::vector<std::size_t> classes;  // canonical node indices present, ascending
  std::vector<std::size_t> class_counts;
};

struct Dataset {
  std::vector<Sample> samples;
  DatasetMeta meta;
};

/// Deterministic in (seed, grid): sample i draws from derive_seed(seed, i), so
/// thread count does not change the output.
Dataset generate_dataset(const FeederGraph& g, const ScenarioGrid& grid, std::uint64_t seed);

/// Per-entry statistics (n x 6) over all samples; unobserved rows keep mean 0
/// and std 1.
struct NormStats {
  Matrix mean;
  Matrix std;
};

NormStats compute_norm_stats(std::span<const Sample> samples, std::span<const std::size_t> observed);
void apply_norm(std::span<Sample> samples, const NormStats& stats, std::span<const std::size_t> observed);
/// Computes statistics over the observed rows, then normalizes those rows in place.
NormStats normalize_dataset(std::span<Sample> samples, std::span<const std::size_t> observed);

nlohmann::json norm_stats_to_json(const NormStats& s);
NormStats norm_stats_from_json(const nlohmann::json& j);

}  // namespace ppgn
