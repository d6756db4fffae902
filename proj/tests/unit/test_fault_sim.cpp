#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "ppgn/diagnostics.hpp"
#include "ppgn/fault_sim.hpp"
#include "support.hpp"

namespace ppgn {
namespace {

using testing::balanced;
using testing::data_path;
using testing::toy_feeder;

FeederGraph two_node_loaded() {
  FeederData d = toy_feeder(2, {{1, 2}}, {1});
  d.loads[1] = balanced(0.1);
  return FeederGraph(d);
}

FaultSpec spec(std::size_t node, FaultKind kind, const char* phases, double z) {
  FaultSpec s;
  s.node = node;
  s.kind = kind;
  s.phases = PhaseSet::parse(phases);
  s.impedance = z;
  return s;
}

TEST(SolvePrefault, TwoNodeHandSolve) {
  FeederGraph g = two_node_loaded();
  NetworkState st = solve_prefault(g, unit_loads(g));
  // V1 = 1 - 0.1 / shunt, V2 = V1 - 0.1 / 10
  const Complex v1 = 1.0 - 0.1 / kSlackShuntSiemens;
  EXPECT_LT(std::abs(st.u[0] - v1), 1e-12);
  EXPECT_LT(std::abs(st.u[3] - (v1 - 0.01)), 1e-12);
  EXPECT_NEAR(std::abs(st.u[3]), 0.99, 1e-6);
  EXPECT_NEAR(std::arg(st.u[3]), 0.0, 1e-12);
  const Phasor3 b = balanced();
  for (int p = 0; p < 3; ++p) EXPECT_LT(std::abs(st.u[3 + p] - (b[static_cast<std::size_t>(p)] * 0.99)), 1e-6);
}

TEST(SolvePrefault, ZeroLoadsFlatProfile) {
  FeederGraph g(toy_feeder(6, {{1, 2}, {2, 3}, {2, 4}, {4, 5}, {4, 6}}));
  NetworkState st = solve_prefault(g, unit_loads(g));
  const Phasor3 v = balanced();
  for (std::size_t i = 0; i < 6; ++i)
    for (int p = 0; p < 3; ++p)
      EXPECT_LT(std::abs(st.u[static_cast<Eigen::Index>(3 * i) + p] - v[static_cast<std::size_t>(p)]), 1e-12);
}

TEST(SolvePrefault, Fixture13Residual) {
  FeederGraph g = load_feeder(data_path("feeders/feeder13.json"));
  NetworkState st = solve_prefault(g, unit_loads(g));
  EXPECT_LT(relative_residual(build_ybus(g), st, g), 1e-8);
  Rng rng(3);
  NetworkState st2 = solve_prefault(g, draw_loads(g, load_bounds_for_variation(0.53), rng));
  EXPECT_LT(relative_residual(build_ybus(g), st2, g), 1e-8);
}

TEST(SolvePrefault, IslandIsSimulationError) {
  FeederGraph g = load_feeder(data_path("feeders/feeder13.json"));
  testing::WarningCapture quiet;
  FeederGraph open = apply_switch_states(g, {{0, SwitchState::Open}});
  try {
    solve_prefault(open, unit_loads(open));
    FAIL();
  } catch (const SimulationError& e) {
    EXPECT_NE(std::string(e.what()).find("isolated"), std::string::npos);
  }
}

TEST(FaultDelta, SinglePhaseToGround) {
  FeederGraph g = two_node_loaded();
  Block3 d = fault_admittance_delta(spec(1, FaultKind::SPG, "a", 1.0), g);
  EXPECT_EQ(d(0, 0), Complex(1.0));
  EXPECT_EQ(d.cwiseAbs().sum(), 1.0);
}

TEST(FaultDelta, PhaseToPhase) {
  FeederGraph g = two_node_loaded();
  Block3 d = fault_admittance_delta(spec(1, FaultKind::PP, "ab", 2.0), g);
  EXPECT_EQ(d(0, 0), Complex(0.5));
  EXPECT_EQ(d(1, 1), Complex(0.5));
  EXPECT_EQ(d(0, 1), Complex(-0.5));
  EXPECT_EQ(d(1, 0), Complex(-0.5));
  EXPECT_EQ(d.row(2).cwiseAbs().sum(), 0.0);
  EXPECT_EQ(d.col(2).cwiseAbs().sum(), 0.0);
}

TEST(FaultDelta, DoublePhaseToGroundIndependentPaths) {
  FeederGraph g = two_node_loaded();
  Block3 d = fault_admittance_delta(spec(1, FaultKind::DPG, "bc", 4.0), g);
  EXPECT_EQ(d(1, 1), Complex(0.25));
  EXPECT_EQ(d(2, 2), Complex(0.25));
  EXPECT_EQ(d.cwiseAbs().sum(), 0.5);
}

TEST(FaultDelta, InvalidSpecs) {
  FeederData data = toy_feeder(2, {{1, 2}});
  data.nodes[1].phases = PhaseSet::parse("ab");
  data.branches[0].y(2, 2) = 0.0;
  FeederGraph g(data);
  EXPECT_THROW(fault_admittance_delta(spec(1, FaultKind::SPG, "c", 1.0), g), ValidationError);
  EXPECT_THROW(fault_admittance_delta(spec(1, FaultKind::SPG, "ab", 1.0), g), ValidationError);
  EXPECT_THROW(fault_admittance_delta(spec(1, FaultKind::PP, "a", 1.0), g), ValidationError);
  EXPECT_THROW(fault_admittance_delta(spec(1, FaultKind::SPG, "a", 0.0), g), ValidationError);
}

TEST(SimulateFault, InfiniteImpedanceIsPrefault) {
  FeederGraph g = load_feeder(data_path("feeders/feeder13.json"));
  FaultSolution s = simulate_fault_detailed(g, unit_loads(g), spec(5, FaultKind::SPG, "b", INFINITY));
  EXPECT_EQ(s.delta_u.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(s.sample.x, features_from(g, s.prefault.u));
}

TEST(SimulateFault, VoltageSagAtFault) {
  FeederGraph g = two_node_loaded();
  FaultSolution s = simulate_fault_detailed(g, unit_loads(g), spec(1, FaultKind::SPG, "a", 1.0));
  EXPECT_LT(std::abs(s.faulted.u[3]), std::abs(s.prefault.u[3]));
  EXPECT_EQ(s.sample.label, 1u);
}

TEST(SimulateFault, FeaturesMaskUnobservedRows) {
  FeederGraph g = load_feeder(data_path("feeders/feeder13.json"));
  Sample s = simulate_fault(g, unit_loads(g), spec(3, FaultKind::PP, "ab", 0.5));
  for (std::size_t i = 0; i < g.node_count(); ++i) {
    const auto row = s.x.row(static_cast<Eigen::Index>(i));
    if (!g.is_observed(i)) {
      EXPECT_EQ(row.cwiseAbs().maxCoeff(), 0.0);
      continue;
    }
    for (int p = 0; p < 3; ++p) {
      EXPECT_GT(row(2 * p + 1), -std::numbers::pi);
      EXPECT_LE(row(2 * p + 1), std::numbers::pi);
    }
  }
}

TEST(SimulateFault, PrincipalAngleRange) {
  EXPECT_EQ(principal_angle(Complex(-1.0, -0.0)), std::numbers::pi);
  EXPECT_EQ(principal_angle(Complex(-1.0, 0.0)), std::numbers::pi);
  EXPECT_NEAR(principal_angle(Complex(0.0, -1.0)), -std::numbers::pi / 2, 1e-15);
}

void expect_sparse_residual(const FeederGraph& g, Rng& rng, int faults) {
  const LoadDistribution dist = load_bounds_for_variation(0.53);
  for (int t = 0; t < faults; ++t) {
    std::size_t node = uniform_index(rng, g.node_count());
    if (node == g.slack()) node = (node + 1) % g.node_count();
    const FaultKind kind = static_cast<FaultKind>(uniform_index(rng, 3));
    const auto options = candidate_phase_sets(kind, g.nodes()[node].phases);
    if (options.empty()) continue;
    FaultSpec f;
    f.node = node;
    f.kind = kind;
    f.phases = options[uniform_index(rng, options.size())];
    f.impedance = uniform(rng, kMinFaultImpedance, kMaxFaultImpedance);
    FaultSolution s = simulate_fault_detailed(g, draw_loads(g, dist, rng), f);
    FaultResidual r = fault_residual(g, s);
    EXPECT_GT(r.fault_rows, 0.0);
    EXPECT_LT(r.other_rows, 1e-8 * r.fault_rows) << "node " << g.id_of(node) << " " << to_string(kind);
  }
}

TEST(SimulateFaultProperty, ResidualSupportedOnFaultRows) {
  Rng rng(101);
  expect_sparse_residual(load_feeder(data_path("feeders/feeder13.json")), rng, 100);
  expect_sparse_residual(load_feeder(data_path("feeders/feeder36.json")), rng, 50);
  for (int k = 0; k < 10; ++k) {
    const std::size_t n = 3 + uniform_index(rng, 10);
    std::vector<std::pair<int, int>> edges;
    for (std::size_t i = 1; i < n; ++i) edges.emplace_back(static_cast<int>(uniform_index(rng, i)) + 1, static_cast<int>(i) + 1);
    FeederData d = toy_feeder(n, edges, {0});
    for (auto& load : d.loads) load = balanced(uniform(rng, 0.0, 0.05));
    expect_sparse_residual(FeederGraph(d), rng, 10);
  }
}

TEST(SimulateFaultProperty, SagMonotoneInImpedance) {
  FeederGraph g = load_feeder(data_path("feeders/feeder13.json"));
  Rng rng(5);
  for (int t = 0; t < 20; ++t) {
    std::size_t node = 1 + uniform_index(rng, g.node_count() - 1);
    const auto options = candidate_phase_sets(FaultKind::SPG, g.nodes()[node].phases);
    const PhaseSet ph = options[uniform_index(rng, options.size())];
    int p = 0;
    while (!ph.has(p)) ++p;
    const LoadScenario loads = draw_loads(g, load_bounds_for_variation(0.53), rng);
    double previous = INFINITY;
    for (double z : {20.0, 10.0, 5.0, 2.0, 1.0, 0.5, 0.2, 0.05}) {
      FaultSpec f;
      f.node = node;
      f.kind = FaultKind::SPG;
      f.phases = ph;
      f.impedance = z;
      const double mag = std::abs(simulate_fault_detailed(g, loads, f).faulted.u[static_cast<Eigen::Index>(3 * node) + p]);
      EXPECT_LE(mag, previous + 1e-9 * previous);
      previous = mag;
    }
  }
}

TEST(LoadBounds, MeanAbsoluteDeviationMatches) {
  for (auto [target, low] : {std::pair{0.4, 0.1}, {0.53, 0.1}, {0.8, 0.1}, {1.2, 0.1}, {0.1, 0.9}, {0.3, 0.7}}) {
    LoadDistribution d = load_bounds_for_variation(target, low);
    EXPECT_DOUBLE_EQ(d.low, low);
    const int steps = 200000;
    double mad = 0.0;
    for (int i = 0; i < steps; ++i) {
      const double s = d.low + (d.high - d.low) * (i + 0.5) / steps;
      mad += std::abs(s - 1.0);
    }
    EXPECT_NEAR(mad / steps, target, 1e-6);
  }
  EXPECT_THROW(load_bounds_for_variation(0.53, 0.0), ConfigError);
  // With low fixed, E|s-1| cannot drop below (1 - low)(sqrt(2) - 1).
  EXPECT_THROW(load_bounds_for_variation(0.3, 0.1), ConfigError);
  EXPECT_NO_THROW(load_bounds_for_variation(0.9 * (std::sqrt(2.0) - 1.0) + 1e-12, 0.1));
}

TEST(CandidatePhases, CountsPerKind) {
  EXPECT_EQ(candidate_phase_sets(FaultKind::SPG, PhaseSet::all()).size(), 3u);
  EXPECT_EQ(candidate_phase_sets(FaultKind::DPG, PhaseSet::all()).size(), 3u);
  EXPECT_EQ(candidate_phase_sets(FaultKind::PP, PhaseSet::parse("bc")).size(), 1u);
  EXPECT_TRUE(candidate_phase_sets(FaultKind::PP, PhaseSet::parse("a")).empty());
}

TEST(GenerateDataset, UnitGrid) {
  FeederGraph g = load_feeder(data_path("feeders/feeder13.json"));
  ScenarioGrid grid;
  grid.kinds = {FaultKind::SPG};
  grid.nodes = {7};
  grid.impedance_draws = 1;
  Dataset ds = generate_dataset(g, grid, 1);
  ASSERT_EQ(ds.samples.size(), 1u);
  EXPECT_EQ(ds.samples[0].label, g.index_of(7));
}

TEST(GenerateDataset, Fixture13CountsAndBalance) {
  FeederGraph g = load_feeder(data_path("feeders/feeder13.json"));
  ScenarioGrid grid;
  grid.impedance_draws = 20;
  Dataset ds = generate_dataset(g, grid, 7);
  EXPECT_EQ(ds.samples.size(), 3u * 12u * 20u);
  ASSERT_EQ(ds.meta.classes.size(), 12u);
  for (std::size_t c : ds.meta.class_counts) EXPECT_EQ(c, 60u);
  for (const auto& s : ds.samples) {
    EXPECT_GE(s.meta.fault.impedance, kMinFaultImpedance);
    EXPECT_LE(s.meta.fault.impedance, kMaxFaultImpedance);
  }
}

TEST(GenerateDataset, DeterministicAcrossRunsAndThreads) {
  FeederGraph g = load_feeder(data_path("feeders/feeder13.json"));
  ScenarioGrid grid;
  grid.impedance_draws = 3;
  Dataset a = generate_dataset(g, grid, 11);
  Dataset b = generate_dataset(g, grid, 11);
  grid.threads = 3;
  Dataset c = generate_dataset(g, grid, 11);
  ASSERT_EQ(a.samples.size(), c.samples.size());
  for (std::size_t i = 0; i < a.samples.size(); ++i) {
    EXPECT_EQ(a.samples[i].x, b.samples[i].x);
    EXPECT_EQ(a.samples[i].x, c.samples[i].x);
    EXPECT_EQ(a.samples[i].meta.seed, c.samples[i].meta.seed);
  }
  Dataset other = generate_dataset(g, grid, 12);
  EXPECT_NE(a.samples[0].x, other.samples[0].x);
}

TEST(GenerateDataset, InfeasibleGrid) {
  FeederGraph g = load_feeder(data_path("feeders/feeder13.json"));
  ScenarioGrid grid;
  grid.impedance_draws = 1;
  grid.min_per_class = 100;
  EXPECT_THROW(generate_dataset(g, grid, 1), ConfigError);
}

TEST(GenerateDataset, GridJsonRoundTrip) {
  ScenarioGrid grid;
  grid.kinds = {FaultKind::PP};
  grid.impedance_draws = 4;
  grid.impedance_sampling = ImpedanceSampling::LogUniform;
  grid.switch_scenarios = {"base", "open-1-3"};
  ScenarioGrid back = grid_from_json(grid_to_json(grid));
  EXPECT_EQ(back.kinds.size(), 1u);
  EXPECT_EQ(back.impedance_draws, 4u);
  EXPECT_EQ(back.impedance_sampling, ImpedanceSampling::LogUniform);
  EXPECT_EQ(back.switch_scenarios, grid.switch_scenarios);
  EXPECT_EQ(grid_to_json(back), grid_to_json(grid));
}

TEST(Normalize, IdenticalSamplesBecomeZero) {
  FeederGraph g = load_feeder(data_path("feeders/feeder13.json"));
  Sample s = simulate_fault(g, unit_loads(g), spec(3, FaultKind::SPG, "a", 1.0));
  std::vector<Sample> samples(5, s);
  testing::WarningCapture w;
  normalize_dataset(samples, g.observed());
  EXPECT_TRUE(w.any_contains("zero variance"));
  EXPECT_EQ(w.messages.size(), 1u);
  for (const auto& x : samples) EXPECT_EQ(x.x.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Normalize, ZeroMeanAndMaskPreserved) {
  FeederGraph g = load_feeder(data_path("feeders/feeder13.json"));
  ScenarioGrid grid;
  grid.impedance_draws = 4;
  Dataset ds = generate_dataset(g, grid, 3);
  NormStats st = normalize_dataset(ds.samples, g.observed());
  for (int c = 0; c < 6; ++c) {
    double sum = 0.0, count = 0.0;
    for (const auto& s : ds.samples)
      for (std::size_t i : g.observed()) {
        sum += s.x(static_cast<Eigen::Index>(i), c);
        count += 1.0;
      }
    EXPECT_NEAR(sum / count, 0.0, 1e-10);
  }
  // Each observed entry is standardized on its own.
  for (std::size_t i : g.observed())
    for (int c = 0; c < 6; ++c) {
      double sum = 0.0, sq = 0.0;
      for (const auto& s : ds.samples) {
        sum += s.x(static_cast<Eigen::Index>(i), c);
        sq += s.x(static_cast<Eigen::Index>(i), c) * s.x(static_cast<Eigen::Index>(i), c);
      }
      const double count = static_cast<double>(ds.samples.size());
      EXPECT_NEAR(sum / count, 0.0, 1e-10);
      if (sq > 0.0) EXPECT_NEAR(sq / count, 1.0, 1e-9);  // zero-variance entries are clamped and end at 0
    }
  for (const auto& s : ds.samples)
    for (std::size_t i = 0; i < g.node_count(); ++i)
      if (!g.is_observed(i)) EXPECT_EQ(s.x.row(static_cast<Eigen::Index>(i)).cwiseAbs().maxCoeff(), 0.0);
  NormStats back = norm_stats_from_json(norm_stats_to_json(st));
  EXPECT_EQ(back.mean, st.mean);
  EXPECT_EQ(back.std, st.std);
}

}  // namespace
}  // namespace ppgn
