#include <benchmark/benchmark.h>

#include "ppgn/adjacency.hpp"
#include "ppgn/fault_sim.hpp"
#include "ppgn/stage1.hpp"
#include "ppgn/stage2.hpp"

namespace {

ppgn::FeederGraph feeder36() { return ppgn::load_feeder(std::string(PPGN_DATA_DIR) + "/feeders/feeder36.json"); }

void BM_BuildYbus(benchmark::State& state) {
  const ppgn::FeederGraph g = feeder36();
  for (auto _ : state) benchmark::DoNotOptimize(ppgn::build_ybus(g));
}
BENCHMARK(BM_BuildYbus);

void BM_SimulateFault(benchmark::State& state) {
  const ppgn::FeederGraph g = feeder36();
  ppgn::FaultSpec f;
  f.kind = ppgn::FaultKind::SPG;
  f.node = 10;
  f.impedance = 5.0;
  f.phases = ppgn::candidate_phase_sets(f.kind, g.nodes()[f.node].phases).front();
  const ppgn::LoadScenario loads = ppgn::unit_loads(g);
  for (auto _ : state) benchmark::DoNotOptimize(ppgn::simulate_fault(g, loads, f));
}
BENCHMARK(BM_SimulateFault);

void BM_BuildA(benchmark::State& state) {
  const ppgn::DistanceTable d = ppgn::shortest_paths(feeder36());
  for (auto _ : state) benchmark::DoNotOptimize(ppgn::build_A(d, static_cast<std::size_t>(state.range(0))));
}
BENCHMARK(BM_BuildA)->Arg(3)->Arg(8);

void BM_Stage1Step(benchmark::State& state) {
  const ppgn::FeederGraph g = feeder36();
  const ppgn::AdjacencyA a = ppgn::build_A(ppgn::shortest_paths(g), ppgn::kDefaultNeighbors);
  ppgn::Rng rng(1);
  const std::size_t n = g.node_count();
  ppgn::Stage1Network net(n, a.aggregation(), 3, 32, rng);
  const auto batch = static_cast<Eigen::Index>(state.range(0));
  ppgn::Matrix stacked(batch * static_cast<Eigen::Index>(n), 6);
  for (Eigen::Index i = 0; i < stacked.size(); ++i) stacked.data()[i] = ppgn::uniform(rng, -1.0, 1.0);
  std::vector<int> y(static_cast<std::size_t>(batch));
  for (auto& t : y) t = static_cast<int>(ppgn::uniform_index(rng, n));
  for (auto _ : state) {
    net.params().zero_grad();
    benchmark::DoNotOptimize(net.loss(stacked, y, 5e-3, true));
    ppgn::adam_step(net.params(), ppgn::AdamConfig{});
  }
}
BENCHMARK(BM_Stage1Step)->Arg(32);

void BM_BuildB(benchmark::State& state) {
  ppgn::Rng rng(2);
  const auto rows = state.range(0);
  ppgn::Matrix e(rows, 36);
  for (Eigen::Index i = 0; i < e.size(); ++i) e.data()[i] = ppgn::uniform01(rng) < 0.8 ? 0.0 : ppgn::uniform01(rng);
  for (auto _ : state) benchmark::DoNotOptimize(ppgn::build_B(e, 20));
}
BENCHMARK(BM_BuildB)->Arg(500)->Arg(2000);

}  // namespace

BENCHMARK_MAIN();
