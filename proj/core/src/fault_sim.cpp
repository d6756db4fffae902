#include "ppgn/fault_sim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <thread>

#include "ppgn/diagnostics.hpp"

namespace ppgn {

std::string to_string(FaultKind k) {
  switch (k) {
    case FaultKind::SPG: return "SPG";
    case FaultKind::DPG: return "DPG";
    case FaultKind::PP: return "PP";
  }
  return "?";
}

FaultKind fault_kind_from(const std::string& s) {
  if (s == "SPG") return FaultKind::SPG;
  if (s == "DPG") return FaultKind::DPG;
  if (s == "PP") return FaultKind::PP;
  throw ConfigError("unknown fault kind " + s);
}

LoadDistribution load_bounds_for_variation(double delta_p, double low) {
  // E|s-1| = ((1-l)^2 + (h-1)^2) / (2 (h-l)); solve the quadratic in x = h-1.
  const double a = 1.0 - low;
  const double disc = delta_p * delta_p - a * a + 2.0 * delta_p * a;
  if (low <= 0.0 || low >= 1.0 || disc < 0.0)
    throw ConfigError("load variation " + std::to_string(delta_p) + " unreachable with low=" + std::to_string(low));
  const double x = delta_p + std::sqrt(disc);
  return {low, 1.0 + x};
}

LoadScenario unit_loads(const FeederGraph& g) { return {std::vector<double>(g.node_count(), 1.0), {1.0, 1.0}}; }

LoadScenario draw_loads(const FeederGraph& g, const LoadDistribution& dist, Rng& rng) {
  if (!(dist.low > 0.0) || dist.high < dist.low) throw ConfigError("load scale bounds must satisfy 0 < low <= high");
  LoadScenario s{std::vector<double>(g.node_count()), dist};
  for (auto& v : s.scale) v = uniform(rng, dist.low, dist.high);
  return s;
}

namespace {

struct Unknowns {
  std::vector<Eigen::Index> rows;  // global 3n index per unknown
  std::vector<Eigen::Index> slot;  // global -> local, -1 if absent
};

Unknowns present_unknowns(const FeederGraph& g) {
  Unknowns u;
  u.slot.assign(3 * g.node_count(), -1);
  for (std::size_t i = 0; i < g.node_count(); ++i)
    for (int p = 0; p < 3; ++p)
      if (g.nodes()[i].phases.has(p)) {
        const auto gi = static_cast<Eigen::Index>(3 * i + static_cast<std::size_t>(p));
        u.slot[static_cast<std::size_t>(gi)] = static_cast<Eigen::Index>(u.rows.size());
        u.rows.push_back(gi);
      }
  return u;
}

std::string island_ids(const FeederGraph& g, const std::vector<std::size_t>& nodes) {
  std::string ids;
  for (std::size_t i : nodes) ids += (ids.empty() ? "" : ",") + std::to_string(g.id_of(i));
  return ids;
}

// Solves (Y + source shunt + extra at `fault_node`) U = -loads + Norton source.
NetworkState solve_network(const FeederGraph& g, const YBus& ybus, const LoadScenario& loads,
                           const Block3* extra, std::size_t fault_node) {
  if (!ybus.islanded.empty())
    throw SimulationError("isolated nodes without a source: " + island_ids(g, ybus.islanded));
  if (loads.scale.size() != g.node_count()) throw ConfigError("load scenario size differs from node count");
  const Unknowns unk = present_unknowns(g);
  const auto m = static_cast<Eigen::Index>(unk.rows.size());
  const auto s = static_cast<Eigen::Index>(g.slack());

  Eigen::MatrixXcd a(m, m);
  for (Eigen::Index r = 0; r < m; ++r)
    for (Eigen::Index c = 0; c < m; ++c) a(r, c) = ybus.y(unk.rows[static_cast<std::size_t>(r)], unk.rows[static_cast<std::size_t>(c)]);
  Eigen::VectorXcd rhs = Eigen::VectorXcd::Zero(m);

  for (std::size_t i = 0; i < g.node_count(); ++i)
    for (int p = 0; p < 3; ++p) {
      const auto local = unk.slot[3 * i + static_cast<std::size_t>(p)];
      if (local < 0) continue;
      rhs[local] -= loads.scale[i] * g.loads()[i][static_cast<std::size_t>(p)];
    }
  for (int p = 0; p < 3; ++p) {
    const auto local = unk.slot[static_cast<std::size_t>(3 * s + p)];
    if (local < 0) continue;
    a(local, local) += kSlackShuntSiemens;
    rhs[local] += kSlackShuntSiemens * g.slack_voltage()[static_cast<std::size_t>(p)];
  }
  if (extra != nullptr) {
    for (int p = 0; p < 3; ++p)
      for (int q = 0; q < 3; ++q) {
        const auto lp = unk.slot[3 * fault_node + static_cast<std::size_t>(p)];
        const auto lq = unk.slot[3 * fault_node + static_cast<std::size_t>(q)];
        if (lp >= 0 && lq >= 0) a(lp, lq) += (*extra)(p, q);
      }
  }

  Eigen::PartialPivLU<Eigen::MatrixXcd> lu(a);
  Eigen::VectorXcd x = lu.solve(rhs);
  // One step of iterative refinement keeps the residual near the rounding floor.
  x += lu.solve(rhs - a * x);
  if (!x.allFinite()) throw SimulationError("singular network system");

  NetworkState st;
  st.u = Eigen::VectorXcd::Zero(3 * static_cast<Eigen::Index>(g.node_count()));
  for (Eigen::Index r = 0; r < m; ++r) st.u[unk.rows[static_cast<std::size_t>(r)]] = x[r];
  // Net injections seen by the network: load draws plus source current at the slack.
  st.c = Eigen::VectorXcd::Zero(st.u.size());
  for (std::size_t i = 0; i < g.node_count(); ++i)
    for (int p = 0; p < 3; ++p)
      if (g.nodes()[i].phases.has(p))
        st.c[static_cast<Eigen::Index>(3 * i) + p] = -loads.scale[i] * g.loads()[i][static_cast<std::size_t>(p)];
  for (int p = 0; p < 3; ++p)
    if (g.nodes()[g.slack()].phases.has(p))
      st.c[3 * s + p] += kSlackShuntSiemens * (g.slack_voltage()[static_cast<std::size_t>(p)] - st.u[3 * s + p]);
  return st;
}

}  // namespace

double relative_residual(const YBus& y, const NetworkState& s, const FeederGraph& g) {
  const Eigen::VectorXcd r = y.y * s.u - s.c;
  const auto slack = static_cast<Eigen::Index>(g.slack());
  double worst = 0.0, ynorm = 0.0;
  for (Eigen::Index i = 0; i < r.size(); ++i) {
    if (i / 3 == slack) continue;
    worst = std::max(worst, std::abs(r[i]));
    ynorm = std::max(ynorm, y.y.row(i).cwiseAbs().sum());
  }
  const double scale = ynorm * s.u.cwiseAbs().maxCoeff();
  return scale > 0.0 ? worst / scale : worst;
}

NetworkState solve_prefault(const FeederGraph& g, const LoadScenario& loads) {
  const YBus y = build_ybus(g);
  return solve_network(g, y, loads, nullptr, 0);
}

Block3 fault_admittance_delta(const FaultSpec& spec, const FeederGraph& g) {
  if (spec.node >= g.node_count()) throw ValidationError("fault node out of range");
  const PhaseSet node_phases = g.nodes()[spec.node].phases;
  const int count = spec.phases.count();
  const bool ok_count = spec.kind == FaultKind::SPG ? count == 1 : count == 2;
  if (!ok_count) throw ValidationError(to_string(spec.kind) + " fault needs " + (spec.kind == FaultKind::SPG ? "1" : "2") + " phases");
  if ((spec.phases & node_phases) != spec.phases)
    throw ValidationError("fault phase " + spec.phases.str() + " absent at node " + std::to_string(g.id_of(spec.node)));
  if (!(spec.impedance > 0.0)) throw ValidationError("fault impedance must be positive");

  Block3 d = Block3::Zero();
  if (std::isinf(spec.impedance)) return d;
  const double y = 1.0 / spec.impedance;
  std::vector<int> ph;
  for (int p = 0; p < 3; ++p)
    if (spec.phases.has(p)) ph.push_back(p);
  switch (spec.kind) {
    case FaultKind::SPG:
    case FaultKind::DPG:
      for (int p : ph) d(p, p) += y;
      break;
    case FaultKind::PP:
      d(ph[0], ph[0]) += y;
      d(ph[1], ph[1]) += y;
      d(ph[0], ph[1]) -= y;
      d(ph[1], ph[0]) -= y;
      break;
  }
  return d;
}

double principal_angle(Complex v) {
  const double a = std::arg(v);
  return a <= -std::numbers::pi ? std::numbers::pi : a;
}

Matrix features_from(const FeederGraph& g, const Eigen::VectorXcd& u) {
  Matrix x = Matrix::Zero(static_cast<Eigen::Index>(g.node_count()), 6);
  for (std::size_t i : g.observed()) {
    for (int p = 0; p < 3; ++p) {
      if (!g.nodes()[i].phases.has(p)) continue;
      const Complex v = u[static_cast<Eigen::Index>(3 * i) + p];
      x(static_cast<Eigen::Index>(i), 2 * p) = std::abs(v);
      x(static_cast<Eigen::Index>(i), 2 * p + 1) = principal_angle(v);
    }
  }
  return x;
}

FaultSolution simulate_fault_detailed(const FeederGraph& g, const LoadScenario& loads, const FaultSpec& spec) {
  const YBus y = build_ybus(g);
  FaultSolution out;
  out.delta = fault_admittance_delta(spec, g);
  out.prefault = solve_network(g, y, loads, nullptr, 0);
  out.faulted = solve_network(g, y, loads, &out.delta, spec.node);
  out.delta_u = out.faulted.u - out.prefault.u;
  out.sample.x = features_from(g, out.faulted.u);
  out.sample.label = g.canonical(spec.node);
  out.sample.meta.fault = spec;
  out.sample.meta.load_scale = loads.scale;
  return out;
}

Sample simulate_fault(const FeederGraph& g, const LoadScenario& loads, const FaultSpec& spec) {
  return simulate_fault_detailed(g, loads, spec).sample;
}

FaultResidual fault_residual(const FeederGraph& g, const FaultSolution& s) {
  const YBus y = build_ybus(g);
  const Eigen::VectorXcd r = y.y * s.delta_u - (s.faulted.c - s.prefault.c);
  const auto f = static_cast<Eigen::Index>(s.sample.meta.fault.node);
  FaultResidual out;
  for (Eigen::Index i = 0; i < r.size(); ++i) {
    double& slot = i / 3 == f ? out.fault_rows : out.other_rows;
    slot = std::max(slot, std::abs(r[i]));
  }
  return out;
}

std::vector<PhaseSet> candidate_phase_sets(FaultKind kind, PhaseSet node_phases) {
  std::vector<PhaseSet> out;
  if (kind == FaultKind::SPG) {
    for (int p = 0; p < 3; ++p)
      if (node_phases.has(p)) out.emplace_back(static_cast<std::uint8_t>(1u << p));
  } else {
    for (int p = 0; p < 3; ++p)
      for (int q = p + 1; q < 3; ++q)
        if (node_phases.has(p) && node_phases.has(q)) out.emplace_back(static_cast<std::uint8_t>((1u << p) | (1u << q)));
  }
  return out;
}

ScenarioGrid grid_from_json(const nlohmann::json& j) {
  ScenarioGrid g;
  try {
    if (j.contains("kinds")) {
      g.kinds.clear();
      for (const auto& k : j["kinds"]) g.kinds.push_back(fault_kind_from(k.get<std::string>()));
    }
    if (j.contains("nodes") && j["nodes"].is_array()) g.nodes = j["nodes"].get<std::vector<int>>();
    g.impedance_draws = j.value("impedance_draws", g.impedance_draws);
    if (j.contains("impedance_range")) {
      const auto r = j["impedance_range"].get<std::vector<double>>();
      if (r.size() != 2 || !(r[0] > 0.0) || r[1] < r[0]) throw ConfigError("impedance_range must be [low, high] with 0 < low <= high");
      g.impedance_low = r[0];
      g.impedance_high = r[1];
    }
    const auto sampling = j.value("impedance_sampling", std::string("uniform"));
    if (sampling == "uniform") g.impedance_sampling = ImpedanceSampling::Uniform;
    else if (sampling == "log-uniform") g.impedance_sampling = ImpedanceSampling::LogUniform;
    else throw ConfigError("impedance_sampling must be uniform or log-uniform");
    g.load_draws = j.value("load_draws", g.load_draws);
    if (j.contains("load_range")) {
      const auto r = j["load_range"].get<std::vector<double>>();
      if (r.size() != 2) throw ConfigError("load_range must be [low, high]");
      g.loads = {r[0], r[1]};
    } else if (j.contains("load_variation")) {
      g.loads = load_bounds_for_variation(j["load_variation"].get<double>(), j.value("load_low", 0.1));
    }
    if (j.contains("switch_scenarios")) g.switch_scenarios = j["switch_scenarios"].get<std::vector<std::string>>();
    g.min_per_class = j.value("min_per_class", g.min_per_class);
    g.threads = j.value("threads", g.threads);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("grid: ") + e.what());
  }
  if (g.kinds.empty() || g.impedance_draws == 0 || g.load_draws == 0 || g.switch_scenarios.empty())
    throw ConfigError("grid: every axis needs at least one entry");
  return g;
}

nlohmann::json grid_to_json(const ScenarioGrid& g) {
  nlohmann::json j;
  j["format"] = "ppgn-grid-v1";
  j["kinds"] = nlohmann::json::array();
  for (auto k : g.kinds) j["kinds"].push_back(to_string(k));
  j["nodes"] = g.nodes;
  j["impedance_draws"] = g.impedance_draws;
  j["impedance_range"] = {g.impedance_low, g.impedance_high};
  j["impedance_sampling"] = g.impedance_sampling == ImpedanceSampling::Uniform ? "uniform" : "log-uniform";
  j["load_draws"] = g.load_draws;
  j["load_range"] = {g.loads.low, g.loads.high};
  j["switch_scenarios"] = g.switch_scenarios;
  j["min_per_class"] = g.min_per_class;
  return j;
}

namespace {

struct Job {
  FaultKind kind;
  std::size_t node;
  std::size_t scenario;
};

}  // namespace

Dataset generate_dataset(const FeederGraph& base, const ScenarioGrid& grid, std::uint64_t seed) {
  std::vector<std::size_t> nodes;
  if (grid.nodes.empty()) {
    for (std::size_t i = 0; i < base.node_count(); ++i)
      if (i != base.slack()) nodes.push_back(i);
  } else {
    for (int id : grid.nodes) nodes.push_back(base.index_of(id));
  }

  std::vector<FeederGraph> topologies;
  for (const auto& name : grid.switch_scenarios) {
    topologies.push_back(apply_scenario(base, name));
    const YBus y = build_ybus(topologies.back());
    if (!y.islanded.empty())
      throw ConfigError("switch scenario " + name + " islands nodes " + island_ids(base, y.islanded));
  }

  std::vector<Job> jobs;
  for (std::size_t sc = 0; sc < topologies.size(); ++sc)
    for (FaultKind kind : grid.kinds)
      for (std::size_t node : nodes)
        if (!candidate_phase_sets(kind, base.nodes()[node].phases).empty())
          for (std::size_t r = 0; r < grid.impedance_draws * grid.load_draws; ++r) jobs.push_back({kind, node, sc});

  // Class feasibility before any solve.
  std::map<std::size_t, std::size_t> hist;
  for (std::size_t node : nodes) hist[base.canonical(node)] += 0;
  for (const auto& job : jobs) ++hist[base.canonical(job.node)];
  for (auto [cls, count] : hist)
    if (count < std::max<std::size_t>(grid.min_per_class, 1))
      throw ConfigError("infeasible grid: class " + std::to_string(base.id_of(cls)) + " has " +
                        std::to_string(count) + " valid fault configurations");

  Dataset ds;
  ds.samples.resize(jobs.size());
  auto run = [&](std::size_t index) {
    const Job& job = jobs[index];
    const FeederGraph& g = topologies[job.scenario];
    const std::uint64_t sample_seed = derive_seed(seed, index);
    Rng rng(sample_seed);
    const auto options = candidate_phase_sets(job.kind, g.nodes()[job.node].phases);
    FaultSpec spec;
    spec.node = job.node;
    spec.kind = job.kind;
    spec.phases = options[uniform_index(rng, options.size())];
    spec.impedance = grid.impedance_sampling == ImpedanceSampling::Uniform
                         ? uniform(rng, grid.impedance_low, grid.impedance_high)
                         : std::exp(uniform(rng, std::log(grid.impedance_low), std::log(grid.impedance_high)));
    const LoadScenario loads = draw_loads(g, grid.loads, rng);
    Sample s = simulate_fault(g, loads, spec);
    s.meta.switch_scenario = grid.switch_scenarios[job.scenario];
    s.meta.seed = sample_seed;
    ds.samples[index] = std::move(s);
  };

  const std::size_t threads = std::max<std::size_t>(1, std::min(grid.threads, jobs.size()));
  if (threads == 1) {
    for (std::size_t i = 0; i < jobs.size(); ++i) run(i);
  } else {
    std::vector<std::jthread> pool;
    std::vector<std::exception_ptr> errors(threads);
    for (std::size_t t = 0; t < threads; ++t)
      pool.emplace_back([&, t] {
        try {
          for (std::size_t i = t; i < jobs.size(); i += threads) run(i);
        } catch (...) {
          errors[t] = std::current_exception();
        }
      });
    pool.clear();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }

  ds.meta.grid = grid_to_json(grid);
  ds.meta.seed = seed;
  for (auto [cls, count] : hist) {
    ds.meta.classes.push_back(cls);
    ds.meta.class_counts.push_back(count);
  }
  return ds;
}

NormStats compute_norm_stats(std::span<const Sample> samples, std::span<const std::size_t> observed) {
  if (samples.empty()) throw ConfigError("normalize: empty dataset");
  const Eigen::Index n = samples.front().x.rows();
  NormStats st{Matrix::Zero(n, 6), Matrix::Ones(n, 6)};
  const double count = static_cast<double>(samples.size());
  for (std::size_t i : observed) {
    if (static_cast<Eigen::Index>(i) >= n) throw ShapeError("normalize: observed row out of range");
    const auto r = static_cast<Eigen::Index>(i);
    // Shifted by the first sample so constant entries come out exact.
    const RowVector shift = samples.front().x.row(r);
    RowVector sum = RowVector::Zero(6);
    for (const auto& s : samples) sum += s.x.row(r) - shift;
    st.mean.row(r) = shift + sum / count;
  }
  std::size_t clamped = 0;
  for (std::size_t i : observed) {
    const auto r = static_cast<Eigen::Index>(i);
    RowVector sq = RowVector::Zero(6);
    for (const auto& s : samples) sq += (s.x.row(r) - st.mean.row(r)).array().square().matrix();
    for (Eigen::Index c = 0; c < 6; ++c) {
      const double sd = std::sqrt(sq(c) / count);
      if (sd > 1e-12 * std::max(1.0, std::abs(st.mean(r, c)))) {
        st.std(r, c) = sd;
      } else {
        st.std(r, c) = 1.0;
        ++clamped;
      }
    }
  }
  if (clamped > 0) warn("normalize: " + std::to_string(clamped) + " feature entries have zero variance; std clamped to 1");
  return st;
}

void apply_norm(std::span<Sample> samples, const NormStats& stats, std::span<const std::size_t> observed) {
  for (auto& s : samples) {
    if (s.x.rows() != stats.mean.rows()) throw ShapeError("normalize: sample size differs from the statistics");
    for (std::size_t i : observed) {
      const auto r = static_cast<Eigen::Index>(i);
      s.x.row(r) = ((s.x.row(r) - stats.mean.row(r)).array() / stats.std.row(r).array()).matrix();
    }
  }
}

NormStats normalize_dataset(std::span<Sample> samples, std::span<const std::size_t> observed) {
  const NormStats st = compute_norm_stats(samples, observed);
  apply_norm(samples, st, observed);
  return st;
}

nlohmann::json norm_stats_to_json(const NormStats& s) {
  auto rows = [](const Matrix& m) {
    nlohmann::json out = nlohmann::json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) out.push_back(std::vector<double>(m.row(r).data(), m.row(r).data() + m.cols()));
    return out;
  };
  return {{"mean", rows(s.mean)}, {"std", rows(s.std)}};
}

NormStats norm_stats_from_json(const nlohmann::json& j) {
  auto matrix = [](const nlohmann::json& a) {
    const auto rows = a.get<std::vector<std::vector<double>>>();
    Matrix m(static_cast<Eigen::Index>(rows.size()), 6);
    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (rows[r].size() != 6) throw ParseError("norm_stats rows must have 6 entries");
      for (std::size_t c = 0; c < 6; ++c) m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
    }
    return m;
  };
  NormStats s{matrix(j.at("mean")), matrix(j.at("std"))};
  if (s.mean.rows() != s.std.rows()) throw ParseError("norm_stats mean and std differ in size");
  return s;
}

}  // namespace ppgn
