#include "ppgn/feeder.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <numeric>
#include <queue>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "ppgn/diagnostics.hpp"

namespace ppgn {

PhaseSet PhaseSet::parse(std::string_view letters) {
  std::uint8_t bits = 0;
  for (char c : letters) {
    if (c < 'a' || c > 'c') throw ParseError("bad phase letter '" + std::string(1, c) + "'");
    bits |= static_cast<std::uint8_t>(1u << (c - 'a'));
  }
  return PhaseSet(bits);
}

std::string PhaseSet::str() const {
  std::string s;
  for (int p = 0; p < 3; ++p)
    if (has(p)) s.push_back(static_cast<char>('a' + p));
  return s;
}

FeederGraph::FeederGraph(FeederData data, bool require_connected) : data_(std::move(data)) {
  // Exact reciprocity: (y + y^T) / 2 is bitwise symmetric.
  for (auto& b : data_.branches) {
    const Block3 yt = b.y.transpose();
    b.y = (b.y + yt) * 0.5;
  }
  index();
  validate(require_connected);
}

void FeederGraph::index() {
  const std::size_t n = data_.nodes.size();
  id_index_.clear();
  for (std::size_t i = 0; i < n; ++i) {
    if (!id_index_.emplace(data_.nodes[i].id, i).second)
      throw ValidationError("duplicate node id " + std::to_string(data_.nodes[i].id));
  }
  observed_mask_.assign(n, false);
  for (std::size_t o : data_.observed) {
    if (o >= n) throw ValidationError("observed node index " + std::to_string(o) + " does not exist");
    observed_mask_[o] = true;
  }
  std::sort(data_.observed.begin(), data_.observed.end());
  data_.observed.erase(std::unique(data_.observed.begin(), data_.observed.end()), data_.observed.end());

  active_.assign(data_.branches.size(), true);
  for (const auto& s : data_.switches) {
    if (s.branch >= data_.branches.size())
      throw ValidationError("switch " + s.name + " references missing branch " + std::to_string(s.branch));
    if (s.state == SwitchState::Open) active_[s.branch] = false;
  }
  adjacency_.assign(n, {});
  for (std::size_t k = 0; k < data_.branches.size(); ++k) {
    const auto& b = data_.branches[k];
    if (b.from >= n || b.to >= n) throw ValidationError("branch " + std::to_string(k) + " endpoint out of range");
    if (!active_[k]) continue;
    adjacency_[b.from].push_back(b.to);
    adjacency_[b.to].push_back(b.from);
  }
  for (auto& adj : adjacency_) {
    std::sort(adj.begin(), adj.end());
    adj.erase(std::unique(adj.begin(), adj.end()), adj.end());
  }

  // Union-find over the merge pairs; the smallest index represents the group.
  canonical_.resize(n);
  std::iota(canonical_.begin(), canonical_.end(), std::size_t{0});
  auto find = [&](std::size_t x) {
    while (canonical_[x] != x) x = canonical_[x] = canonical_[canonical_[x]];
    return x;
  };
  for (auto [a, b] : data_.label_merge) {
    if (a >= n || b >= n) throw ValidationError("label_merge references a missing node");
    const std::size_t ra = find(a), rb = find(b);
    if (ra != rb) canonical_[std::max(ra, rb)] = std::min(ra, rb);
  }
  for (std::size_t i = 0; i < n; ++i) canonical_[i] = find(i);
}

void FeederGraph::validate(bool require_connected) const {
  const std::size_t n = data_.nodes.size();
  if (n == 0) throw ValidationError("feeder has no nodes");
  for (const auto& node : data_.nodes)
    if (node.phases.empty()) throw ValidationError("node " + std::to_string(node.id) + " has no phases");
  if (data_.slack >= n) throw ValidationError("slack node does not exist");
  if (data_.loads.size() != n) throw ValidationError("load table size differs from node count");

  for (std::size_t k = 0; k < data_.branches.size(); ++k) {
    const auto& b = data_.branches[k];
    const std::string where = "branch " + std::to_string(k);
    if (b.from == b.to) throw ValidationError(where + " is a self-loop");
    if (!b.y.allFinite()) throw ValidationError(where + " has non-finite admittance");
    const PhaseSet shared = data_.nodes[b.from].phases & data_.nodes[b.to].phases;
    for (int p = 0; p < 3; ++p) {
      if (shared.has(p)) continue;
      for (int q = 0; q < 3; ++q) {
        if (b.y(p, q) != Complex{} || b.y(q, p) != Complex{})
          throw ValidationError(where + " couples phase " + std::string(1, static_cast<char>('a' + p)) +
                                " absent at an endpoint");
      }
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (int p = 0; p < 3; ++p) {
      if (!data_.nodes[i].phases.has(p) && data_.loads[i][static_cast<std::size_t>(p)] != Complex{})
        throw ValidationError("load on absent phase at node " + std::to_string(data_.nodes[i].id));
      if (!std::isfinite(data_.loads[i][static_cast<std::size_t>(p)].real()) ||
          !std::isfinite(data_.loads[i][static_cast<std::size_t>(p)].imag()))
        throw ValidationError("non-finite load at node " + std::to_string(data_.nodes[i].id));
    }
  }
  for (const auto& [name, changes] : data_.scenarios)
    for (const auto& c : changes)
      if (c.index >= data_.switches.size())
        throw ValidationError("scenario " + name + " references unknown switch " + std::to_string(c.index));
  if (require_connected && !connected())
    throw ValidationError("feeder is not connected with its normal switch states");
}

std::size_t FeederGraph::index_of(int node_id) const {
  auto it = id_index_.find(node_id);
  if (it == id_index_.end()) throw ValidationError("unknown node id " + std::to_string(node_id));
  return it->second;
}

std::vector<std::size_t> FeederGraph::active_branches() const {
  std::vector<std::size_t> out;
  for (std::size_t k = 0; k < active_.size(); ++k)
    if (active_[k]) out.push_back(k);
  return out;
}

std::size_t FeederGraph::active_branch_count() const {
  return static_cast<std::size_t>(std::count(active_.begin(), active_.end(), true));
}

std::vector<std::size_t> FeederGraph::components() const {
  const std::size_t n = node_count();
  constexpr auto unset = std::numeric_limits<std::size_t>::max();
  std::vector<std::size_t> comp(n, unset);
  std::size_t next = 0;
  for (std::size_t s = 0; s < n; ++s) {
    if (comp[s] != unset) continue;
    std::vector<std::size_t> stack{s};
    comp[s] = next;
    while (!stack.empty()) {
      const std::size_t u = stack.back();
      stack.pop_back();
      for (std::size_t v : adjacency_[u])
        if (comp[v] == unset) {
          comp[v] = next;
          stack.push_back(v);
        }
    }
    ++next;
  }
  return comp;
}

bool FeederGraph::connected() const {
  const auto comp = components();
  return std::all_of(comp.begin(), comp.end(), [](std::size_t c) { return c == 0; });
}

namespace {

Complex complex_from(const nlohmann::json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number())
    throw ParseError(where + ": expected [re, im]");
  return {j[0].get<double>(), j[1].get<double>()};
}

Phasor3 phasor_from(const nlohmann::json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 3) throw ParseError(where + ": expected 3 complex values");
  Phasor3 out;
  for (std::size_t p = 0; p < 3; ++p) out[p] = complex_from(j[p], where + "[" + std::to_string(p) + "]");
  return out;
}

SwitchState state_from(const nlohmann::json& j, const std::string& where) {
  const auto s = j.get<std::string>();
  if (s == "open") return SwitchState::Open;
  if (s == "closed") return SwitchState::Closed;
  throw ParseError(where + ": state must be \"open\" or \"closed\"");
}

template <class F>
auto field(const std::string& where, F&& f) {
  try {
    return f();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(where + ": " + e.what());
  }
}

}  // namespace

FeederGraph parse_feeder(std::string_view text, const std::string& origin) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(origin + ": " + e.what());
  }
  if (!j.is_object()) throw ParseError(origin + ": top level must be an object");
  if (j.value("format", std::string{}) != kFeederFormat)
    throw ParseError(origin + ": field format must be \"" + std::string(kFeederFormat) + "\"");
  for (const char* key : {"nodes", "branches", "observed", "slack", "loads"})
    if (!j.contains(key)) throw ParseError(origin + ": missing field " + key);

  FeederData d;
  d.name = j.value("name", origin);
  std::map<int, std::size_t> ids;
  for (std::size_t i = 0; i < j["nodes"].size(); ++i) {
    const std::string where = origin + ": nodes[" + std::to_string(i) + "]";
    const auto& nj = j["nodes"][i];
    Node node;
    node.id = field(where + ".id", [&] { return nj.at("id").get<int>(); });
    node.phases = PhaseSet::parse(field(where + ".phases", [&] { return nj.at("phases").get<std::string>(); }));
    if (!ids.emplace(node.id, i).second) throw ValidationError(where + ": duplicate node id " + std::to_string(node.id));
    d.nodes.push_back(node);
  }
  auto node_ref = [&](int id, const std::string& where) {
    auto it = ids.find(id);
    if (it == ids.end()) throw ValidationError(where + ": node id " + std::to_string(id) + " does not exist");
    return it->second;
  };

  for (std::size_t k = 0; k < j["branches"].size(); ++k) {
    const std::string where = origin + ": branches[" + std::to_string(k) + "]";
    const auto& bj = j["branches"][k];
    Branch b;
    b.from = node_ref(field(where + ".from", [&] { return bj.at("from").get<int>(); }), where);
    b.to = node_ref(field(where + ".to", [&] { return bj.at("to").get<int>(); }), where);
    const auto& yj = field(where + ".y", [&]() -> const nlohmann::json& { return bj.at("y"); });
    if (!yj.is_array() || yj.size() != 3) throw ParseError(where + ".y: expected 3x3 array");
    for (int r = 0; r < 3; ++r) {
      if (!yj[static_cast<std::size_t>(r)].is_array() || yj[static_cast<std::size_t>(r)].size() != 3)
        throw ParseError(where + ".y: expected 3x3 array");
      for (int c = 0; c < 3; ++c)
        b.y(r, c) = complex_from(yj[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)],
                                 where + ".y[" + std::to_string(r) + "][" + std::to_string(c) + "]");
    }
    d.branches.push_back(b);
  }

  if (j.contains("switches")) {
    for (std::size_t k = 0; k < j["switches"].size(); ++k) {
      const std::string where = origin + ": switches[" + std::to_string(k) + "]";
      const auto& sj = j["switches"][k];
      Switch s;
      s.name = sj.value("name", "S" + std::to_string(k + 1));
      s.branch = field(where + ".branch", [&] { return sj.at("branch").get<std::size_t>(); });
      s.state = state_from(field(where + ".state", [&] { return sj.at("state"); }), where);
      d.switches.push_back(s);
    }
  }

  for (const auto& oj : j["observed"])
    d.observed.push_back(node_ref(field(origin + ": observed", [&] { return oj.get<int>(); }), origin + ": observed"));

  d.slack = node_ref(field(origin + ": slack", [&] { return j["slack"].get<int>(); }), origin + ": slack");
  if (j.contains("slack_voltage")) {
    d.slack_voltage = phasor_from(j["slack_voltage"], origin + ": slack_voltage");
  } else {
    const double two_pi_3 = 2.0 * 3.14159265358979323846 / 3.0;
    d.slack_voltage = {std::polar(1.0, 0.0), std::polar(1.0, -two_pi_3), std::polar(1.0, two_pi_3)};
  }

  d.loads.assign(d.nodes.size(), Phasor3{});
  for (std::size_t k = 0; k < j["loads"].size(); ++k) {
    const std::string where = origin + ": loads[" + std::to_string(k) + "]";
    const auto& lj = j["loads"][k];
    const std::size_t node = node_ref(field(where + ".node", [&] { return lj.at("node").get<int>(); }), where);
    const Phasor3 cur = phasor_from(field(where + ".current", [&] { return lj.at("current"); }), where + ".current");
    for (std::size_t p = 0; p < 3; ++p) d.loads[node][p] += cur[p];
  }

  if (j.contains("label_merge")) {
    for (const auto& pj : j["label_merge"]) {
      if (!pj.is_array() || pj.size() != 2) throw ParseError(origin + ": label_merge entries are [id, id] pairs");
      d.label_merge.emplace_back(node_ref(pj[0].get<int>(), origin + ": label_merge"),
                                 node_ref(pj[1].get<int>(), origin + ": label_merge"));
    }
  }
  if (j.contains("scenarios")) {
    for (const auto& [name, list] : j["scenarios"].items()) {
      std::vector<SwitchChange> changes;
      for (const auto& cj : list) {
        const std::string where = origin + ": scenarios." + name;
        changes.push_back({field(where, [&] { return cj.at("switch").get<std::size_t>(); }),
                           state_from(field(where, [&] { return cj.at("state"); }), where)});
      }
      d.scenarios.emplace(name, std::move(changes));
    }
  }
  return FeederGraph(std::move(d));
}

FeederGraph load_feeder(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open feeder file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_feeder(ss.str(), path.string());
}

YBus build_ybus(const FeederGraph& g) {
  const auto n = static_cast<Eigen::Index>(g.node_count());
  YBus out;
  out.y = Eigen::MatrixXcd::Zero(3 * n, 3 * n);
  for (std::size_t k : g.active_branches()) {
    const auto& b = g.branches()[k];
    const auto i = static_cast<Eigen::Index>(b.from), j = static_cast<Eigen::Index>(b.to);
    out.y.block<3, 3>(3 * i, 3 * i) += b.y;
    out.y.block<3, 3>(3 * j, 3 * j) += b.y;
    out.y.block<3, 3>(3 * i, 3 * j) -= b.y;
    out.y.block<3, 3>(3 * j, 3 * i) -= b.y;
  }
  const auto comp = g.components();
  const std::size_t slack_comp = comp[g.slack()];
  for (std::size_t i = 0; i < g.node_count(); ++i)
    if (comp[i] != slack_comp) out.islanded.push_back(i);
  if (!out.islanded.empty()) {
    std::string ids;
    for (std::size_t i : out.islanded) ids += (ids.empty() ? "" : ",") + std::to_string(g.id_of(i));
    out.warnings.push_back("island without slack: nodes " + ids + " (system is singular)");
    warn(out.warnings.back());
  }
  return out;
}

double branch_impedance_magnitude(const Branch& b) {
  std::vector<int> present;
  for (int p = 0; p < 3; ++p)
    if (b.y.row(p).norm() > 0.0) present.push_back(p);
  if (present.empty()) return std::numeric_limits<double>::infinity();
  const auto m = static_cast<Eigen::Index>(present.size());
  Eigen::MatrixXcd sub(m, m);
  for (Eigen::Index r = 0; r < m; ++r)
    for (Eigen::Index c = 0; c < m; ++c) sub(r, c) = b.y(present[static_cast<std::size_t>(r)], present[static_cast<std::size_t>(c)]);
  const Eigen::MatrixXcd z = sub.inverse();
  double total = 0.0;
  for (Eigen::Index r = 0; r < m; ++r) total += std::abs(z(r, r));
  return total / static_cast<double>(m);
}

DistanceTable shortest_paths(const FeederGraph& g, DistanceWeight weight) {
  const std::size_t n = g.node_count();
  constexpr double inf = std::numeric_limits<double>::infinity();

  // Parallel branches between the same pair keep the lighter edge.
  std::vector<std::vector<std::pair<std::size_t, double>>> adj(n);
  for (std::size_t k : g.active_branches()) {
    const auto& b = g.branches()[k];
    const double w = weight == DistanceWeight::Hop ? 1.0 : branch_impedance_magnitude(b);
    adj[b.from].emplace_back(b.to, w);
    adj[b.to].emplace_back(b.from, w);
  }

  DistanceTable table;
  table.d = Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n), inf);
  using Item = std::pair<double, std::size_t>;
  for (std::size_t s = 0; s < n; ++s) {
    std::vector<double> dist(n, inf);
    dist[s] = 0.0;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
    pq.emplace(0.0, s);
    while (!pq.empty()) {
      auto [du, u] = pq.top();
      pq.pop();
      if (du > dist[u]) continue;
      for (auto [v, w] : adj[u]) {
        if (du + w < dist[v]) {
          dist[v] = du + w;
          pq.emplace(dist[v], v);
        }
      }
    }
    for (std::size_t t = 0; t < n; ++t) table.d(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(t)) = dist[t];
  }
  // Dijkstra sums in path order, so d(s,t) and d(t,s) can differ in the last
  // ulp for impedance weights; keep the smaller to make the table symmetric.
  for (Eigen::Index i = 0; i < table.d.rows(); ++i)
    for (Eigen::Index j = i + 1; j < table.d.cols(); ++j) {
      const double m = std::min(table.d(i, j), table.d(j, i));
      table.d(i, j) = table.d(j, i) = m;
    }
  return table;
}

FeederGraph apply_switch_states(const FeederGraph& g, const std::vector<SwitchChange>& states) {
  FeederData d = g.data();
  for (const auto& s : states) {
    if (s.index >= d.switches.size())
      throw ValidationError("unknown switch index " + std::to_string(s.index));
    d.switches[s.index].state = s.state;
  }
  return FeederGraph(std::move(d), false);
}

FeederGraph apply_scenario(const FeederGraph& g, const std::string& scenario) {
  if (scenario.empty() || scenario == "base") return g;
  auto it = g.scenarios().find(scenario);
  if (it == g.scenarios().end()) throw ConfigError("unknown switch scenario " + scenario);
  return apply_switch_states(g, it->second);
}

}  // namespace ppgn
