#pragma once

#include <Eigen/Dense>

#include <array>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace ppgn {

using Complex = std::complex<double>;
using Block3 = Eigen::Matrix3cd;
using Phasor3 = std::array<Complex, 3>;

inline constexpr const char* kFeederFormat = "ppgn-feeder-v1";

/// Norton admittance tying the slack bus to its source voltage, siemens.
inline constexpr double kSlackShuntSiemens = 1e6;

/// Subset of {a, b, c}; bit k is phase k.
class PhaseSet {
 public:
  constexpr PhaseSet() = default;
  constexpr explicit PhaseSet(std::uint8_t bits) : bits_(bits & 0x7) {}
  static PhaseSet parse(std::string_view letters);
  static constexpr PhaseSet all() { return PhaseSet(0x7); }

  constexpr bool has(int phase) const { return (bits_ >> phase) & 1; }
  constexpr int count() const { return has(0) + has(1) + has(2); }
  constexpr bool empty() const { return bits_ == 0; }
  constexpr std::uint8_t bits() const { return bits_; }
  constexpr PhaseSet operator&(PhaseSet o) const { return PhaseSet(bits_ & o.bits_); }
  constexpr bool operator==(const PhaseSet&) const = default;
  std::string str() const;

 private:
  std::uint8_t bits_ = 0;
};

struct Node {
  int id = 0;
  PhaseSet phases;
};

struct Branch {
  std::size_t from = 0;  // node index
  std::size_t to = 0;
  Block3 y = Block3::Zero();
};

enum class SwitchState { Open, Closed };

struct Switch {
  std::string name;
  std::size_t branch = 0;
  SwitchState state = SwitchState::Closed;
};

struct SwitchChange {
  std::size_t index = 0;  // into FeederData::switches
  SwitchState state = SwitchState::Closed;
};

/// Plain description of a feeder; FeederGraph validates and indexes it.
/// All node references are indices into `nodes`.
struct FeederData {
  std::string name;
  std::vector<Node> nodes;
  std::vector<Branch> branches;
  std::vector<Switch> switches;
  std::vector<std::size_t> observed;
  std::size_t slack = 0;
  Phasor3 slack_voltage{};
  std::vector<Phasor3> loads;  // per node, current drawn per phase (A)
  std::vector<std::pair<std::size_t, std::size_t>> label_merge;
  std::map<std::string, std::vector<SwitchChange>> scenarios;
};

/// Validated, immutable physical feeder.
class FeederGraph {
 public:
  /// Throws ValidationError naming the violated invariant. Connectivity is
  /// only demanded when `require_connected` (files describe normal states).
  explicit FeederGraph(FeederData data, bool require_connected = true);

  const FeederData& data() const { return data_; }
  const std::string& name() const { return data_.name; }
  std::size_t node_count() const { return data_.nodes.size(); }
  const std::vector<Node>& nodes() const { return data_.nodes; }
  const std::vector<Branch>& branches() const { return data_.branches; }
  const std::vector<Switch>& switches() const { return data_.switches; }
  const std::vector<std::size_t>& observed() const { return data_.observed; }
  std::size_t slack() const { return data_.slack; }
  const Phasor3& slack_voltage() const { return data_.slack_voltage; }
  const std::vector<Phasor3>& loads() const { return data_.loads; }
  const std::map<std::string, std::vector<SwitchChange>>& scenarios() const {
    return data_.scenarios;
  }

  std::size_t index_of(int node_id) const;
  int id_of(std::size_t index) const { return data_.nodes.at(index).id; }
  bool is_observed(std::size_t index) const { return observed_mask_.at(index); }

  bool branch_active(std::size_t branch) const { return active_.at(branch); }
  std::vector<std::size_t> active_branches() const;
  std::size_t active_branch_count() const;

  /// Physical neighbours over active branches, ascending.
  const std::vector<std::size_t>& neighbors(std::size_t index) const { return adjacency_.at(index); }

  /// Connected component id per node under the active branch set.
  std::vector<std::size_t> components() const;
  bool connected() const;

  /// Canonical node for labelling after the merge map (smallest index of the
  /// merged group).
  std::size_t canonical(std::size_t index) const { return canonical_.at(index); }

 private:
  void validate(bool require_connected) const;
  void index();

  FeederData data_;
  std::map<int, std::size_t> id_index_;
  std::vector<bool> observed_mask_;
  std::vector<bool> active_;
  std::vector<std::vector<std::size_t>> adjacency_;
  std::vector<std::size_t> canonical_;
};

FeederGraph load_feeder(const std::filesystem::path& path);
FeederGraph parse_feeder(std::string_view text, const std::string& origin = "<memory>");

/// 3n x 3n complex bus admittance, node-major phase-minor. Absent phases keep
/// structurally zero rows/columns.
struct YBus {
  Eigen::MatrixXcd y;
  std::vector<std::string> warnings;
  std::vector<std::size_t> islanded;  // nodes not connected to the slack
};

/// Assembles branch contributions only. The slack source shunt is a solver
/// concern (see kSlackShuntSiemens).
YBus build_ybus(const FeederGraph& g);

enum class DistanceWeight { Hop, Impedance };

/// All-pairs shortest distances; +inf marks disconnected pairs.
struct DistanceTable {
  Eigen::MatrixXd d;
  std::size_t size() const { return static_cast<std::size_t>(d.rows()); }
  double operator()(std::size_t i, std::size_t j) const {
    return d(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  }
};

/// Mean series-impedance magnitude over the branch's phases, ohms.
double branch_impedance_magnitude(const Branch& b);

DistanceTable shortest_paths(const FeederGraph& g, DistanceWeight weight = DistanceWeight::Hop);

FeederGraph apply_switch_states(const FeederGraph& g, const std::vector<SwitchChange>& states);
FeederGraph apply_scenario(const FeederGraph& g, const std::string& scenario);

}  // namespace ppgn
