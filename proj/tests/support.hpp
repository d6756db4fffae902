#pragma once

#include <unistd.h>

#include <complex>
#include <filesystem>
#include <numbers>
#include <string>
#include <vector>

#include "ppgn/diagnostics.hpp"
#include "ppgn/feeder.hpp"
#include "ppgn/tensor.hpp"

namespace ppgn::testing {

inline std::filesystem::path data_path(const std::string& rel) { return std::filesystem::path(PPGN_DATA_DIR) / rel; }

inline Phasor3 balanced(double magnitude = 1.0) {
  const double step = 2.0 * std::numbers::pi / 3.0;
  return {std::polar(magnitude, 0.0), std::polar(magnitude, -step), std::polar(magnitude, step)};
}

/// Feeder over ids 1..n with the given edges (1-based ids), 10 S per phase on
/// every branch, node 1 as slack and zero loads.
inline FeederData toy_feeder(std::size_t n, const std::vector<std::pair<int, int>>& edges,
                             std::vector<std::size_t> observed = {}, double siemens = 10.0) {
  FeederData d;
  d.name = "toy";
  for (std::size_t i = 0; i < n; ++i) d.nodes.push_back({static_cast<int>(i + 1), PhaseSet::all()});
  for (auto [a, b] : edges)
    d.branches.push_back({static_cast<std::size_t>(a - 1), static_cast<std::size_t>(b - 1), Block3::Identity() * siemens});
  d.observed = std::move(observed);
  d.slack = 0;
  d.slack_voltage = balanced();
  d.loads.assign(n, Phasor3{});
  return d;
}

inline std::vector<std::pair<int, int>> path_edges(int n) {
  std::vector<std::pair<int, int>> e;
  for (int i = 1; i < n; ++i) e.emplace_back(i, i + 1);
  return e;
}

struct ToySet {
  std::vector<Matrix> features;  // n x 6 each
  std::vector<std::size_t> labels;
};

/// Separable toy samples: class c carries a bump on row c plus small noise.
inline ToySet toy_samples(std::size_t n, std::size_t per_class, Rng& rng, double noise = 0.1) {
  ToySet t;
  for (std::size_t c = 0; c < n; ++c)
    for (std::size_t r = 0; r < per_class; ++r) {
      Matrix x(static_cast<Eigen::Index>(n), 6);
      for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = uniform(rng, -noise, noise);
      x.row(static_cast<Eigen::Index>(c)).array() += 1.0;
      t.features.push_back(std::move(x));
      t.labels.push_back(c);
    }
  return t;
}

inline std::vector<std::size_t> iota_indices(std::size_t n) {
  std::vector<std::size_t> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = i;
  return v;
}

/// Collects warnings for the lifetime of the object.
class WarningCapture {
 public:
  WarningCapture() {
    previous_ = set_warning_sink([this](const std::string& m) { messages.push_back(m); });
  }
  ~WarningCapture() { set_warning_sink(previous_); }
  WarningCapture(const WarningCapture&) = delete;
  WarningCapture& operator=(const WarningCapture&) = delete;

  bool any_contains(const std::string& needle) const {
    for (const auto& m : messages)
      if (m.find(needle) != std::string::npos) return true;
    return false;
  }

  std::vector<std::string> messages;

 private:
  WarningSink previous_;
};

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() / ("ppgn-" + tag + "-" + std::to_string(::getpid()));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() { std::filesystem::remove_all(path_); }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace ppgn::testing
