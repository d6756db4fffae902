#pragma once

#include <span>
#include <vector>

#include "ppgn/feeder.hpp"

namespace ppgn {

struct ClassCounts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t tn = 0;
  std::size_t fn = 0;
  std::size_t tp_hop = 0;  // truth i, prediction i or adjacent to i
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

struct MetricsReport {
  std::vector<ClassCounts> classes;   // indexed by class
  std::vector<std::size_t> present;   // classes occurring in the truth
  std::size_t total = 0;
  double f1 = 0.0;                    // macro over present classes
  double lar = 0.0;                   // sum TP / N
  double lar1hop = 0.0;               // sum TP' / N
  double lar_classwise = 0.0;         // mean over present classes of TP_i / (TP+FP+TN+FN)
};

/// `adjacency[i]` lists the classes counted as one hop from class i.
MetricsReport compute_metrics(std::span<const std::size_t> truth, std::span<const std::size_t> predicted,
                              const std::vector<std::vector<std::size_t>>& adjacency);

/// Class adjacency from the active branches after the label-merge map.
std::vector<std::vector<std::size_t>> label_adjacency(const FeederGraph& g);

MetricsReport compute_metrics(std::span<const std::size_t> truth, std::span<const std::size_t> predicted,
                              const FeederGraph& g);

}  // namespace ppgn
