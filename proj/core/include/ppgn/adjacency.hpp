#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "ppgn/feeder.hpp"
#include "ppgn/tensor.hpp"

namespace ppgn {

inline constexpr std::size_t kDefaultNeighbors = 3;

/// Stage I learning graph: Gaussian kernel over shortest-path distances to the
/// k nearest neighbours, max-symmetrized, then row-normalized.
struct AdjacencyA {
  Matrix a;                                         // symmetric, zero diagonal
  Matrix a_tilde;                                   // rows sum to 1 over support
  std::size_t k = 0;
  std::vector<std::vector<std::size_t>> knn;        // before symmetrization
  std::vector<std::vector<std::size_t>> support;    // after symmetrization (N_i)
  std::vector<double> sigma;                        // per-node bandwidth

  std::size_t size() const { return static_cast<std::size_t>(a.rows()); }
  /// Aggregation operator P with P_ij = a_tilde_ij / |N_i|.
  Matrix aggregation() const;
};

/// k nearest neighbours of every node (self excluded), ties to the lower id.
std::vector<std::vector<std::size_t>> nearest_neighbors(const DistanceTable& d, std::size_t k);

/// Kernel weights before symmetrization; fills `sigma` when non-null.
Matrix kernel_weights(const DistanceTable& d, std::size_t k, std::vector<double>* sigma = nullptr);

Matrix symmetrize_max(const Matrix& a);
Matrix row_normalize(const Matrix& a);

AdjacencyA build_A(const DistanceTable& d, std::size_t k = kDefaultNeighbors);

/// 0/1 adjacency of the active physical branches.
Matrix physical_adjacency(const FeederGraph& g);

struct CoverageReport {
  std::vector<bool> covered;                    // reaches an observed node within K steps
  std::vector<std::size_t> hops;                // steps to the nearest observed node (SIZE_MAX if none)
  bool pass = false;
  std::optional<std::size_t> minimum_k;         // smallest k_I that passes (when distances known)
};

/// Breadth-first reachability over the support (nonzeros) of `weights`.
CoverageReport coverage_check(const Matrix& weights, std::span<const std::size_t> observed, std::size_t layers);
CoverageReport coverage_check(const AdjacencyA& a, std::span<const std::size_t> observed, std::size_t layers);

/// Smallest k_I whose constructed A passes coverage_check at `layers`.
std::optional<std::size_t> minimum_covering_k(const DistanceTable& d, std::span<const std::size_t> observed,
                                              std::size_t layers);

/// Builds A for `k` and reports coverage; warns (does not throw) on failure.
CoverageReport coverage_check(const DistanceTable& d, std::size_t k, std::span<const std::size_t> observed,
                              std::size_t layers);

/// Debug dump: one CSV row per matrix row.
void write_matrix_csv(const std::filesystem::path& path, const Matrix& m);

}  // namespace ppgn
