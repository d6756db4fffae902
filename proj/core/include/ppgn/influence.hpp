#pragma once

// Random-walk view of neighbourhood aggregation: K-step reach probabilities,
// observed-node influence, and label agreement along walks in the sample graph.

#include <filesystem>
#include <span>
#include <vector>

#include "ppgn/feeder.hpp"
#include "ppgn/stage2.hpp"
#include "ppgn/tensor.hpp"

namespace ppgn {

bool is_row_stochastic(const Matrix& t, double tol = 1e-10);

struct InfluenceMatrix {
  std::size_t k = 0;
  Matrix m;  // m(i, j) = Pr(walk from i is at j after k steps)
};

/// transition^K; throws ValidationError unless `transition` is row-stochastic.
InfluenceMatrix influence_matrix(const Matrix& transition, std::size_t k);

/// Explicit sum over every length-K walk i -> j of the product of its edge
/// weights. Limited to n <= 10, K <= 6.
double path_enumeration_oracle(const Matrix& transition, std::size_t i, std::size_t j, std::size_t k);

struct ObservedInfluence {
  std::vector<double> total;          // sum over observed j of M_ij
  std::vector<std::size_t> invisible; // nodes with zero total
};

ObservedInfluence total_observed_influence(const Matrix& transition, std::span<const std::size_t> observed,
                                           std::size_t k);

/// Share of the L-step walk mass from sample p that lands on samples with
/// p's label, self excluded. Returns 0 when p reaches no other sample.
double label_influence_ratio(const SparseMatrix& propagation, std::span<const std::size_t> labels, std::size_t p,
                             std::size_t steps);
double label_influence_ratio(const Matrix& propagation, std::span<const std::size_t> labels, std::size_t p,
                             std::size_t steps);
double mean_label_influence_ratio(const SparseMatrix& propagation, std::span<const std::size_t> labels,
                                  std::span<const std::size_t> samples, std::size_t steps);

/// Aggregation-only linear update h^k = A h^(k-1), applied K times.
Matrix linear_surrogate(const Matrix& a, const Matrix& h0, std::size_t k);

/// Central-difference Jacobian d h_i^K / d h_j^0 of linear_surrogate (width x width).
Matrix surrogate_jacobian(const Matrix& a, const Matrix& h0, std::size_t i, std::size_t j, std::size_t k,
                          double step = 1e-6);

/// CSV rows: node, total_observed_influence, covered (yes/no).
void write_influence_csv(const std::filesystem::path& path, const FeederGraph& g, const ObservedInfluence& inf);

}  // namespace ppgn
