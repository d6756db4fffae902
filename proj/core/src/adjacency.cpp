#include "ppgn/adjacency.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>

#include "ppgn/diagnostics.hpp"

namespace ppgn {

std::vector<std::vector<std::size_t>> nearest_neighbors(const DistanceTable& d, std::size_t k) {
  if (k == 0) throw ConfigError("k_I must be at least 1");
  const std::size_t n = d.size();
  std::vector<std::vector<std::size_t>> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<std::size_t> cand;
    for (std::size_t j = 0; j < n; ++j)
      if (j != i && std::isfinite(d(i, j))) cand.push_back(j);
    if (cand.size() < k)
      throw ValidationError("node index " + std::to_string(i) + " has " + std::to_string(cand.size()) +
                            " reachable neighbours, fewer than k_I=" + std::to_string(k));
    std::stable_sort(cand.begin(), cand.end(), [&](std::size_t x, std::size_t y) { return d(i, x) < d(i, y); });
    cand.resize(k);
    std::sort(cand.begin(), cand.end());
    out[i] = std::move(cand);
  }
  return out;
}

Matrix kernel_weights(const DistanceTable& d, std::size_t k, std::vector<double>* sigma) {
  const auto knn = nearest_neighbors(d, k);
  const std::size_t n = d.size();
  Matrix a = Matrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  if (sigma) sigma->assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double delta = 0.0;
    for (std::size_t j : knn[i]) delta += d(i, j);
    delta /= static_cast<double>(k);
    if (!(delta > 0.0)) throw ValidationError("zero kernel bandwidth at node index " + std::to_string(i));
    if (sigma) (*sigma)[i] = delta;
    for (std::size_t j : knn[i]) {
      const double r = d(i, j) / delta;
      a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = std::exp(-r * r);
    }
  }
  return a;
}

Matrix symmetrize_max(const Matrix& a) { return a.cwiseMax(a.transpose()); }

Matrix row_normalize(const Matrix& a) {
  Matrix out = a;
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    const double s = a.row(i).sum();
    if (!(s > 0.0)) throw ValidationError("row " + std::to_string(i) + " has no support (isolated node)");
    out.row(i) /= s;
  }
  return out;
}

AdjacencyA build_A(const DistanceTable& d, std::size_t k) {
  AdjacencyA out;
  out.k = k;
  out.knn = nearest_neighbors(d, k);
  out.a = symmetrize_max(kernel_weights(d, k, &out.sigma));
  out.a.diagonal().setZero();
  out.a_tilde = row_normalize(out.a);
  out.support.resize(d.size());
  for (std::size_t i = 0; i < d.size(); ++i)
    for (std::size_t j = 0; j < d.size(); ++j)
      if (out.a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) > 0.0) out.support[i].push_back(j);
  return out;
}

Matrix AdjacencyA::aggregation() const {
  Matrix p = a_tilde;
  for (Eigen::Index i = 0; i < p.rows(); ++i) p.row(i) /= static_cast<double>(support[static_cast<std::size_t>(i)].size());
  return p;
}

Matrix physical_adjacency(const FeederGraph& g) {
  const auto n = static_cast<Eigen::Index>(g.node_count());
  Matrix a = Matrix::Zero(n, n);
  for (std::size_t i = 0; i < g.node_count(); ++i)
    for (std::size_t j : g.neighbors(i)) a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = 1.0;
  return a;
}

CoverageReport coverage_check(const Matrix& weights, std::span<const std::size_t> observed, std::size_t layers) {
  const std::size_t n = static_cast<std::size_t>(weights.rows());
  constexpr auto far = std::numeric_limits<std::size_t>::max();
  CoverageReport rep;
  rep.hops.assign(n, far);
  // Multi-source BFS from observed nodes along reversed edges: i is covered
  // when some walk i -> ... -> j in Omega of length <= K exists.
  std::deque<std::size_t> queue;
  for (std::size_t o : observed) {
    if (o >= n) throw ValidationError("observed index out of range");
    if (rep.hops[o] == 0) continue;
    rep.hops[o] = 0;
    queue.push_back(o);
  }
  while (!queue.empty()) {
    const std::size_t j = queue.front();
    queue.pop_front();
    for (std::size_t i = 0; i < n; ++i) {
      if (rep.hops[i] != far || weights(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) == 0.0) continue;
      rep.hops[i] = rep.hops[j] + 1;
      queue.push_back(i);
    }
  }
  rep.covered.resize(n);
  for (std::size_t i = 0; i < n; ++i) rep.covered[i] = rep.hops[i] <= layers;
  rep.pass = std::all_of(rep.covered.begin(), rep.covered.end(), [](bool b) { return b; });
  return rep;
}

CoverageReport coverage_check(const AdjacencyA& a, std::span<const std::size_t> observed, std::size_t layers) {
  return coverage_check(a.a, observed, layers);
}

std::optional<std::size_t> minimum_covering_k(const DistanceTable& d, std::span<const std::size_t> observed,
                                              std::size_t layers) {
  const std::size_t n = d.size();
  for (std::size_t k = 1; k < n; ++k) {
    try {
      if (coverage_check(build_A(d, k), observed, layers).pass) return k;
    } catch (const ValidationError&) {
      return std::nullopt;
    }
  }
  return std::nullopt;
}

CoverageReport coverage_check(const DistanceTable& d, std::size_t k, std::span<const std::size_t> observed,
                              std::size_t layers) {
  CoverageReport rep = coverage_check(build_A(d, k), observed, layers);
  rep.minimum_k = minimum_covering_k(d, observed, layers);
  if (!rep.pass) {
    std::size_t missing = static_cast<std::size_t>(std::count(rep.covered.begin(), rep.covered.end(), false));
    warn("k_I=" + std::to_string(k) + " leaves " + std::to_string(missing) + " node(s) without an observed node within " +
         std::to_string(layers) + " layer(s)");
  }
  return rep;
}

void write_matrix_csv(const std::filesystem::path& path, const Matrix& m) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << std::setprecision(17);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) out << (j ? "," : "") << m(i, j);
    out << '\n';
  }
}

}  // namespace ppgn
