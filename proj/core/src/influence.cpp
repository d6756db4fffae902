#include "ppgn/influence.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>

#include "ppgn/diagnostics.hpp"

namespace ppgn {
namespace {

void require_stochastic(const Matrix& t) {
  if (t.rows() != t.cols()) throw ShapeError("transition matrix must be square");
  if (!is_row_stochastic(t)) throw ValidationError("transition matrix is not row-stochastic");
}

double walk(const Matrix& t, std::size_t at, std::size_t target, std::size_t left) {
  const auto r = static_cast<Eigen::Index>(at);
  if (left == 0) return at == target ? 1.0 : 0.0;
  double sum = 0.0;
  for (Eigen::Index c = 0; c < t.cols(); ++c)
    if (t(r, c) != 0.0) sum += t(r, c) * walk(t, static_cast<std::size_t>(c), target, left - 1);
  return sum;
}

}  // namespace

bool is_row_stochastic(const Matrix& t, double tol) {
  if (!t.allFinite() || (t.array() < 0.0).any()) return false;
  for (Eigen::Index r = 0; r < t.rows(); ++r)
    if (std::abs(t.row(r).sum() - 1.0) > tol) return false;
  return true;
}

InfluenceMatrix influence_matrix(const Matrix& transition, std::size_t k) {
  require_stochastic(transition);
  InfluenceMatrix out;
  out.k = k;
  out.m = Matrix::Identity(transition.rows(), transition.cols());
  for (std::size_t s = 0; s < k; ++s) out.m = out.m * transition;
  return out;
}

double path_enumeration_oracle(const Matrix& transition, std::size_t i, std::size_t j, std::size_t k) {
  if (transition.rows() > 10 || k > 6) throw ConfigError("path enumeration limited to n <= 10 and K <= 6");
  require_stochastic(transition);
  const auto n = static_cast<std::size_t>(transition.rows());
  if (i >= n || j >= n) throw ShapeError("path enumeration: node index out of range");
  return walk(transition, i, j, k);
}

ObservedInfluence total_observed_influence(const Matrix& transition, std::span<const std::size_t> observed,
                                           std::size_t k) {
  const InfluenceMatrix m = influence_matrix(transition, k);
  ObservedInfluence out;
  out.total.assign(static_cast<std::size_t>(m.m.rows()), 0.0);
  for (std::size_t i = 0; i < out.total.size(); ++i) {
    for (std::size_t j : observed) {
      if (j >= out.total.size()) throw ShapeError("observed node index out of range");
      out.total[i] += m.m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    }
    if (out.total[i] == 0.0) out.invisible.push_back(i);
  }
  return out;
}

double label_influence_ratio(const SparseMatrix& propagation, std::span<const std::size_t> labels, std::size_t p,
                             std::size_t steps) {
  const auto n = static_cast<std::size_t>(propagation.rows());
  if (labels.size() != n || p >= n) throw ShapeError("label_influence_ratio: labels/sample index out of range");
  RowVector r = RowVector::Zero(propagation.rows());
  r(static_cast<Eigen::Index>(p)) = 1.0;
  for (std::size_t s = 0; s < steps; ++s) r = r * propagation;
  double same = 0.0;
  double total = 0.0;
  for (std::size_t q = 0; q < n; ++q) {
    if (q == p) continue;
    const double v = r(static_cast<Eigen::Index>(q));
    total += v;
    if (labels[q] == labels[p]) same += v;
  }
  return total > 0.0 ? same / total : 0.0;
}

double label_influence_ratio(const Matrix& propagation, std::span<const std::size_t> labels, std::size_t p,
                             std::size_t steps) {
  return label_influence_ratio(SparseMatrix(propagation.sparseView()), labels, p, steps);
}

double mean_label_influence_ratio(const SparseMatrix& propagation, std::span<const std::size_t> labels,
                                  std::span<const std::size_t> samples, std::size_t steps) {
  if (samples.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t p : samples) sum += label_influence_ratio(propagation, labels, p, steps);
  return sum / static_cast<double>(samples.size());
}

Matrix linear_surrogate(const Matrix& a, const Matrix& h0, std::size_t k) {
  if (a.cols() != h0.rows()) throw ShapeError("linear_surrogate: A columns differ from rows of H");
  Matrix h = h0;
  for (std::size_t s = 0; s < k; ++s) h = a * h;
  return h;
}

Matrix surrogate_jacobian(const Matrix& a, const Matrix& h0, std::size_t i, std::size_t j, std::size_t k,
                          double step) {
  const Eigen::Index w = h0.cols();
  const auto ri = static_cast<Eigen::Index>(i);
  const auto rj = static_cast<Eigen::Index>(j);
  Matrix jac(w, w);
  for (Eigen::Index c = 0; c < w; ++c) {
    Matrix plus = h0;
    Matrix minus = h0;
    plus(rj, c) += step;
    minus(rj, c) -= step;
    jac.col(c) = ((linear_surrogate(a, plus, k).row(ri) - linear_surrogate(a, minus, k).row(ri)) / (2.0 * step))
                     .transpose();
  }
  return jac;
}

void write_influence_csv(const std::filesystem::path& path, const FeederGraph& g, const ObservedInfluence& inf) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << "node,total_observed_influence,covered\n" << std::setprecision(12);
  for (std::size_t i = 0; i < inf.total.size(); ++i)
    out << g.id_of(i) << ',' << inf.total[i] << ',' << (inf.total[i] > 0.0 ? "yes" : "no") << '\n';
}

}  // namespace ppgn
