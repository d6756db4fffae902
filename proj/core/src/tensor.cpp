#include "ppgn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "ppgn/diagnostics.hpp"

namespace ppgn {

double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

double uniform(Rng& rng, double low, double high) { return low + (high - low) * uniform01(rng); }

std::size_t uniform_index(Rng& rng, std::size_t n) {
  return static_cast<std::size_t>(uniform01(rng) * static_cast<double>(n)) % n;
}

void shuffle_indices(std::vector<std::size_t>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[uniform_index(rng, i)]);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  // splitmix64 finalizer over seed xor stream
  std::uint64_t z = seed ^ (stream * 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

void require_finite(const Matrix& m, std::string_view what) {
  if (!m.allFinite()) throw NumericError(std::string(what) + ": non-finite entry");
}

namespace {

std::string dims(const Matrix& m) {
  std::ostringstream os;
  os << m.rows() << "x" << m.cols();
  return os.str();
}

}  // namespace

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) throw ShapeError("matmul: " + dims(a) + " * " + dims(b));
  require_finite(a, "matmul lhs");
  require_finite(b, "matmul rhs");
  return a * b;
}

Matrix add(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ShapeError("add: " + dims(a) + " + " + dims(b));
  require_finite(a, "add lhs");
  require_finite(b, "add rhs");
  return a + b;
}

Matrix concat_cols(const Matrix& left, const Matrix& right) {
  if (left.rows() != right.rows())
    throw ShapeError("concat_cols: " + dims(left) + " | " + dims(right));
  Matrix out(left.rows(), left.cols() + right.cols());
  out.leftCols(left.cols()) = left;
  out.rightCols(right.cols()) = right;
  return out;
}

Matrix relu(const Matrix& x) {
  require_finite(x, "relu");
  return x.cwiseMax(0.0);
}

std::size_t argmax(std::span<const double> values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i)
    if (values[i] > values[best]) best = i;
  return best;
}

Vector softmax(std::span<const double> logits) {
  Vector out(static_cast<Eigen::Index>(logits.size()));
  if (logits.empty()) return out;
  const double shift = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[static_cast<Eigen::Index>(i)] = std::exp(logits[i] - shift);
    total += out[static_cast<Eigen::Index>(i)];
  }
  return out / total;
}

SoftmaxXent softmax_xent(std::span<const double> logits, std::size_t target) {
  if (target >= logits.size()) throw ShapeError("softmax_xent: target out of range");
  const double shift = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (double f : logits) total += std::exp(f - shift);
  SoftmaxXent out;
  out.probs = softmax(logits);
  out.loss = -(logits[target] - shift - std::log(total));
  out.grad = out.probs;
  out.grad[static_cast<Eigen::Index>(target)] -= 1.0;
  return out;
}

BatchXent softmax_xent_rows(const Matrix& logits, std::span<const int> targets) {
  if (static_cast<std::size_t>(logits.rows()) != targets.size())
    throw ShapeError("softmax_xent_rows: row/target count mismatch");
  BatchXent out;
  out.probs.resize(logits.rows(), logits.cols());
  out.grad = Matrix::Zero(logits.rows(), logits.cols());
  double total_loss = 0.0;
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const double shift = logits.row(r).maxCoeff();
    auto e = (logits.row(r).array() - shift).exp();
    const double z = e.sum();
    out.probs.row(r) = e / z;
    const int t = targets[static_cast<std::size_t>(r)];
    if (t < 0) continue;
    if (t >= logits.cols()) throw ShapeError("softmax_xent_rows: target out of range");
    total_loss += -(logits(r, t) - shift - std::log(z));
    out.grad.row(r) = out.probs.row(r);
    out.grad(r, t) -= 1.0;
    ++out.counted;
  }
  if (out.counted > 0) {
    out.loss = total_loss / static_cast<double>(out.counted);
    out.grad /= static_cast<double>(out.counted);
  }
  return out;
}

Matrix glorot_uniform(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = uniform(rng, -limit, limit);
  return m;
}

Matrix& ParamStore::add(std::string name, Matrix init) {
  if (contains(name)) throw ConfigError("duplicate parameter " + name);
  Parameter p;
  p.name = std::move(name);
  p.grad = Matrix::Zero(init.rows(), init.cols());
  p.m = Matrix::Zero(init.rows(), init.cols());
  p.v = Matrix::Zero(init.rows(), init.cols());
  p.value = std::move(init);
  params_.push_back(std::move(p));
  return params_.back().value;
}

bool ParamStore::contains(std::string_view name) const {
  return std::any_of(params_.begin(), params_.end(),
                     [&](const Parameter& p) { return p.name == name; });
}

Parameter& ParamStore::at(std::string_view name) {
  for (auto& p : params_)
    if (p.name == name) return p;
  throw ConfigError("unknown parameter " + std::string(name));
}

const Parameter& ParamStore::at(std::string_view name) const {
  for (const auto& p : params_)
    if (p.name == name) return p;
  throw ConfigError("unknown parameter " + std::string(name));
}

std::vector<std::string> ParamStore::names() const {
  std::vector<std::string> out;
  for (const auto& p : params_) out.push_back(p.name);
  return out;
}

void ParamStore::zero_grad() {
  for (auto& p : params_) p.grad.setZero();
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p.value.size());
  return n;
}

double ParamStore::l2_penalty(double lambda) const {
  if (lambda == 0.0) return 0.0;
  double s = 0.0;
  for (const auto& p : params_) s += p.value.squaredNorm();
  return lambda * s;
}

void ParamStore::add_l2_grad(double lambda) {
  if (lambda == 0.0) return;
  for (auto& p : params_) p.grad += (2.0 * lambda) * p.value;
}

void adam_step(ParamStore& store, const AdamConfig& c, std::span<const std::string> only) {
  for (auto& p : store.params()) {
    if (!only.empty() && std::find(only.begin(), only.end(), p.name) == only.end()) continue;
    ++p.steps;
    const double t = static_cast<double>(p.steps);
    const double bc1 = 1.0 - std::pow(c.beta1, t);
    const double bc2 = 1.0 - std::pow(c.beta2, t);
    p.m = c.beta1 * p.m + (1.0 - c.beta1) * p.grad;
    p.v = c.beta2 * p.v + (1.0 - c.beta2) * p.grad.cwiseProduct(p.grad);
    p.value.array() -= c.lr * (p.m.array() / bc1) / ((p.v.array() / bc2).sqrt() + c.eps);
  }
  store.bump_step();
}

GradCheckReport grad_check(ParamStore& store, const LossFn& loss, double h, std::size_t max_coords,
                           std::uint64_t seed, double floor) {
  store.zero_grad();
  loss(store, true);
  std::vector<Matrix> analytic;
  for (const auto& p : store.params()) analytic.push_back(p.grad);

  Rng rng(seed);
  GradCheckReport report;
  for (std::size_t pi = 0; pi < store.params().size(); ++pi) {
    auto& p = store.params()[pi];
    std::vector<std::size_t> coords(static_cast<std::size_t>(p.value.size()));
    std::iota(coords.begin(), coords.end(), 0);
    if (max_coords > 0 && coords.size() > max_coords) {
      shuffle_indices(coords, rng);
      coords.resize(max_coords);
    }
    for (std::size_t idx : coords) {
      double& x = p.value.data()[idx];
      const double saved = x;
      x = saved + h;
      const double up = loss(store, false);
      x = saved - h;
      const double down = loss(store, false);
      x = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[pi].data()[idx];
      const double rel =
          std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
      ++report.coordinates;
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst = p.name + "[" + std::to_string(idx) + "]";
      }
    }
  }
  store.zero_grad();
  return report;
}

}  // namespace ppgn
