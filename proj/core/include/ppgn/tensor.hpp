#pragma once

// Dense compute layer shared by every learning module: matrix helpers with
// shape/finiteness checks, softmax cross-entropy, a named parameter store with
// Adam, and a central-difference gradient checker.

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace ppgn {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;
using Rng = std::mt19937_64;

// Portable draws (the std distributions are implementation-defined).
double uniform01(Rng& rng);
double uniform(Rng& rng, double low, double high);
std::size_t uniform_index(Rng& rng, std::size_t n);
void shuffle_indices(std::vector<std::size_t>& v, Rng& rng);
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

void require_finite(const Matrix& m, std::string_view what);

Matrix matmul(const Matrix& a, const Matrix& b);
Matrix add(const Matrix& a, const Matrix& b);
Matrix concat_cols(const Matrix& left, const Matrix& right);
Matrix relu(const Matrix& x);

/// Index of the largest entry; the lowest index wins ties.
std::size_t argmax(std::span<const double> values);

Vector softmax(std::span<const double> logits);

struct SoftmaxXent {
  double loss = 0.0;
  Vector probs;
  Vector grad;  // d loss / d logits = probs - onehot(target)
};

SoftmaxXent softmax_xent(std::span<const double> logits, std::size_t target);

struct BatchXent {
  double loss = 0.0;  // mean over rows with a target
  Matrix probs;
  Matrix grad;        // already divided by the number of targeted rows
  std::size_t counted = 0;
};

/// Row-wise softmax cross-entropy. A negative target marks a row that takes
/// part in the forward pass but contributes no loss (transductive rows).
BatchXent softmax_xent_rows(const Matrix& logits, std::span<const int> targets);

/// Uniform in +-sqrt(6 / (fan_in + fan_out)).
Matrix glorot_uniform(Eigen::Index rows, Eigen::Index cols, Rng& rng);

struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;
  Matrix m;
  Matrix v;
  std::int64_t steps = 0;
};

class ParamStore {
 public:
  Matrix& add(std::string name, Matrix init);

  bool contains(std::string_view name) const;
  Parameter& at(std::string_view name);
  const Parameter& at(std::string_view name) const;
  Matrix& value(std::string_view name) { return at(name).value; }
  const Matrix& value(std::string_view name) const { return at(name).value; }
  Matrix& grad(std::string_view name) { return at(name).grad; }

  std::vector<Parameter>& params() { return params_; }
  const std::vector<Parameter>& params() const { return params_; }
  std::vector<std::string> names() const;

  void zero_grad();
  std::size_t scalar_count() const;

  /// lambda * sum of squared entries over all parameters.
  double l2_penalty(double lambda) const;
  /// grad += 2 * lambda * value for all parameters.
  void add_l2_grad(double lambda);

  std::int64_t step() const { return step_; }
  void set_step(std::int64_t t) { step_ = t; }
  void bump_step() { ++step_; }

 private:
  std::vector<Parameter> params_;
  std::int64_t step_ = 0;
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// One Adam update with bias correction. When `only` is non-empty, parameters
/// whose names are not listed keep their values and moments bit-identical.
/// Bias correction uses each parameter's own update count.
void adam_step(ParamStore& store, const AdamConfig& config,
               std::span<const std::string> only = {});

/// Loss evaluator for grad_check. With want_grad set it must leave the
/// analytic gradient in store grads (zeroing them first is the caller's job).
using LossFn = std::function<double(ParamStore&, bool want_grad)>;

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t coordinates = 0;
  std::string worst;  // "name[index]"
};

/// Compares analytic gradients against central differences
/// (f(x+h) - f(x-h)) / 2h. Relative error is |a - n| / max(|a|, |n|, floor).
/// At most max_coords coordinates per parameter are sampled (all when 0).
GradCheckReport grad_check(ParamStore& store, const LossFn& loss, double h = 1e-5,
                           std::size_t max_coords = 0, std::uint64_t seed = 0,
                           double floor = 1e-5);

}  // namespace ppgn
