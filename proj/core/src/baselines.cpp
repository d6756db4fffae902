#include "ppgn/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ppgn/diagnostics.hpp"
#include "ppgn/stage1.hpp"
#include "ppgn/stage2.hpp"

namespace ppgn {
namespace {

std::string gcn_name(std::size_t l) { return "G" + std::to_string(l + 1); }

std::vector<std::size_t> rows_argmax(const Matrix& f) {
  std::vector<std::size_t> out(static_cast<std::size_t>(f.rows()));
  for (Eigen::Index r = 0; r < f.rows(); ++r)
    out[static_cast<std::size_t>(r)] = argmax(std::span<const double>(f.row(r).data(), static_cast<std::size_t>(f.cols())));
  return out;
}

Matrix gather_flat(std::span<const Matrix> features, std::span<const std::size_t> idx) {
  std::vector<Matrix> sel;
  sel.reserve(idx.size());
  for (std::size_t i : idx) sel.push_back(features[i]);
  return flatten_samples(sel);
}

// Shared mini-batch loop: `step` evaluates one batch with gradients.
template <class Model, class Input>
void minibatch_train(Model& model, std::span<const Matrix> features, std::span<const std::size_t> labels,
                     std::span<const std::size_t> labeled, const BaselineConfig& config, Input input,
                     const char* what) {
  if (labeled.empty()) throw ConfigError(std::string(what) + ": no labeled samples");
  if (config.batch == 0) throw ConfigError(std::string(what) + ": batch size must be positive");
  Rng rng(derive_seed(config.seed, 2));
  std::vector<std::size_t> order(labeled.begin(), labeled.end());
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    shuffle_indices(order, rng);
    for (std::size_t start = 0; start < order.size(); start += config.batch) {
      const std::span<const std::size_t> idx(order.data() + start, std::min(order.size(), start + config.batch) - start);
      std::vector<int> y(idx.size());
      for (std::size_t s = 0; s < idx.size(); ++s) y[s] = static_cast<int>(labels[idx[s]]);
      model.params().zero_grad();
      const double l = model.loss(input(features, idx), y, config.lambda, true);
      if (!std::isfinite(l))
        throw NumericError(std::string(what) + " diverged at epoch " + std::to_string(epoch + 1));
      adam_step(model.params(), config.adam);
    }
  }
  model.params().zero_grad();
}

}  // namespace

MlpBaseline::MlpBaseline(std::size_t nodes, Rng& rng) {
  const auto n = static_cast<Eigen::Index>(nodes);
  const Eigen::Index h1 = 3 * n;
  const Eigen::Index h2 = std::max<Eigen::Index>(1, (3 * n + 1) / 2);
  params_.add("W1", glorot_uniform(6 * n, h1, rng));
  params_.add("b1", Matrix::Zero(1, h1));
  params_.add("W2", glorot_uniform(h1, h2, rng));
  params_.add("b2", Matrix::Zero(1, h2));
  params_.add("Wo", glorot_uniform(h2, n, rng));
  params_.add("bo", Matrix::Zero(1, n));
}

MlpBaseline::MlpBaseline(ParamStore params) : params_(std::move(params)) {
  for (const char* name : {"W1", "b1", "W2", "b2", "Wo", "bo"})
    if (!params_.contains(name)) throw ConfigError(std::string("MLP parameter set lacks ") + name);
}

Matrix MlpBaseline::logits(const Matrix& flat) const {
  Matrix h1 = flat * params_.value("W1");
  h1.rowwise() += params_.value("b1").row(0);
  h1 = h1.cwiseMax(0.0);
  Matrix h2 = h1 * params_.value("W2");
  h2.rowwise() += params_.value("b2").row(0);
  h2 = h2.cwiseMax(0.0);
  Matrix f = h2 * params_.value("Wo");
  f.rowwise() += params_.value("bo").row(0);
  return f;
}

double MlpBaseline::loss(const Matrix& flat, std::span<const int> labels, double lambda, bool want_grad,
                         Matrix* logits_out) {
  if (static_cast<std::size_t>(flat.rows()) != labels.size()) throw ShapeError("MLP: rows differ from labels");
  Matrix p1 = flat * params_.value("W1");
  p1.rowwise() += params_.value("b1").row(0);
  const Matrix h1 = p1.cwiseMax(0.0);
  Matrix p2 = h1 * params_.value("W2");
  p2.rowwise() += params_.value("b2").row(0);
  const Matrix h2 = p2.cwiseMax(0.0);
  Matrix f = h2 * params_.value("Wo");
  f.rowwise() += params_.value("bo").row(0);
  const BatchXent x = softmax_xent_rows(f, labels);
  const double total = x.loss + params_.l2_penalty(lambda);
  if (logits_out) *logits_out = f;
  if (!want_grad) return total;
  params_.grad("Wo").noalias() += h2.transpose() * x.grad;
  params_.grad("bo") += x.grad.colwise().sum();
  const Matrix d2 = (x.grad * params_.value("Wo").transpose()).cwiseProduct((p2.array() > 0.0).cast<double>().matrix());
  params_.grad("W2").noalias() += h1.transpose() * d2;
  params_.grad("b2") += d2.colwise().sum();
  const Matrix d1 = (d2 * params_.value("W2").transpose()).cwiseProduct((p1.array() > 0.0).cast<double>().matrix());
  params_.grad("W1").noalias() += flat.transpose() * d1;
  params_.grad("b1") += d1.colwise().sum();
  params_.add_l2_grad(lambda);
  return total;
}

Matrix gcn_propagation(const Matrix& adjacency) {
  if (adjacency.rows() != adjacency.cols()) throw ShapeError("gcn_propagation: adjacency must be square");
  Matrix a = adjacency + Matrix::Identity(adjacency.rows(), adjacency.cols());
  const Vector s = a.rowwise().sum().cwiseSqrt().cwiseInverse();
  return s.asDiagonal() * a * s.asDiagonal();
}

GcnBaseline::GcnBaseline(std::size_t nodes, Matrix propagation, std::size_t layers, std::size_t width, Rng& rng)
    : layers_(layers), propagation_(std::move(propagation)) {
  if (static_cast<std::size_t>(propagation_.rows()) != nodes) throw ShapeError("GCN: propagation size differs from n");
  if (layers == 0 || width == 0) throw ConfigError("GCN needs at least one layer of positive width");
  const auto n = static_cast<Eigen::Index>(nodes);
  const auto w = static_cast<Eigen::Index>(width);
  Eigen::Index in = 6;
  for (std::size_t l = 0; l < layers; ++l) {
    params_.add(gcn_name(l), glorot_uniform(in, w, rng));
    in = w;
  }
  params_.add("Wo", glorot_uniform(n * w, n, rng));
  params_.add("bo", Matrix::Zero(1, n));
}

GcnBaseline::GcnBaseline(Matrix propagation, ParamStore params)
    : layers_(0), propagation_(std::move(propagation)), params_(std::move(params)) {
  while (params_.contains(gcn_name(layers_))) ++layers_;
  if (layers_ == 0 || !params_.contains("Wo") || !params_.contains("bo"))
    throw ConfigError("GCN parameter set is incomplete");
}

Matrix GcnBaseline::logits(const Matrix& stacked) const {
  const Eigen::Index n = propagation_.rows();
  const Eigen::Index batch = stacked.rows() / n;
  Matrix h = stacked;
  for (std::size_t l = 0; l < layers_; ++l) {
    const Matrix t = h * params_.value(gcn_name(l));
    Matrix next(t.rows(), t.cols());
    for (Eigen::Index s = 0; s < batch; ++s) next.middleRows(s * n, n).noalias() = propagation_ * t.middleRows(s * n, n);
    h = next.cwiseMax(0.0);
  }
  const Eigen::Map<const Matrix> flat(h.data(), batch, n * h.cols());
  Matrix f = flat * params_.value("Wo");
  f.rowwise() += params_.value("bo").row(0);
  return f;
}

double GcnBaseline::loss(const Matrix& stacked, std::span<const int> labels, double lambda, bool want_grad,
                         Matrix* logits_out) {
  const Eigen::Index n = propagation_.rows();
  const auto batch = static_cast<Eigen::Index>(labels.size());
  if (stacked.rows() != n * batch || stacked.cols() != 6) throw ShapeError("GCN: batch must be (B*n) x 6");
  std::vector<Matrix> h(layers_ + 1), pre(layers_);
  h[0] = stacked;
  for (std::size_t l = 0; l < layers_; ++l) {
    const Matrix t = h[l] * params_.value(gcn_name(l));
    pre[l].resize(t.rows(), t.cols());
    for (Eigen::Index s = 0; s < batch; ++s) pre[l].middleRows(s * n, n).noalias() = propagation_ * t.middleRows(s * n, n);
    h[l + 1] = pre[l].cwiseMax(0.0);
  }
  const Eigen::Index w = h[layers_].cols();
  const Eigen::Map<const Matrix> flat(h[layers_].data(), batch, n * w);
  Matrix f = flat * params_.value("Wo");
  f.rowwise() += params_.value("bo").row(0);
  const BatchXent x = softmax_xent_rows(f, labels);
  const double total = x.loss + params_.l2_penalty(lambda);
  if (logits_out) *logits_out = f;
  if (!want_grad) return total;
  params_.grad("Wo").noalias() += flat.transpose() * x.grad;
  params_.grad("bo") += x.grad.colwise().sum();
  Matrix dflat = x.grad * params_.value("Wo").transpose();
  Matrix dh = Eigen::Map<Matrix>(dflat.data(), batch * n, w);
  for (std::size_t l = layers_; l-- > 0;) {
    const Matrix dpre = dh.cwiseProduct((pre[l].array() > 0.0).cast<double>().matrix());
    Matrix dt(dpre.rows(), dpre.cols());
    for (Eigen::Index s = 0; s < batch; ++s)
      dt.middleRows(s * n, n).noalias() = propagation_.transpose() * dpre.middleRows(s * n, n);
    params_.grad(gcn_name(l)).noalias() += h[l].transpose() * dt;
    if (l == 0) break;
    dh = dt * params_.value(gcn_name(l)).transpose();
  }
  params_.add_l2_grad(lambda);
  return total;
}

MlpBaseline train_mlp(std::span<const Matrix> features, std::span<const std::size_t> labels,
                      std::span<const std::size_t> labeled, const BaselineConfig& config) {
  if (features.empty()) throw ConfigError("MLP: no samples");
  Rng init(derive_seed(config.seed, 1));
  MlpBaseline m(static_cast<std::size_t>(features[0].rows()), init);
  minibatch_train(m, features, labels, labeled, config, gather_flat, "MLP");
  return m;
}

GcnBaseline train_gcn(std::span<const Matrix> features, std::span<const std::size_t> labels,
                      std::span<const std::size_t> labeled, const Matrix& adjacency, const BaselineConfig& config) {
  Rng init(derive_seed(config.seed, 1));
  GcnBaseline m(static_cast<std::size_t>(adjacency.rows()), gcn_propagation(adjacency), 3, 32, init);
  minibatch_train(m, features, labels, labeled, config, stack_samples, "GCN");
  return m;
}

std::vector<std::size_t> predict_mlp(const MlpBaseline& m, std::span<const Matrix> features) {
  return rows_argmax(m.logits(flatten_samples(features)));
}

std::vector<std::size_t> predict_gcn(const GcnBaseline& m, std::span<const Matrix> features) {
  std::vector<std::size_t> out;
  out.reserve(features.size());
  constexpr std::size_t chunk = 256;
  for (std::size_t start = 0; start < features.size(); start += chunk) {
    std::vector<std::size_t> idx(std::min(features.size(), start + chunk) - start);
    std::iota(idx.begin(), idx.end(), start);
    const auto part = rows_argmax(m.logits(stack_samples(features, idx)));
    out.insert(out.end(), part.begin(), part.end());
  }
  return out;
}

}  // namespace ppgn
