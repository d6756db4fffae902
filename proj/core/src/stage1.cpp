#include "ppgn/stage1.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "ppgn/diagnostics.hpp"

namespace ppgn {
namespace {

std::string layer_name(std::size_t k) { return "W" + std::to_string(k + 1); }

using ConstRowMap = Eigen::Map<const Matrix>;

}  // namespace

Matrix local_aggregate_layer(const Matrix& h, const Matrix& aggregation, const Matrix& w) {
  if (aggregation.rows() != h.rows() || aggregation.cols() != h.rows())
    throw ShapeError("local_aggregate_layer: aggregation must be n x n with n = rows of H");
  if (w.rows() != 2 * h.cols()) throw ShapeError("local_aggregate_layer: W must have 2 * width rows");
  return relu(matmul(concat_cols(h, matmul(aggregation, h)), w));
}

GlobalOutput global_transform(const Matrix& hk, const ParamStore& theta) {
  const Matrix& wf = theta.value("Wf");
  if (hk.size() != wf.rows()) throw ShapeError("global_transform: n * n_K must equal rows of W^f");
  const ConstRowMap flat(hk.data(), 1, hk.size());
  const Matrix u = flat * wf + theta.value("bf");
  const Matrix f = u * theta.value("Wo") + theta.value("bo");
  GlobalOutput out;
  out.logits = f.row(0).transpose();
  out.z = softmax(std::span<const double>(f.data(), static_cast<std::size_t>(f.size())));
  return out;
}

Stage1Network::Stage1Network(std::size_t nodes, Matrix aggregation, std::size_t layers, std::size_t width, Rng& rng)
    : nodes_(nodes), layers_(layers), aggregation_(std::move(aggregation)) {
  if (layers == 0 || width == 0) throw ConfigError("Stage I needs at least one layer of positive width");
  if (static_cast<std::size_t>(aggregation_.rows()) != nodes) throw ShapeError("aggregation operator size differs from n");
  const auto n = static_cast<Eigen::Index>(nodes);
  const auto w = static_cast<Eigen::Index>(width);
  Eigen::Index in = 6;
  for (std::size_t k = 0; k < layers; ++k) {
    params_.add(layer_name(k), glorot_uniform(2 * in, w, rng));
    in = w;
  }
  params_.add("Wf", glorot_uniform(n * w, 2 * n, rng));
  params_.add("bf", Matrix::Zero(1, 2 * n));
  params_.add("Wo", glorot_uniform(2 * n, n, rng));
  params_.add("bo", Matrix::Zero(1, n));
}

Stage1Network::Stage1Network(std::size_t nodes, Matrix aggregation, ParamStore params)
    : nodes_(nodes), layers_(0), aggregation_(std::move(aggregation)), params_(std::move(params)) {
  while (params_.contains(layer_name(layers_))) ++layers_;
  if (layers_ == 0 || !params_.contains("Wf") || !params_.contains("Wo"))
    throw ConfigError("Stage I parameter set is incomplete");
}

std::vector<std::string> Stage1Network::local_names() const {
  std::vector<std::string> out;
  for (std::size_t k = 0; k < layers_; ++k) out.push_back(layer_name(k));
  return out;
}

std::vector<std::string> Stage1Network::global_names() const { return {"Wf", "bf", "Wo", "bo"}; }

Matrix Stage1Network::logits(const Matrix& stacked) const {
  const auto n = static_cast<Eigen::Index>(nodes_);
  const Eigen::Index batch = stacked.rows() / n;
  Matrix h = stacked;
  for (std::size_t k = 0; k < layers_; ++k) {
    const Eigen::Index w = h.cols();
    Matrix cat(h.rows(), 2 * w);
    cat.leftCols(w) = h;
    for (Eigen::Index s = 0; s < batch; ++s)
      cat.block(s * n, w, n, w).noalias() = aggregation_ * h.middleRows(s * n, n);
    h = (cat * params_.value(layer_name(k))).cwiseMax(0.0);
  }
  const ConstRowMap flat(h.data(), batch, n * h.cols());
  Matrix u = flat * params_.value("Wf");
  u.rowwise() += params_.value("bf").row(0);
  Matrix f = u * params_.value("Wo");
  f.rowwise() += params_.value("bo").row(0);
  return f;
}

double Stage1Network::loss(const Matrix& stacked, std::span<const int> labels, double lambda, bool want_grad) {
  return loss(stacked, labels, lambda, want_grad, nullptr);
}

double Stage1Network::loss(const Matrix& stacked, std::span<const int> labels, double lambda, bool want_grad,
                           Matrix* logits_out) {
  const auto n = static_cast<Eigen::Index>(nodes_);
  if (labels.empty()) throw ConfigError("loss_stage1: empty batch");
  if (stacked.cols() != 6 || stacked.rows() != n * static_cast<Eigen::Index>(labels.size()))
    throw ShapeError("loss_stage1: batch must be (B*n) x 6");
  const auto batch = static_cast<Eigen::Index>(labels.size());

  std::vector<Matrix> h(layers_ + 1), cat(layers_), pre(layers_);
  h[0] = stacked;
  for (std::size_t k = 0; k < layers_; ++k) {
    const Eigen::Index w = h[k].cols();
    cat[k].resize(h[k].rows(), 2 * w);
    cat[k].leftCols(w) = h[k];
    for (Eigen::Index s = 0; s < batch; ++s)
      cat[k].block(s * n, w, n, w).noalias() = aggregation_ * h[k].middleRows(s * n, n);
    pre[k].noalias() = cat[k] * params_.value(layer_name(k));
    h[k + 1] = pre[k].cwiseMax(0.0);
  }
  const Eigen::Index width = h[layers_].cols();
  const ConstRowMap flat(h[layers_].data(), batch, n * width);
  const Matrix& wf = params_.value("Wf");
  const Matrix& wo = params_.value("Wo");
  Matrix u = flat * wf;
  u.rowwise() += params_.value("bf").row(0);
  Matrix f = u * wo;
  f.rowwise() += params_.value("bo").row(0);

  const BatchXent xent = softmax_xent_rows(f, labels);
  const double total = xent.loss + params_.l2_penalty(lambda);
  if (logits_out) *logits_out = f;
  if (!want_grad) return total;

  const Matrix& df = xent.grad;
  params_.grad("Wo").noalias() += u.transpose() * df;
  params_.grad("bo") += df.colwise().sum();
  const Matrix du = df * wo.transpose();
  params_.grad("Wf").noalias() += flat.transpose() * du;
  params_.grad("bf") += du.colwise().sum();
  Matrix dflat = du * wf.transpose();
  Matrix dh = Eigen::Map<Matrix>(dflat.data(), batch * n, width);

  for (std::size_t k = layers_; k-- > 0;) {
    const Matrix dpre = dh.cwiseProduct((pre[k].array() > 0.0).cast<double>().matrix());
    params_.grad(layer_name(k)).noalias() += cat[k].transpose() * dpre;
    if (k == 0) break;
    const Matrix dcat = dpre * params_.value(layer_name(k)).transpose();
    const Eigen::Index w = h[k].cols();
    dh = dcat.leftCols(w);
    for (Eigen::Index s = 0; s < batch; ++s)
      dh.middleRows(s * n, n).noalias() += aggregation_.transpose() * dcat.block(s * n, w, n, w);
  }
  params_.add_l2_grad(lambda);
  return total;
}

Matrix stack_samples(std::span<const Matrix> features, std::span<const std::size_t> index) {
  if (index.empty()) return {};
  const Eigen::Index n = features[index[0]].rows();
  Matrix out(n * static_cast<Eigen::Index>(index.size()), 6);
  for (std::size_t s = 0; s < index.size(); ++s) out.middleRows(static_cast<Eigen::Index>(s) * n, n) = features[index[s]];
  return out;
}

double loss_stage1(Stage1Network& net, std::span<const Matrix> features, std::span<const std::size_t> batch,
                   std::span<const int> labels, double lambda, bool want_grad) {
  return net.loss(stack_samples(features, batch), labels, lambda, want_grad);
}

std::vector<EpochRecord> train_stage1(Stage1Network& net, std::span<const Matrix> features,
                                      std::span<const std::size_t> labels, std::span<const std::size_t> labeled,
                                      const Stage1Config& config) {
  if (labeled.empty()) throw ConfigError("train_stage1: no labeled samples");
  if (config.t1 == 0 || config.t2 == 0) throw ConfigError("train_stage1: T1 and T2 must be at least 1");
  if (config.batch == 0) throw ConfigError("train_stage1: batch size must be positive");
  Rng rng(derive_seed(config.seed, 2));
  const auto local = net.local_names();
  const auto global = net.global_names();
  std::vector<std::size_t> order(labeled.begin(), labeled.end());
  std::vector<EpochRecord> history;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    EpochRecord rec;
    rec.epoch = epoch + 1;
    std::span<const std::string> active;
    if (!config.alternating) {
      rec.phase = "joint";
    } else if (epoch % (config.t1 + config.t2) < config.t1) {
      rec.phase = "local";
      active = local;
    } else {
      rec.phase = "global";
      active = global;
    }
    shuffle_indices(order, rng);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch) {
      const std::size_t stop = std::min(order.size(), start + config.batch);
      const std::span<const std::size_t> idx(order.data() + start, stop - start);
      std::vector<int> y(idx.size());
      for (std::size_t s = 0; s < idx.size(); ++s) y[s] = static_cast<int>(labels[idx[s]]);
      net.params().zero_grad();
      Matrix f;
      const double l = net.loss(stack_samples(features, idx), y, config.lambda, true, &f);
      if (!std::isfinite(l)) {
        std::ostringstream os;
        os << "Stage I diverged at epoch " << rec.epoch << " (" << rec.phase << "), batch starting " << start
           << ": loss=" << l;
        for (const auto& p : net.params().params()) os << ", |" << p.name << "|=" << p.value.norm();
        throw NumericError(os.str());
      }
      loss_sum += l * static_cast<double>(idx.size());
      for (Eigen::Index r = 0; r < f.rows(); ++r)
        if (argmax(std::span<const double>(f.row(r).data(), static_cast<std::size_t>(f.cols()))) ==
            static_cast<std::size_t>(y[static_cast<std::size_t>(r)]))
          ++correct;
      adam_step(net.params(), config.adam, active);
    }
    rec.loss = loss_sum / static_cast<double>(order.size());
    rec.train_accuracy = static_cast<double>(correct) / static_cast<double>(order.size());
    history.push_back(rec);
  }
  net.params().zero_grad();
  return history;
}

Stage1Result train_stage1(std::span<const Matrix> features, std::span<const std::size_t> labels,
                          std::span<const std::size_t> labeled, const AdjacencyA& a, const Stage1Config& config) {
  Rng init(derive_seed(config.seed, 1));
  Stage1Result out{Stage1Network(a.size(), a.aggregation(), config.layers, config.width, init), {}};
  out.history = train_stage1(out.network, features, labels, labeled, config);
  return out;
}

Stage1Prediction predict_stage1(const Stage1Network& net, std::span<const Matrix> features) {
  Stage1Prediction out;
  const auto n = static_cast<Eigen::Index>(net.nodes());
  out.z.resize(static_cast<Eigen::Index>(features.size()), n);
  out.labels.resize(features.size());
  constexpr std::size_t chunk = 256;
  for (std::size_t start = 0; start < features.size(); start += chunk) {
    const std::size_t stop = std::min(features.size(), start + chunk);
    std::vector<std::size_t> idx(stop - start);
    std::iota(idx.begin(), idx.end(), start);
    const Matrix f = net.logits(stack_samples(features, idx));
    for (Eigen::Index r = 0; r < f.rows(); ++r) {
      const auto row = static_cast<Eigen::Index>(start) + r;
      out.z.row(row) = softmax(std::span<const double>(f.row(r).data(), static_cast<std::size_t>(n))).transpose();
      out.labels[static_cast<std::size_t>(row)] =
          argmax(std::span<const double>(out.z.row(row).data(), static_cast<std::size_t>(n)));
    }
  }
  return out;
}

void write_history_csv(const std::filesystem::path& path, std::span<const EpochRecord> history) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << "epoch,phase,loss,train_acc\n" << std::setprecision(10);
  for (const auto& r : history) out << r.epoch << ',' << r.phase << ',' << r.loss << ',' << r.train_accuracy << '\n';
}

}  // namespace ppgn
