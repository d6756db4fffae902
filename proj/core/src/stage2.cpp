#include "ppgn/stage2.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <tuple>

#include "ppgn/diagnostics.hpp"

namespace ppgn {
namespace {

std::string layer_name(std::size_t l) { return "W" + std::to_string(l + 1); }

struct Edge {
  std::size_t p;
  std::size_t q;
  double value;
};

}  // namespace

Vector mask_embedding(std::span<const double> z, const FeederGraph& g) {
  if (z.size() != g.node_count()) throw ShapeError("mask_embedding: embedding length differs from node count");
  const std::size_t top = argmax(z);
  Vector out = Vector::Zero(static_cast<Eigen::Index>(z.size()));
  out(static_cast<Eigen::Index>(top)) = z[top];
  for (std::size_t j : g.neighbors(top)) out(static_cast<Eigen::Index>(j)) = z[j];
  return out;
}

Matrix mask_embeddings(const Matrix& z, const FeederGraph& g) {
  Matrix out(z.rows(), z.cols());
  for (Eigen::Index r = 0; r < z.rows(); ++r)
    out.row(r) = mask_embedding(std::span<const double>(z.row(r).data(), static_cast<std::size_t>(z.cols())), g)
                     .transpose();
  return out;
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("cosine_similarity: length mismatch");
  const Eigen::Map<const Vector> va(a.data(), static_cast<Eigen::Index>(a.size()));
  const Eigen::Map<const Vector> vb(b.data(), static_cast<Eigen::Index>(b.size()));
  const double na = va.norm();
  const double nb = vb.norm();
  if (na == 0.0 || nb == 0.0) {
    warn("cosine_similarity: zero vector, similarity set to 0");
    return 0.0;
  }
  return va.dot(vb) / (na * nb);
}

std::size_t SimilarityB::row_nonzeros(std::size_t row) const {
  const auto r = static_cast<Eigen::Index>(row);
  return static_cast<std::size_t>(b.outerIndexPtr()[r + 1] - b.outerIndexPtr()[r]);
}

Vector SimilarityB::degree() const {
  Vector d = Vector::Ones(b.rows());
  for (Eigen::Index r = 0; r < b.outerSize(); ++r)
    for (SparseMatrix::InnerIterator it(b, r); it; ++it) d(r) += it.value();
  return d;
}

SparseMatrix SimilarityB::propagation() const {
  const Vector d = degree();
  const Vector s = d.cwiseSqrt().cwiseInverse();
  std::vector<Eigen::Triplet<double>> t;
  t.reserve(static_cast<std::size_t>(b.nonZeros() + b.rows()));
  for (Eigen::Index r = 0; r < b.outerSize(); ++r) {
    t.emplace_back(r, r, s(r) * s(r));
    for (SparseMatrix::InnerIterator it(b, r); it; ++it) t.emplace_back(r, it.col(), s(r) * it.value() * s(it.col()));
  }
  SparseMatrix p(b.rows(), b.cols());
  p.setFromTriplets(t.begin(), t.end());
  return p;
}

SimilarityB build_B(const Matrix& embeddings, std::size_t k) {
  const auto n = static_cast<std::size_t>(embeddings.rows());
  if (n < 2) throw ConfigError("build_B: need at least two samples");
  if (k == 0) throw ConfigError("build_B: k_II must be at least 1");
  const bool dense = k >= n;
  if (dense) warn("build_B: k_II=" + std::to_string(k) + " >= N=" + std::to_string(n) + ", B is dense");

  Vector norms(embeddings.rows());
  std::size_t zero_rows = 0;
  for (Eigen::Index r = 0; r < embeddings.rows(); ++r) {
    norms(r) = embeddings.row(r).norm();
    if (norms(r) == 0.0) ++zero_rows;
  }
  if (zero_rows > 0) warn("build_B: " + std::to_string(zero_rows) + " zero embeddings, their similarities are 0");

  auto sim = [&](std::size_t p, std::size_t q) {
    const auto a = static_cast<Eigen::Index>(std::min(p, q));
    const auto c = static_cast<Eigen::Index>(std::max(p, q));
    if (norms(a) == 0.0 || norms(c) == 0.0) return 0.0;
    return std::max(0.0, embeddings.row(a).dot(embeddings.row(c)) / (norms(a) * norms(c)));
  };

  std::vector<std::pair<std::size_t, std::size_t>> picked;
  std::vector<std::pair<double, std::size_t>> row;
  row.reserve(n);
  for (std::size_t p = 0; p < n; ++p) {
    row.clear();
    for (std::size_t q = 0; q < n; ++q)
      if (q != p) row.emplace_back(sim(p, q), q);
    const std::size_t take = dense ? row.size() : std::min(k, row.size());
    std::partial_sort(row.begin(), row.begin() + static_cast<std::ptrdiff_t>(take), row.end(),
                      [](const auto& x, const auto& y) { return x.first > y.first || (x.first == y.first && x.second < y.second); });
    for (std::size_t i = 0; i < take; ++i)
      if (row[i].first > 0.0) picked.emplace_back(std::min(p, row[i].second), std::max(p, row[i].second));
  }
  std::sort(picked.begin(), picked.end());
  picked.erase(std::unique(picked.begin(), picked.end()), picked.end());

  std::vector<Edge> edges;
  edges.reserve(picked.size());
  std::vector<std::size_t> deg(n, 0);
  for (auto [p, q] : picked) {
    edges.push_back({p, q, sim(p, q)});
    ++deg[p];
    ++deg[q];
  }

  SimilarityB out;
  out.k = k;
  const std::size_t cap = 2 * k;
  if (!dense && *std::max_element(deg.begin(), deg.end()) > cap) {
    std::sort(edges.begin(), edges.end(), [](const Edge& x, const Edge& y) {
      return std::tie(y.value, x.p, x.q) < std::tie(x.value, y.p, y.q);
    });
    std::fill(deg.begin(), deg.end(), 0);
    std::vector<Edge> kept;
    kept.reserve(edges.size());
    for (const Edge& e : edges) {
      if (deg[e.p] < cap && deg[e.q] < cap) {
        kept.push_back(e);
        ++deg[e.p];
        ++deg[e.q];
      }
    }
    out.dropped_edges = edges.size() - kept.size();
    warn("build_B: dropped " + std::to_string(out.dropped_edges) + " union edges to keep rows within 2k_II");
    edges = std::move(kept);
  }

  std::vector<Eigen::Triplet<double>> t;
  t.reserve(2 * edges.size());
  for (const Edge& e : edges) {
    t.emplace_back(static_cast<Eigen::Index>(e.p), static_cast<Eigen::Index>(e.q), e.value);
    t.emplace_back(static_cast<Eigen::Index>(e.q), static_cast<Eigen::Index>(e.p), e.value);
  }
  out.b.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  out.b.setFromTriplets(t.begin(), t.end());
  out.b.makeCompressed();
  return out;
}

void write_similarity(const std::filesystem::path& path, const SimilarityB& b) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << "format,N,k_II\n" << kSimilarityFormat << ',' << b.size() << ',' << b.k << "\np,q,value\n";
  out << std::setprecision(17);
  for (Eigen::Index r = 0; r < b.b.outerSize(); ++r)
    for (SparseMatrix::InnerIterator it(b.b, r); it; ++it) out << r << ',' << it.col() << ',' << it.value() << '\n';
}

SimilarityB read_similarity(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  if (line != "format,N,k_II") throw ParseError(path.string() + ":1: expected header format,N,k_II");
  std::getline(in, line);
  std::string format;
  std::size_t n = 0;
  SimilarityB out;
  {
    std::istringstream ls(line);
    std::getline(ls, format, ',');
    char comma = 0;
    ls >> n >> comma >> out.k;
    if (format != kSimilarityFormat || !ls) throw ParseError(path.string() + ":2: expected " + kSimilarityFormat + ",N,k_II");
  }
  std::getline(in, line);
  if (line != "p,q,value") throw ParseError(path.string() + ":3: expected header p,q,value");
  std::vector<Eigen::Triplet<double>> t;
  std::size_t lineno = 3;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    long long p = -1, q = -1;
    double v = 0.0;
    char c1 = 0, c2 = 0;
    ls >> p >> c1 >> q >> c2 >> v;
    if (!ls || c1 != ',' || c2 != ',' || p < 0 || q < 0 || static_cast<std::size_t>(p) >= n ||
        static_cast<std::size_t>(q) >= n)
      throw ParseError(path.string() + ":" + std::to_string(lineno) + ": bad entry");
    t.emplace_back(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(q), v);
  }
  out.b.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  out.b.setFromTriplets(t.begin(), t.end());
  out.b.makeCompressed();
  return out;
}

Matrix flatten_samples(std::span<const Matrix> features) {
  if (features.empty()) return {};
  const Eigen::Index width = features[0].size();
  Matrix out(static_cast<Eigen::Index>(features.size()), width);
  for (std::size_t i = 0; i < features.size(); ++i) {
    if (features[i].size() != width) throw ShapeError("flatten_samples: samples differ in shape");
    out.row(static_cast<Eigen::Index>(i)) = Eigen::Map<const RowVector>(features[i].data(), width);
  }
  return out;
}

Stage2Network::Stage2Network(std::size_t inputs, std::size_t classes, std::size_t layers, std::size_t width, Rng& rng)
    : layers_(layers) {
  if (layers == 0 || width == 0 || classes == 0) throw ConfigError("Stage II needs layers, width and classes > 0");
  auto in = static_cast<Eigen::Index>(inputs);
  const auto w = static_cast<Eigen::Index>(width);
  for (std::size_t l = 0; l < layers; ++l) {
    params_.add(layer_name(l), glorot_uniform(in, w, rng));
    in = w;
  }
  params_.add("Wo", glorot_uniform(w, static_cast<Eigen::Index>(classes), rng));
  params_.add("bo", Matrix::Zero(1, static_cast<Eigen::Index>(classes)));
}

Stage2Network::Stage2Network(ParamStore params) : layers_(0), params_(std::move(params)) {
  while (params_.contains(layer_name(layers_))) ++layers_;
  if (layers_ == 0 || !params_.contains("Wo") || !params_.contains("bo"))
    throw ConfigError("Stage II parameter set is incomplete");
}

Matrix Stage2Network::logits(const SparseMatrix& propagation, const Matrix& c0) const {
  if (propagation.rows() != c0.rows()) throw ShapeError("Stage II: propagation size differs from sample count");
  Matrix h = c0;
  for (std::size_t l = 0; l < layers_; ++l) {
    const Matrix t = h * params_.value(layer_name(l));
    h = (propagation * t).cwiseMax(0.0);
  }
  Matrix g = h * params_.value("Wo");
  g.rowwise() += params_.value("bo").row(0);
  return g;
}

double Stage2Network::loss(const SparseMatrix& propagation, const Matrix& c0, std::span<const int> targets,
                           double lambda, bool want_grad, Matrix* logits_out) {
  if (propagation.rows() != c0.rows() || static_cast<std::size_t>(c0.rows()) != targets.size())
    throw ShapeError("Stage II: propagation, features and targets disagree on N");
  std::vector<Matrix> h(layers_ + 1), pre(layers_);
  h[0] = c0;
  for (std::size_t l = 0; l < layers_; ++l) {
    const Matrix t = h[l] * params_.value(layer_name(l));
    pre[l] = propagation * t;
    h[l + 1] = pre[l].cwiseMax(0.0);
  }
  const Matrix& wo = params_.value("Wo");
  Matrix g = h[layers_] * wo;
  g.rowwise() += params_.value("bo").row(0);

  const BatchXent xent = softmax_xent_rows(g, targets);
  if (xent.counted == 0) throw ConfigError("Stage II: no labeled rows");
  const double total = xent.loss + params_.l2_penalty(lambda);
  if (logits_out) *logits_out = g;
  if (!want_grad) return total;

  const Matrix& dg = xent.grad;
  params_.grad("Wo").noalias() += h[layers_].transpose() * dg;
  params_.grad("bo") += dg.colwise().sum();
  Matrix dh = dg * wo.transpose();
  for (std::size_t l = layers_; l-- > 0;) {
    const Matrix dpre = dh.cwiseProduct((pre[l].array() > 0.0).cast<double>().matrix());
    const Matrix dt = propagation.transpose() * dpre;
    params_.grad(layer_name(l)).noalias() += h[l].transpose() * dt;
    if (l == 0) break;
    dh = dt * params_.value(layer_name(l)).transpose();
  }
  params_.add_l2_grad(lambda);
  return total;
}

Matrix gcl_forward(const Matrix& c0, const SimilarityB& b, const Stage2Network& net) {
  const Matrix g = net.logits(b.propagation(), c0);
  Matrix out(g.rows(), g.cols());
  for (Eigen::Index r = 0; r < g.rows(); ++r)
    out.row(r) = softmax(std::span<const double>(g.row(r).data(), static_cast<std::size_t>(g.cols()))).transpose();
  return out;
}

Stage2Result train_stage2(const Matrix& c0, const SimilarityB& b, std::span<const int> targets, std::size_t classes,
                          const Stage2Config& config) {
  require_finite(c0, "Stage II features");
  Rng init(derive_seed(config.seed, 1));
  Stage2Result out{
      Stage2Network(static_cast<std::size_t>(c0.cols()), classes, config.layers, config.width_factor * classes, init),
      {}};
  const SparseMatrix p = b.propagation();
  std::size_t labeled = 0;
  for (int t : targets) labeled += t >= 0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    out.network.params().zero_grad();
    Matrix g;
    const double l = out.network.loss(p, c0, targets, config.lambda, true, &g);
    if (!std::isfinite(l)) {
      std::ostringstream os;
      os << "Stage II diverged at epoch " << epoch + 1 << ": loss=" << l;
      for (const auto& prm : out.network.params().params()) os << ", |" << prm.name << "|=" << prm.value.norm();
      throw NumericError(os.str());
    }
    std::size_t correct = 0;
    for (Eigen::Index r = 0; r < g.rows(); ++r) {
      const int t = targets[static_cast<std::size_t>(r)];
      if (t >= 0 && argmax(std::span<const double>(g.row(r).data(), static_cast<std::size_t>(g.cols()))) ==
                        static_cast<std::size_t>(t))
        ++correct;
    }
    out.history.loss.push_back(l);
    out.history.train_accuracy.push_back(static_cast<double>(correct) / static_cast<double>(labeled));
    adam_step(out.network.params(), config.adam);
  }
  out.network.params().zero_grad();
  return out;
}

std::vector<std::size_t> predict_stage2(const Matrix& yhat) {
  std::vector<std::size_t> out(static_cast<std::size_t>(yhat.rows()));
  for (Eigen::Index r = 0; r < yhat.rows(); ++r)
    out[static_cast<std::size_t>(r)] =
        argmax(std::span<const double>(yhat.row(r).data(), static_cast<std::size_t>(yhat.cols())));
  return out;
}

}  // namespace ppgn
