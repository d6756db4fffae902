#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include "ppgn/stage2.hpp"
#include "support.hpp"

namespace ppgn {
namespace {

using testing::toy_feeder;
using testing::ToySet;
using testing::toy_samples;

Matrix random_matrix(Eigen::Index r, Eigen::Index c, Rng& rng, double scale = 1.0) {
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = uniform(rng, -scale, scale);
  return m;
}

Matrix random_nonneg(Eigen::Index r, Eigen::Index c, Rng& rng) {
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = uniform01(rng) < 0.4 ? 0.0 : uniform01(rng);
  return m;
}

Vector as_vector(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

std::span<const double> span_of(const Vector& v) { return {v.data(), static_cast<std::size_t>(v.size())}; }

SimilarityB from_dense(const Matrix& d) {
  SimilarityB s;
  s.b = d.sparseView();
  s.b.makeCompressed();
  return s;
}

TEST(MaskEmbedding, OneHotUnchanged) {
  FeederGraph g(toy_feeder(3, testing::path_edges(3)));
  Vector z = as_vector({0.0, 1.0, 0.0});
  EXPECT_EQ(mask_embedding(span_of(z), g), z);
}

TEST(MaskEmbedding, PathDropsFarNode) {
  FeederGraph g(toy_feeder(3, testing::path_edges(3)));
  Vector z = as_vector({0.5, 0.3, 0.2});
  EXPECT_EQ(mask_embedding(span_of(z), g), as_vector({0.5, 0.3, 0.0}));
}

TEST(MaskEmbedding, StarHubKeepsEverything) {
  FeederGraph g(toy_feeder(5, {{1, 2}, {1, 3}, {1, 4}, {1, 5}}));
  Vector z = Vector::Constant(5, 0.2);
  EXPECT_EQ(mask_embedding(span_of(z), g), z);
}

TEST(CosineSimilarity, HandValues) {
  Vector a = as_vector({1.0, 2.0, 3.0});
  EXPECT_NEAR(cosine_similarity(span_of(a), span_of(a)), 1.0, 1e-15);
  Vector e1 = as_vector({1.0, 0.0, 0.0}), e2 = as_vector({0.0, 1.0, 0.0});
  EXPECT_EQ(cosine_similarity(span_of(e1), span_of(e2)), 0.0);
  const double r = 1.0 / std::sqrt(2.0);
  Vector u = as_vector({r, r, 0.0}), v = as_vector({r, 0.0, r});
  EXPECT_NEAR(cosine_similarity(span_of(u), span_of(v)), 0.5, 1e-15);
}

TEST(CosineSimilarity, ZeroVectorWarns) {
  testing::WarningCapture w;
  Vector z = Vector::Zero(3), a = as_vector({1.0, 0.0, 0.0});
  EXPECT_EQ(cosine_similarity(span_of(z), span_of(a)), 0.0);
  EXPECT_TRUE(w.any_contains("zero vector"));
}

TEST(BuildB, TwoSamples) {
  Matrix e(2, 3);
  e << 1.0, 1.0, 0.0, 1.0, 0.0, 1.0;
  SimilarityB b = build_B(e, 1);
  EXPECT_EQ(b.b.nonZeros(), 2);
  EXPECT_NEAR(b.b.coeff(0, 1), 0.5, 1e-15);
  EXPECT_EQ(b.b.coeff(0, 1), b.b.coeff(1, 0));
}

TEST(BuildB, DisjointSupportsGiveEmptyB) {
  Matrix e = Matrix::Identity(4, 4);
  EXPECT_EQ(build_B(e, 2).b.nonZeros(), 0);
}

TEST(BuildB, DenseWarning) {
  testing::WarningCapture w;
  Rng rng(4);
  SimilarityB b = build_B(random_nonneg(5, 4, rng), 5);
  EXPECT_TRUE(w.any_contains("k_II=5 >= N=5"));
  EXPECT_EQ(b.dropped_edges, 0u);
}

TEST(BuildB, RejectsDegenerateInputs) {
  EXPECT_THROW(build_B(Matrix::Ones(1, 3), 1), ConfigError);
  EXPECT_THROW(build_B(Matrix::Ones(3, 3), 0), ConfigError);
}

// Exhaustive reference: full sort per row, union, then the degree cap.
Matrix reference_B(const Matrix& e, std::size_t k) {
  const auto n = static_cast<std::size_t>(e.rows());
  Matrix s = Matrix::Zero(e.rows(), e.rows());
  for (std::size_t p = 0; p < n; ++p)
    for (std::size_t q = 0; q < n; ++q) {
      if (p == q) continue;
      const double np = e.row(static_cast<Eigen::Index>(p)).norm(), nq = e.row(static_cast<Eigen::Index>(q)).norm();
      if (np > 0 && nq > 0)
        s(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(q)) =
            std::max(0.0, e.row(static_cast<Eigen::Index>(std::min(p, q))).dot(e.row(static_cast<Eigen::Index>(std::max(p, q)))) / (np * nq));
    }
  std::vector<std::vector<bool>> keep(n, std::vector<bool>(n, false));
  for (std::size_t p = 0; p < n; ++p) {
    std::vector<std::size_t> order;
    for (std::size_t q = 0; q < n; ++q)
      if (q != p) order.push_back(q);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return s(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(a)) > s(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(b));
    });
    for (std::size_t i = 0; i < std::min(k, order.size()); ++i)
      if (s(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(order[i])) > 0) keep[p][order[i]] = keep[order[i]][p] = true;
  }
  std::vector<std::size_t> deg(n, 0);
  for (std::size_t p = 0; p < n; ++p)
    for (std::size_t q = 0; q < n; ++q) deg[p] += keep[p][q];
  if (k < n && *std::max_element(deg.begin(), deg.end()) > 2 * k) {
    std::vector<std::tuple<double, std::size_t, std::size_t>> edges;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q)
        if (keep[p][q]) edges.emplace_back(-s(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(q)), p, q);
    std::sort(edges.begin(), edges.end());
    std::fill(deg.begin(), deg.end(), 0);
    for (auto& row : keep) std::fill(row.begin(), row.end(), false);
    for (auto [v, p, q] : edges)
      if (deg[p] < 2 * k && deg[q] < 2 * k) {
        keep[p][q] = keep[q][p] = true;
        ++deg[p];
        ++deg[q];
      }
  }
  Matrix out = Matrix::Zero(e.rows(), e.rows());
  for (std::size_t p = 0; p < n; ++p)
    for (std::size_t q = 0; q < n; ++q)
      if (keep[p][q]) out(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(q)) = s(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(q));
  return out;
}

TEST(BuildB, MatchesExhaustiveReference) {
  Rng rng(31);
  for (int t = 0; t < 20; ++t) {
    Matrix e = random_nonneg(10, 6, rng);
    SimilarityB b = build_B(e, 2);
    EXPECT_EQ(Matrix(b.b), reference_B(e, 2));
    for (std::size_t r = 0; r < 10; ++r) EXPECT_LE(b.row_nonzeros(r), 4u);
  }
}

TEST(BuildB, CapDropsUnionEdges) {
  // A hub similar to every other row: each leaf picks the hub, which
  // pushes the hub's union degree past 2k.
  Matrix e = Matrix::Zero(8, 8);
  e.col(0).setOnes();
  for (Eigen::Index r = 1; r < 8; ++r) e(r, r) = 0.1 * static_cast<double>(r);
  testing::WarningCapture w;
  SimilarityB b = build_B(e, 1);
  EXPECT_GT(b.dropped_edges, 0u);
  EXPECT_TRUE(w.any_contains("2k_II"));
  for (std::size_t r = 0; r < 8; ++r) EXPECT_LE(b.row_nonzeros(r), 2u);
  EXPECT_EQ(Matrix(b.b), reference_B(e, 1));
}

TEST(BuildBProperty, SymmetricZeroDiagonalBoundedRows) {
  Rng rng(5);
  for (int t = 0; t < 60; ++t) {
    const auto n = static_cast<Eigen::Index>(3 + uniform_index(rng, 40));
    const std::size_t k = 1 + uniform_index(rng, static_cast<std::size_t>(n) - 1);
    Matrix e = random_nonneg(n, 1 + static_cast<Eigen::Index>(uniform_index(rng, 10)), rng);
    testing::WarningCapture w;
    SimilarityB b = build_B(e, k);
    Matrix d(b.b);
    EXPECT_EQ(d, d.transpose());
    EXPECT_EQ(d.diagonal().cwiseAbs().maxCoeff(), 0.0);
    EXPECT_GE(d.minCoeff(), 0.0);
    EXPECT_LE(d.maxCoeff(), 1.0 + 1e-12);
    for (std::size_t r = 0; r < static_cast<std::size_t>(n); ++r) EXPECT_LE(b.row_nonzeros(r), 2 * k);

    // I + B normalized has spectrum within [-1, 1].
    Matrix p(b.propagation());
    Eigen::SelfAdjointEigenSolver<Matrix> es(p);
    EXPECT_LE(es.eigenvalues().cwiseAbs().maxCoeff(), 1.0 + 1e-12);
  }
}

TEST(BuildBProperty, MaskedSupportsStayLocal) {
  FeederGraph g = load_feeder(testing::data_path("feeders/feeder36.json"));
  const DistanceTable hops = shortest_paths(g);
  Rng rng(6);
  const auto n = static_cast<Eigen::Index>(g.node_count());
  for (int t = 0; t < 10; ++t) {
    Matrix z(40, n);
    for (Eigen::Index r = 0; r < z.rows(); ++r) {
      Vector row(n);
      for (Eigen::Index i = 0; i < n; ++i) row(i) = uniform01(rng);
      row(static_cast<Eigen::Index>(uniform_index(rng, g.node_count()))) += 3.0;
      z.row(r) = (row / row.sum()).transpose();
    }
    const Matrix masked = mask_embeddings(z, g);
    SimilarityB b = build_B(masked, 5);
    for (Eigen::Index p = 0; p < b.b.outerSize(); ++p)
      for (SparseMatrix::InnerIterator it(b.b, p); it; ++it) {
        const auto ap = argmax(std::span<const double>(z.row(p).data(), static_cast<std::size_t>(n)));
        const auto aq = argmax(std::span<const double>(z.row(it.col()).data(), static_cast<std::size_t>(n)));
        EXPECT_LE(hops(ap, aq), 2.0);
      }
  }
}

TEST(SimilarityFile, RoundTrip) {
  testing::TempDir dir("bfile");
  Rng rng(8);
  SimilarityB b = build_B(random_nonneg(12, 5, rng), 3);
  write_similarity(dir / "B.csv", b);
  SimilarityB back = read_similarity(dir / "B.csv");
  EXPECT_EQ(back.k, 3u);
  EXPECT_EQ(Matrix(back.b), Matrix(b.b));
  std::ofstream(dir / "bad.csv") << "format,N,k_II\nppgn-B-v1,2,1\np,q,value\n0,5,0.3\n";
  EXPECT_THROW(read_similarity(dir / "bad.csv"), ParseError);
  EXPECT_THROW(read_similarity(dir / "missing.csv"), ParseError);
}

TEST(FlattenSamples, NodeMajor) {
  Matrix x(2, 6);
  x << 0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11;
  std::vector<Matrix> v{x};
  Matrix f = flatten_samples(v);
  ASSERT_EQ(f.cols(), 12);
  for (Eigen::Index i = 0; i < 12; ++i) EXPECT_EQ(f(0, i), static_cast<double>(i));
}

Matrix softmax_rows(const Matrix& g) {
  Matrix out(g.rows(), g.cols());
  for (Eigen::Index r = 0; r < g.rows(); ++r) {
    const double m = g.row(r).maxCoeff();
    const auto e = (g.row(r).array() - m).exp();
    out.row(r) = e / e.sum();
  }
  return out;
}

Matrix dense_forward(const Matrix& c0, const Matrix& b, const Stage2Network& net) {
  const Eigen::Index n = b.rows();
  Matrix a = Matrix::Identity(n, n) + b;
  Vector d = a.rowwise().sum();
  Matrix p(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) p(i, j) = a(i, j) / std::sqrt(d(i) * d(j));
  Matrix h = c0;
  for (std::size_t l = 0; l < net.layers(); ++l) h = (p * (h * net.params().value("W" + std::to_string(l + 1)))).cwiseMax(0.0);
  Matrix g = h * net.params().value("Wo");
  g.rowwise() += net.params().value("bo").row(0);
  return softmax_rows(g);
}

TEST(GclForward, EmptyBIsPerSampleNetwork) {
  Rng rng(1);
  Stage2Network net(6, 3, 2, 9, rng);
  Matrix c0 = random_matrix(4, 6, rng);
  SimilarityB b = from_dense(Matrix::Zero(4, 4));
  Matrix out = gcl_forward(c0, b, net);
  for (Eigen::Index r = 0; r < 4; ++r) {
    Matrix single = gcl_forward(c0.row(r), from_dense(Matrix::Zero(1, 1)), net);
    EXPECT_TRUE(out.row(r).isApprox(single.row(0), 1e-14));
  }
}

TEST(GclForward, IdenticalConnectedSamplesAgree) {
  Rng rng(2);
  Stage2Network net(5, 3, 2, 9, rng);
  Matrix c0(2, 5);
  c0.row(0) = random_matrix(1, 5, rng);
  c0.row(1) = c0.row(0);
  Matrix b(2, 2);
  b << 0, 1, 1, 0;
  Matrix out = gcl_forward(c0, from_dense(b), net);
  EXPECT_EQ(out.row(0), out.row(1));
}

TEST(GclForward, MatchesDenseReference) {
  Rng rng(3);
  for (int t = 0; t < 10; ++t) {
    Stage2Network net(7, 4, 2, 12, rng);
    net.params().value("bo") = random_matrix(1, 4, rng);
    Matrix c0 = random_matrix(5, 7, rng);
    Matrix b = random_nonneg(5, 5, rng);
    b = (b + b.transpose()).eval() * 0.5;
    b.diagonal().setZero();
    Matrix out = gcl_forward(c0, from_dense(b), net);
    EXPECT_TRUE(out.isApprox(dense_forward(c0, b, net), 1e-12));
    for (Eigen::Index r = 0; r < 5; ++r) {
      EXPECT_NEAR(out.row(r).sum(), 1.0, 1e-12);
      EXPECT_GE(out.row(r).minCoeff(), 0.0);
    }
  }
}

TEST(Stage2Loss, GradientCheck) {
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    Rng rng(50 + seed);
    Stage2Network net(8, 3, 2, 6, rng);
    net.params().value("bo") = random_matrix(1, 3, rng, 0.3);
    Matrix c0 = random_matrix(10, 8, rng);
    Matrix b = random_nonneg(10, 10, rng);
    b = (b + b.transpose()).eval() * 0.5;
    b.diagonal().setZero();
    const SparseMatrix p = from_dense(b).propagation();
    std::vector<int> y{0, 1, 2, -1, 0, -1, 2, 1, -1, 0};
    LossFn f = [&](ParamStore&, bool want_grad) { return net.loss(p, c0, y, 1e-3, want_grad); };
    auto rep = grad_check(net.params(), f, 1e-6, 0, seed);
    EXPECT_LT(rep.max_rel_error, 1e-4) << rep.worst;
  }
}

TEST(Stage2Loss, UnlabeledRowsAddNothing) {
  Rng rng(9);
  Stage2Network net(6, 3, 2, 9, rng);
  Matrix c0 = random_matrix(5, 6, rng);
  Matrix b = Matrix::Zero(5, 5);
  b(0, 3) = b(3, 0) = 0.7;
  const SparseMatrix p = from_dense(b).propagation();
  std::vector<int> y{0, -1, 2, -1, 1};
  Matrix logits;
  const double l = net.loss(p, c0, y, 0.0, false, &logits);
  double ce = 0.0;
  for (std::size_t r : {0, 2, 4})
    ce += softmax_xent(std::span<const double>(logits.row(static_cast<Eigen::Index>(r)).data(), 3),
                       static_cast<std::size_t>(y[r])).loss;
  EXPECT_NEAR(l, ce / 3.0, 1e-14);
  std::vector<int> none(5, -1);
  EXPECT_THROW(net.loss(p, c0, none, 0.0, false), ConfigError);
}

struct ToyGraph {
  Matrix c0;
  SimilarityB b;
  std::vector<int> labels;
};

ToyGraph toy_graph(std::uint64_t seed) {
  Rng rng(seed);
  ToySet s = toy_samples(4, 5, rng);
  ToyGraph t;
  t.c0 = flatten_samples(s.features);
  t.b = build_B(t.c0.cwiseMax(0.0), 3);
  for (auto l : s.labels) t.labels.push_back(static_cast<int>(l));
  return t;
}

TEST(TrainStage2, FitsSeparableToy) {
  ToyGraph t = toy_graph(12);
  Stage2Config cfg;
  cfg.epochs = 300;
  cfg.adam.lr = 0.01;
  cfg.seed = 4;
  Stage2Result r = train_stage2(t.c0, t.b, t.labels, 4, cfg);
  EXPECT_LT(r.history.loss.back(), r.history.loss.front());
  EXPECT_EQ(r.history.train_accuracy.back(), 1.0);
  auto pred = predict_stage2(gcl_forward(t.c0, t.b, r.network));
  for (std::size_t i = 0; i < pred.size(); ++i) EXPECT_EQ(pred[i], static_cast<std::size_t>(t.labels[i]));
}

TEST(TrainStage2, HeavyPenaltyApproachesUniform) {
  ToyGraph t = toy_graph(13);
  Stage2Config cfg;
  cfg.epochs = 400;
  cfg.adam.lr = 0.01;
  cfg.lambda = 1e3;
  Stage2Result r = train_stage2(t.c0, t.b, t.labels, 4, cfg);
  EXPECT_NEAR(r.history.loss.back(), std::log(4.0), 0.05);
}

TEST(TrainStage2, DeterministicForSeed) {
  ToyGraph t = toy_graph(14);
  Stage2Config cfg;
  cfg.epochs = 20;
  cfg.seed = 3;
  std::vector<int> partial = t.labels;
  for (std::size_t i = 0; i < partial.size(); i += 3) partial[i] = -1;
  Stage2Result a = train_stage2(t.c0, t.b, partial, 4, cfg);
  Stage2Result b = train_stage2(t.c0, t.b, partial, 4, cfg);
  EXPECT_EQ(a.history.loss, b.history.loss);
  for (const auto& p : a.network.params().params()) EXPECT_EQ(p.value, b.network.params().value(p.name));
}

TEST(TrainStage2, NoLabelsIsConfigError) {
  ToyGraph t = toy_graph(15);
  std::vector<int> none(t.labels.size(), -1);
  EXPECT_THROW(train_stage2(t.c0, t.b, none, 4, Stage2Config{}), ConfigError);
}

TEST(PredictStage2, TiesToLowerIndex) {
  Matrix y(2, 3);
  y << 0.4, 0.4, 0.2, 0.1, 0.45, 0.45;
  EXPECT_EQ(predict_stage2(y), (std::vector<std::size_t>{0, 1}));
}

}  // namespace
}  // namespace ppgn
