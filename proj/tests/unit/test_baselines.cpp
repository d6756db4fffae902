#include <gtest/gtest.h>

#include <cmath>

#include "ppgn/adjacency.hpp"
#include "ppgn/baselines.hpp"
#include "ppgn/stage1.hpp"
#include "ppgn/stage2.hpp"
#include "support.hpp"

namespace ppgn {
namespace {

using testing::ToySet;
using testing::toy_samples;

Matrix random_matrix(Eigen::Index r, Eigen::Index c, Rng& rng, double scale = 1.0) {
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = uniform(rng, -scale, scale);
  return m;
}

TEST(GcnPropagation, HandValues) {
  Matrix a(2, 2);
  a << 0, 1, 1, 0;
  EXPECT_TRUE(gcn_propagation(a).isApprox(Matrix::Constant(2, 2, 0.5), 1e-15));
  Matrix p = gcn_propagation(physical_adjacency(FeederGraph(testing::toy_feeder(3, testing::path_edges(3)))));
  EXPECT_NEAR(p(0, 0), 0.5, 1e-15);
  EXPECT_NEAR(p(0, 1), 1.0 / std::sqrt(6.0), 1e-15);
  EXPECT_NEAR(p(1, 1), 1.0 / 3.0, 1e-15);
  EXPECT_EQ(p(0, 2), 0.0);
  EXPECT_THROW(gcn_propagation(Matrix::Ones(2, 3)), ShapeError);
}

TEST(MlpBaseline, LayerWidths) {
  Rng rng(1);
  MlpBaseline m(13, rng);
  EXPECT_EQ(m.params().value("W1").rows(), 78);
  EXPECT_EQ(m.params().value("W1").cols(), 39);
  EXPECT_EQ(m.params().value("W2").cols(), 20);
  EXPECT_EQ(m.params().value("Wo").cols(), 13);
}

TEST(MlpBaseline, GradientCheck) {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    Rng rng(60 + seed);
    MlpBaseline m(4, rng);
    for (const char* b : {"b1", "b2", "bo"}) m.params().value(b) = random_matrix(1, m.params().value(b).cols(), rng, 0.3);
    Matrix flat = random_matrix(5, 24, rng);
    std::vector<int> y{0, 3, -1, 2, 1};
    LossFn f = [&](ParamStore&, bool g) { return m.loss(flat, y, 1e-3, g); };
    auto rep = grad_check(m.params(), f, 1e-6, 0, seed);
    EXPECT_LT(rep.max_rel_error, 1e-4) << rep.worst;
  }
}

TEST(GcnBaseline, GradientCheck) {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    Rng rng(70 + seed);
    const Matrix p = gcn_propagation(physical_adjacency(FeederGraph(testing::toy_feeder(4, testing::path_edges(4)))));
    GcnBaseline m(4, p, 3, 5, rng);
    m.params().value("bo") = random_matrix(1, 4, rng, 0.3);
    ToySet data = toy_samples(4, 1, rng, 0.5);
    const Matrix stacked = stack_samples(data.features, testing::iota_indices(4));
    std::vector<int> y{0, 1, 2, 3};
    LossFn f = [&](ParamStore&, bool g) { return m.loss(stacked, y, 1e-3, g); };
    auto rep = grad_check(m.params(), f, 1e-6, 0, seed);
    EXPECT_LT(rep.max_rel_error, 1e-4) << rep.worst;
  }
}

TEST(GcnBaseline, LogitsMatchDenseChain) {
  Rng rng(2);
  const Matrix p = gcn_propagation(physical_adjacency(FeederGraph(testing::toy_feeder(3, testing::path_edges(3)))));
  GcnBaseline m(3, p, 2, 4, rng);
  ToySet data = toy_samples(3, 1, rng);
  const Matrix stacked = stack_samples(data.features, std::vector<std::size_t>{1});
  Matrix h = data.features[1];
  for (const char* w : {"G1", "G2"}) h = (p * h * m.params().value(w)).cwiseMax(0.0);
  // Node-major readout of the final node states.
  const RowVector expected =
      Eigen::Map<const RowVector>(h.data(), h.size()) * m.params().value("Wo") + m.params().value("bo");
  EXPECT_TRUE(m.logits(stacked).row(0).isApprox(expected, 1e-12));
}

TEST(Baselines, FitSeparableToy) {
  Rng rng(3);
  ToySet data = toy_samples(5, 6, rng);
  std::vector<std::size_t> all = testing::iota_indices(data.labels.size());
  BaselineConfig cfg;
  cfg.epochs = 150;
  cfg.batch = 8;
  cfg.adam.lr = 0.01;
  cfg.seed = 2;
  auto mlp = train_mlp(data.features, data.labels, all, cfg);
  EXPECT_EQ(predict_mlp(mlp, data.features), data.labels);
  const Matrix adj = physical_adjacency(FeederGraph(testing::toy_feeder(5, testing::path_edges(5))));
  auto gcn = train_gcn(data.features, data.labels, all, adj, cfg);
  EXPECT_EQ(predict_gcn(gcn, data.features), data.labels);
}

TEST(Baselines, Deterministic) {
  Rng rng(4);
  ToySet data = toy_samples(4, 3, rng);
  std::vector<std::size_t> all = testing::iota_indices(data.labels.size());
  BaselineConfig cfg;
  cfg.epochs = 5;
  cfg.seed = 9;
  auto a = train_mlp(data.features, data.labels, all, cfg);
  auto b = train_mlp(data.features, data.labels, all, cfg);
  for (const auto& p : a.params().params()) EXPECT_EQ(p.value, b.params().value(p.name));
}

}  // namespace
}  // namespace ppgn
