#pragma once

// Stage I: K local-aggregation layers over the constructed adjacency followed
// by a global transformation of the flattened node states into an n-way
// distribution (the graph embedding z).

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ppgn/adjacency.hpp"
#include "ppgn/tensor.hpp"

namespace ppgn {

struct Stage1Config {
  std::size_t layers = 3;
  std::size_t width = 32;
  double lambda = 5e-3;
  AdamConfig adam{};
  std::size_t t1 = 10;  // local-block epochs per cycle
  std::size_t t2 = 10;  // global-block epochs per cycle
  std::size_t epochs = 200;
  std::size_t batch = 32;
  bool alternating = true;  // false: every parameter updates every step
  std::uint64_t seed = 0;
};

/// h_i^k = relu([h_i^{k-1} || sum_j P_ij h_j^{k-1}] W^k) for one sample, with
/// P the aggregation operator (a_tilde_ij / |N_i|).
Matrix local_aggregate_layer(const Matrix& h, const Matrix& aggregation, const Matrix& w);

struct GlobalOutput {
  Vector logits;
  Vector z;
};

/// f = (vec(H^K) W^f + b^f) W^o + b^o with node-major flattening; z = softmax(f).
GlobalOutput global_transform(const Matrix& hk, const ParamStore& theta);

class Stage1Network {
 public:
  Stage1Network(std::size_t nodes, Matrix aggregation, std::size_t layers, std::size_t width, Rng& rng);
  /// Wraps existing parameters (checkpoint restore).
  Stage1Network(std::size_t nodes, Matrix aggregation, ParamStore params);

  std::size_t nodes() const { return nodes_; }
  std::size_t layers() const { return layers_; }
  const Matrix& aggregation() const { return aggregation_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  std::vector<std::string> local_names() const;
  std::vector<std::string> global_names() const;

  /// Logits for a stacked batch ((B*n) x 6, sample-major).
  Matrix logits(const Matrix& stacked) const;
  /// Mean cross-entropy over the batch plus lambda * sum ||theta||^2. With
  /// want_grad the gradient is accumulated into params().grad.
  double loss(const Matrix& stacked, std::span<const int> labels, double lambda, bool want_grad);
  /// Same as loss() but also returns the batch logits.
  double loss(const Matrix& stacked, std::span<const int> labels, double lambda, bool want_grad, Matrix* logits);

 private:
  std::size_t nodes_;
  std::size_t layers_;
  Matrix aggregation_;
  ParamStore params_;
};

/// Stacks the selected samples into a (B*n) x 6 matrix.
Matrix stack_samples(std::span<const Matrix> features, std::span<const std::size_t> index);

double loss_stage1(Stage1Network& net, std::span<const Matrix> features, std::span<const std::size_t> batch,
                   std::span<const int> labels, double lambda, bool want_grad = false);

struct EpochRecord {
  std::size_t epoch = 0;
  std::string phase;  // local | global | joint
  double loss = 0.0;
  double train_accuracy = 0.0;
};

struct Stage1Result {
  Stage1Network network;
  std::vector<EpochRecord> history;
};

/// Block-coordinate training: T1 epochs on {W^1..W^K}, then T2 epochs on
/// {W^f, b^f, W^o, b^o}, repeated until the epoch budget. `labels` holds the
/// class of every sample; only `labeled` rows are used.
Stage1Result train_stage1(std::span<const Matrix> features, std::span<const std::size_t> labels,
                          std::span<const std::size_t> labeled, const AdjacencyA& a, const Stage1Config& config);

/// Continues training an existing network (used by the harness and tests).
std::vector<EpochRecord> train_stage1(Stage1Network& net, std::span<const Matrix> features,
                                      std::span<const std::size_t> labels, std::span<const std::size_t> labeled,
                                      const Stage1Config& config);

struct Stage1Prediction {
  std::vector<std::size_t> labels;  // argmax, lowest index on ties
  Matrix z;                         // one embedding per row
};

Stage1Prediction predict_stage1(const Stage1Network& net, std::span<const Matrix> features);

void write_history_csv(const std::filesystem::path& path, std::span<const EpochRecord> history);

}  // namespace ppgn
