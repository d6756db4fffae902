#pragma once

// Comparison models trained on the same splits as the two-stage network: a
// fully connected network over the flattened sample and a graph convolutional
// network over the physical adjacency.

#include <cstdint>
#include <span>
#include <vector>

#include "ppgn/tensor.hpp"

namespace ppgn {

struct BaselineConfig {
  double lambda = 5e-3;
  AdamConfig adam{};
  std::size_t epochs = 200;
  std::size_t batch = 32;
  std::uint64_t seed = 0;
};

/// 6n -> 3n -> 1.5n -> n with ReLU on the hidden layers.
class MlpBaseline {
 public:
  MlpBaseline(std::size_t nodes, Rng& rng);
  explicit MlpBaseline(ParamStore params);

  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  /// Logits for rows of flattened samples (B x 6n).
  Matrix logits(const Matrix& flat) const;
  double loss(const Matrix& flat, std::span<const int> labels, double lambda, bool want_grad, Matrix* logits = nullptr);

 private:
  ParamStore params_;
};

/// D^-1/2 (I + A) D^-1/2 for a 0/1 or weighted symmetric adjacency.
Matrix gcn_propagation(const Matrix& adjacency);

/// Three graph convolutions of width 32 over the physical feeder, then a
/// linear readout of the flattened node states.
class GcnBaseline {
 public:
  GcnBaseline(std::size_t nodes, Matrix propagation, std::size_t layers, std::size_t width, Rng& rng);
  GcnBaseline(Matrix propagation, ParamStore params);

  std::size_t nodes() const { return static_cast<std::size_t>(propagation_.rows()); }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  /// Logits for a stacked batch ((B*n) x 6).
  Matrix logits(const Matrix& stacked) const;
  double loss(const Matrix& stacked, std::span<const int> labels, double lambda, bool want_grad,
              Matrix* logits = nullptr);

 private:
  std::size_t layers_;
  Matrix propagation_;
  ParamStore params_;
};

MlpBaseline train_mlp(std::span<const Matrix> features, std::span<const std::size_t> labels,
                      std::span<const std::size_t> labeled, const BaselineConfig& config);
GcnBaseline train_gcn(std::span<const Matrix> features, std::span<const std::size_t> labels,
                      std::span<const std::size_t> labeled, const Matrix& adjacency, const BaselineConfig& config);

std::vector<std::size_t> predict_mlp(const MlpBaseline& m, std::span<const Matrix> features);
std::vector<std::size_t> predict_gcn(const GcnBaseline& m, std::span<const Matrix> features);

}  // namespace ppgn
