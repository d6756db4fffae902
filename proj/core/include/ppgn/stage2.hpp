#pragma once

// Stage II: a sample-similarity graph B built from masked Stage I embeddings,
// then two graph-convolution layers over D^-1/2 (I + B) D^-1/2, trained
// transductively on the labeled rows.

#include <Eigen/Sparse>

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "ppgn/feeder.hpp"
#include "ppgn/tensor.hpp"

namespace ppgn {

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

inline constexpr std::size_t kDefaultSampleNeighbors = 120;
inline constexpr const char* kSimilarityFormat = "ppgn-B-v1";

/// Keeps z on {p*} and the physical neighbours of p* = argmax z; zero elsewhere.
Vector mask_embedding(std::span<const double> z, const FeederGraph& g);
Matrix mask_embeddings(const Matrix& z, const FeederGraph& g);

/// <a, b> / (|a| |b|); 0 (with a warning) when either vector is zero.
double cosine_similarity(std::span<const double> a, std::span<const double> b);

struct SimilarityB {
  SparseMatrix b;                 // symmetric, zero diagonal
  std::size_t k = 0;
  std::size_t dropped_edges = 0;  // union edges removed by the 2k degree cap

  std::size_t size() const { return static_cast<std::size_t>(b.rows()); }
  std::size_t row_nonzeros(std::size_t row) const;
  /// Row sums of I + B.
  Vector degree() const;
  /// D^-1/2 (I + B) D^-1/2.
  SparseMatrix propagation() const;
};

/// B_pq = max(0, cos(e_p, e_q)) when q is among the k most similar rows to p
/// or p among those of q (ties to the lower index). If the union leaves a row
/// with more than 2k entries, edges are kept greedily by descending
/// similarity while both ends stay within 2k. k >= N gives a dense B with a
/// warning.
SimilarityB build_B(const Matrix& embeddings, std::size_t k = kDefaultSampleNeighbors);

void write_similarity(const std::filesystem::path& path, const SimilarityB& b);
SimilarityB read_similarity(const std::filesystem::path& path);

/// Flattens each n x 6 sample node-major into one row of an N x 6n matrix.
Matrix flatten_samples(std::span<const Matrix> features);

struct Stage2Config {
  std::size_t layers = 2;
  std::size_t width_factor = 3;  // hidden width = width_factor * classes
  double lambda = 5e-5;
  AdamConfig adam{};
  std::size_t epochs = 200;
  std::uint64_t seed = 0;
};

class Stage2Network {
 public:
  Stage2Network(std::size_t inputs, std::size_t classes, std::size_t layers, std::size_t width, Rng& rng);
  explicit Stage2Network(ParamStore params);

  std::size_t layers() const { return layers_; }
  std::size_t classes() const { return static_cast<std::size_t>(params_.value("bo").cols()); }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  Matrix logits(const SparseMatrix& propagation, const Matrix& c0) const;
  /// Mean cross-entropy over rows with target >= 0 plus lambda * sum ||theta||^2.
  double loss(const SparseMatrix& propagation, const Matrix& c0, std::span<const int> targets, double lambda,
              bool want_grad, Matrix* logits = nullptr);

 private:
  std::size_t layers_;
  ParamStore params_;
};

/// Row-wise softmax of the network output.
Matrix gcl_forward(const Matrix& c0, const SimilarityB& b, const Stage2Network& net);

struct Stage2History {
  std::vector<double> loss;
  std::vector<double> train_accuracy;
};

struct Stage2Result {
  Stage2Network network;
  Stage2History history;
};

/// Full-batch training; `targets` holds the class for labeled rows and -1 for
/// the rest.
Stage2Result train_stage2(const Matrix& c0, const SimilarityB& b, std::span<const int> targets,
                          std::size_t classes, const Stage2Config& config);

/// Row-wise argmax, lowest index on ties.
std::vector<std::size_t> predict_stage2(const Matrix& yhat);

}  // namespace ppgn
