#pragma once

#include <Eigen/Dense>
#include <span>

namespace contrastlab {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Index = Eigen::Index;

struct LossConfig {
  double temperature = 0.5;

  void validate() const;
};

// 2N projection vectors z with positive pairs on consecutive rows:
// rows (2k, 2k+1) come from the same source image.
class EmbeddingBatch {
 public:
  // Throws InvalidArgument on an odd or empty row count or a zero-norm row.
  explicit EmbeddingBatch(Matrix vectors);

  const Matrix& vectors() const noexcept { return vectors_; }
  Index rows() const noexcept { return vectors_.rows(); }
  Index dim() const noexcept { return vectors_.cols(); }
  Index pair_count() const noexcept { return vectors_.rows() / 2; }

  static constexpr Index partner(Index row) noexcept { return row ^ 1; }

 private:
  Matrix vectors_;
};

// Total NT-Xent loss split into its two additive parts, both averaged over
// the 2N ordered pair terms.
struct LossDecomposition {
  double total = 0.0;
  double positive_term = 0.0;  // mean of -sim(z_i, z_j) / tau
  double negative_term = 0.0;  // mean of log sum_{k != i} exp(sim(z_i, z_k) / tau)
};

// Cosine of the angle between u and v, clamped to [-1, 1].
double cosine_similarity(std::span<const double> u, std::span<const double> v);

// Pairwise cosine similarities; exactly symmetric with a unit diagonal.
Matrix similarity_matrix(const EmbeddingBatch& batch);

// Loss of the ordered pair (i, j): -log softmax_{k != i}(S[i, .] / tau)[j].
double ntxent_pair_loss(Index i, Index j, const Matrix& similarities, const LossConfig& cfg);

// Mean of the pair loss over both orderings of all N pairs.
double ntxent_batch_loss(const EmbeddingBatch& batch, const LossConfig& cfg);

LossDecomposition decompose_loss(const EmbeddingBatch& batch, const LossConfig& cfg);

struct LossWithGradient {
  LossDecomposition loss;
  Matrix gradient;  // d total / d z, same shape as the batch
};

// Decomposition plus the analytic gradient of the total with respect to the
// embedding entries.
LossWithGradient ntxent_loss_with_gradient(const EmbeddingBatch& batch, const LossConfig& cfg);

}  // namespace contrastlab
