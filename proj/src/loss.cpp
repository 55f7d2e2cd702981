#include "contrastlab/loss.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "contrastlab/errors.hpp"

namespace contrastlab {

namespace {

double clamp_unit(double s) { return std::clamp(s, -1.0, 1.0); }

// log sum_{k != i} exp(S[i, k] / tau), stabilised by the row maximum.
double log_sum_exp_excluding_self(const Matrix& s, Index i, double tau) {
  const Index n = s.cols();
  double row_max = -std::numeric_limits<double>::infinity();
  for (Index k = 0; k < n; ++k) {
    if (k != i) row_max = std::max(row_max, s(i, k) / tau);
  }
  double acc = 0.0;
  for (Index k = 0; k < n; ++k) {
    if (k != i) acc += std::exp(s(i, k) / tau - row_max);
  }
  return row_max + std::log(acc);
}

Matrix normalized_rows(const Matrix& z) {
  Matrix out = z;
  for (Index r = 0; r < z.rows(); ++r) out.row(r) /= z.row(r).norm();
  return out;
}

}  // namespace

void LossConfig::validate() const {
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw InvalidArgument("loss.temperature must be a positive finite number, got " +
                          std::to_string(temperature));
  }
}

EmbeddingBatch::EmbeddingBatch(Matrix vectors) : vectors_(std::move(vectors)) {
  if (vectors_.rows() < 2 || vectors_.rows() % 2 != 0) {
    throw InvalidArgument("embedding batch needs an even row count >= 2, got " +
                          std::to_string(vectors_.rows()));
  }
  if (vectors_.cols() < 1) throw InvalidArgument("embedding batch has zero columns");
  for (Index r = 0; r < vectors_.rows(); ++r) {
    const double norm = vectors_.row(r).norm();
    if (!(norm > 0.0) || !std::isfinite(norm)) {
      throw InvalidArgument("embedding row " + std::to_string(r) +
                            " has zero or non-finite norm");
    }
  }
}

double cosine_similarity(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) {
    throw InvalidArgument("cosine_similarity: dimension mismatch " + std::to_string(u.size()) +
                          " vs " + std::to_string(v.size()));
  }
  double dot = 0.0, uu = 0.0, vv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    dot += u[i] * v[i];
    uu += u[i] * u[i];
    vv += v[i] * v[i];
  }
  if (!(uu > 0.0) || !(vv > 0.0)) {
    throw InvalidArgument("cosine_similarity: zero-norm input");
  }
  return clamp_unit(dot / (std::sqrt(uu) * std::sqrt(vv)));
}

Matrix similarity_matrix(const EmbeddingBatch& batch) {
  const Matrix unit = normalized_rows(batch.vectors());
  const Index n = unit.rows();
  Matrix s(n, n);
  for (Index i = 0; i < n; ++i) {
    s(i, i) = 1.0;
    for (Index j = i + 1; j < n; ++j) {
      s(i, j) = s(j, i) = clamp_unit(unit.row(i).dot(unit.row(j)));
    }
  }
  return s;
}

double ntxent_pair_loss(Index i, Index j, const Matrix& similarities, const LossConfig& cfg) {
  cfg.validate();
  const Index n = similarities.rows();
  if (similarities.cols() != n) throw InvalidArgument("similarity matrix is not square");
  if (i < 0 || j < 0 || i >= n || j >= n) {
    throw InvalidArgument("pair index out of range: (" + std::to_string(i) + ", " +
                          std::to_string(j) + ") for " + std::to_string(n) + " rows");
  }
  if (i == j) throw InvalidArgument("pair loss needs i != j, got " + std::to_string(i));
  const double tau = cfg.temperature;
  return -similarities(i, j) / tau + log_sum_exp_excluding_self(similarities, i, tau);
}

double ntxent_batch_loss(const EmbeddingBatch& batch, const LossConfig& cfg) {
  const Matrix s = similarity_matrix(batch);
  double sum = 0.0;
  for (Index k = 0; k < batch.pair_count(); ++k) {
    sum += ntxent_pair_loss(2 * k, 2 * k + 1, s, cfg) + ntxent_pair_loss(2 * k + 1, 2 * k, s, cfg);
  }
  return sum / static_cast<double>(batch.rows());
}

LossDecomposition decompose_loss(const EmbeddingBatch& batch, const LossConfig& cfg) {
  cfg.validate();
  const Matrix s = similarity_matrix(batch);
  const double tau = cfg.temperature;
  const Index rows = batch.rows();
  double total = 0.0, positive = 0.0, negative = 0.0;
  for (Index i = 0; i < rows; ++i) {
    const Index j = EmbeddingBatch::partner(i);
    const double pos = -s(i, j) / tau;
    const double neg = log_sum_exp_excluding_self(s, i, tau);
    total += pos + neg;
    positive += pos;
    negative += neg;
  }
  const auto count = static_cast<double>(rows);
  return {total / count, positive / count, negative / count};
}

LossWithGradient ntxent_loss_with_gradient(const EmbeddingBatch& batch, const LossConfig& cfg) {
  LossWithGradient out;
  out.loss = decompose_loss(batch, cfg);

  const Matrix& z = batch.vectors();
  const Matrix unit = normalized_rows(z);
  const Matrix s = similarity_matrix(batch);
  const double tau = cfg.temperature;
  const Index rows = batch.rows();
  const double scale = 1.0 / (tau * static_cast<double>(rows));

  // coeff(i, k) = d total / d S[i, k] for the row-i term only.
  Matrix coeff = Matrix::Zero(rows, rows);
  for (Index i = 0; i < rows; ++i) {
    const double lse = log_sum_exp_excluding_self(s, i, tau);
    for (Index k = 0; k < rows; ++k) {
      if (k == i) continue;
      coeff(i, k) = std::exp(s(i, k) / tau - lse) * scale;
    }
    coeff(i, EmbeddingBatch::partner(i)) -= scale;
  }
  // S[i, k] = u_i . u_k enters both row i and row k.
  const Matrix grad_unit = (coeff + coeff.transpose()) * unit;

  out.gradient.resize(rows, z.cols());
  for (Index i = 0; i < rows; ++i) {
    const double norm = z.row(i).norm();
    const double radial = unit.row(i).dot(grad_unit.row(i));
    out.gradient.row(i) = (grad_unit.row(i) - radial * unit.row(i)) / norm;
  }
  return out;
}

}  // namespace contrastlab
