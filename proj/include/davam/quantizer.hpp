// SPDX-License-Identifier: Apache-2.0
//
// Discrete latent machinery: code book with EMA statistics, nearest-neighbor
// one-hot quantization with a straight-through forward, K-means
// initialization, commitment regularizer, dead-code restarts.

#pragma once

#include "davam/autodiff.hpp"

#include <utility>
#include <vector>

namespace davam {

// Indices into the code book, one per encoder step. Each index is the exact
// argmin of Euclidean distance at quantization time, ties to the smallest.
using LatentSequence = std::vector<int>;

template <typename Scalar>
struct CodeBook {
  Mat<Scalar> codes;       // [K x dim]
  Mat<Scalar> ema_counts;  // [K x 1]
  Mat<Scalar> ema_sums;    // [K x dim]
  Scalar decay = Scalar(0.99);
  Scalar epsilon = Scalar(1e-5);

  int size() const { return static_cast<int>(codes.rows()); }
  int dim() const { return static_cast<int>(codes.cols()); }
};

template <typename Scalar>
CodeBook<Scalar> make_codebook(int k, int dim, Rng& rng, Scalar init_scale,
                               Scalar decay = Scalar(0.99),
                               Scalar epsilon = Scalar(1e-5)) {
  CodeBook<Scalar> book;
  book.codes.resize(k, dim);
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < dim; ++j)
      book.codes(i, j) = static_cast<Scalar>(rng.normal()) * init_scale;
  book.ema_counts = Mat<Scalar>::Ones(k, 1);
  book.ema_sums = book.codes;
  book.decay = decay;
  book.epsilon = epsilon;
  return book;
}

// Nearest code per row, smallest index on ties. Distances accumulate per
// row in a plain loop so results do not depend on batch shape.
template <typename Scalar>
int nearest_code(const CodeBook<Scalar>& book,
                 const Eigen::Ref<const Eigen::Matrix<Scalar, 1, Eigen::Dynamic>>& row) {
  int best = 0;
  Scalar best_d = std::numeric_limits<Scalar>::max();
  for (int k = 0; k < book.size(); ++k) {
    Scalar d = 0;
    for (int j = 0; j < book.dim(); ++j) {
      Scalar diff = row(0, j) - book.codes(k, j);
      d += diff * diff;
    }
    if (d < best_d) {
      best_d = d;
      best = k;
    }
  }
  return best;
}

template <typename Scalar>
LatentSequence assign_codes(const Mat<Scalar>& rows, const CodeBook<Scalar>& book) {
  if (book.size() < 1) throw ContractError("quantize: empty code book");
  if (rows.cols() != book.dim()) throw ContractError("quantize: dim mismatch");
  if (rows.rows() < 1) throw ContractError("quantize: no rows");
  LatentSequence z(static_cast<std::size_t>(rows.rows()));
  for (Eigen::Index t = 0; t < rows.rows(); ++t)
    z[static_cast<std::size_t>(t)] = nearest_code<Scalar>(book, rows.row(t));
  return z;
}

template <typename Scalar>
struct QuantizeResult {
  LatentSequence z;
  Tensor<Scalar> quantized;  // straight-through: forward e_z, gradient to h
};

template <typename Scalar>
QuantizeResult<Scalar> quantize(const Tensor<Scalar>& h, const CodeBook<Scalar>& book) {
  LatentSequence z = assign_codes(h.value(), book);
  Mat<Scalar> picked(h.rows(), h.cols());
  for (Eigen::Index t = 0; t < h.rows(); ++t)
    picked.row(t) = book.codes.row(z[static_cast<std::size_t>(t)]);
  Tensor<Scalar> codes = Tensor<Scalar>::from(std::move(picked));
  return {std::move(z), straight_through(h, codes)};
}

// Forward against a fixed assignment; used when gradients are checked with
// indices frozen.
template <typename Scalar>
Tensor<Scalar> quantize_with_indices(const Tensor<Scalar>& h,
                                     const CodeBook<Scalar>& book,
                                     const LatentSequence& z) {
  if (static_cast<Eigen::Index>(z.size()) != h.rows())
    throw ContractError("quantize_with_indices: length mismatch");
  Mat<Scalar> picked(h.rows(), h.cols());
  for (Eigen::Index t = 0; t < h.rows(); ++t)
    picked.row(t) = book.codes.row(z[static_cast<std::size_t>(t)]);
  return straight_through(h, Tensor<Scalar>::from(std::move(picked)));
}

// Lloyd iterations seeded from K distinct samples; empty clusters re-seed
// from a random sample. EMA statistics start at the final counts/sums.
template <typename Scalar>
CodeBook<Scalar> kmeans_init(const Mat<Scalar>& samples, int k, int iters,
                             std::uint64_t seed, Scalar decay = Scalar(0.99),
                             Scalar epsilon = Scalar(1e-5)) {
  const int n = static_cast<int>(samples.rows());
  if (n < k) throw DataError("kmeans_init: fewer samples than codes");
  Rng rng(seed);
  CodeBook<Scalar> book;
  book.decay = decay;
  book.epsilon = epsilon;
  book.codes.resize(k, samples.cols());
  std::vector<int> picks = rng.distinct(n, k);
  for (int i = 0; i < k; ++i) book.codes.row(i) = samples.row(picks[static_cast<std::size_t>(i)]);

  std::vector<int> assign(static_cast<std::size_t>(n), 0);
  auto assign_all = [&]() {
    for (int i = 0; i < n; ++i)
      assign[static_cast<std::size_t>(i)] = nearest_code<Scalar>(book, samples.row(i));
  };

  for (int it = 0; it < iters; ++it) {
    assign_all();
    Mat<Scalar> sums = Mat<Scalar>::Zero(k, samples.cols());
    Mat<Scalar> counts = Mat<Scalar>::Zero(k, 1);
    for (int i = 0; i < n; ++i) {
      sums.row(assign[static_cast<std::size_t>(i)]) += samples.row(i);
      counts(assign[static_cast<std::size_t>(i)], 0) += Scalar(1);
    }
    for (int c = 0; c < k; ++c) {
      if (counts(c, 0) > Scalar(0)) {
        book.codes.row(c) = sums.row(c) / counts(c, 0);
      } else {
        book.codes.row(c) = samples.row(rng.below_int(n));
      }
    }
  }

  assign_all();
  book.ema_sums = Mat<Scalar>::Zero(k, samples.cols());
  book.ema_counts = Mat<Scalar>::Zero(k, 1);
  for (int i = 0; i < n; ++i) {
    book.ema_sums.row(assign[static_cast<std::size_t>(i)]) += samples.row(i);
    book.ema_counts(assign[static_cast<std::size_t>(i)], 0) += Scalar(1);
  }
  return book;
}

// Sum of squared distances to assigned codes; Lloyd never increases it.
template <typename Scalar>
Scalar kmeans_objective(const Mat<Scalar>& samples, const CodeBook<Scalar>& book) {
  Scalar total = 0;
  for (Eigen::Index i = 0; i < samples.rows(); ++i) {
    int k = nearest_code<Scalar>(book, samples.row(i));
    total += (samples.row(i) - book.codes.row(k)).squaredNorm();
  }
  return total;
}

// counts_k <- decay * counts_k + (1 - decay) * n_k, likewise for sums, then
// e_k = sums_k / max(counts_k, epsilon). Codes never receive gradients.
template <typename Scalar>
void ema_update(CodeBook<Scalar>& book, const Mat<Scalar>& h, const LatentSequence& z) {
  if (static_cast<Eigen::Index>(z.size()) != h.rows())
    throw ContractError("ema_update: assignment length mismatch");
  Mat<Scalar> batch_sums = Mat<Scalar>::Zero(book.size(), book.dim());
  Mat<Scalar> batch_counts = Mat<Scalar>::Zero(book.size(), 1);
  for (Eigen::Index t = 0; t < h.rows(); ++t) {
    int k = z[static_cast<std::size_t>(t)];
    if (k < 0 || k >= book.size()) throw ContractError("ema_update: index out of range");
    batch_sums.row(k) += h.row(t);
    batch_counts(k, 0) += Scalar(1);
  }
  book.ema_counts = book.decay * book.ema_counts + (Scalar(1) - book.decay) * batch_counts;
  book.ema_sums = book.decay * book.ema_sums + (Scalar(1) - book.decay) * batch_sums;
  for (int k = 0; k < book.size(); ++k)
    book.codes.row(k) =
        book.ema_sums.row(k) / std::max(book.ema_counts(k, 0), book.epsilon);
}

// beta * sum_t ||h_t - sg(e_{z_t})||^2; the gradient reaches h only.
template <typename Scalar>
Tensor<Scalar> commitment_loss(const Tensor<Scalar>& h, const CodeBook<Scalar>& book,
                               const LatentSequence& z, Scalar beta) {
  if (beta < Scalar(0)) throw ConfigError("commitment_loss: beta must be >= 0");
  if (static_cast<Eigen::Index>(z.size()) != h.rows())
    throw ContractError("commitment_loss: assignment length mismatch");
  Mat<Scalar> picked(h.rows(), h.cols());
  for (Eigen::Index t = 0; t < h.rows(); ++t)
    picked.row(t) = book.codes.row(z[static_cast<std::size_t>(t)]);
  Tensor<Scalar> target = Tensor<Scalar>::from(std::move(picked));  // constant
  return mul_const(sum_all(square(sub(h, target))), beta);
}

// Re-seeds codes whose EMA count fell below threshold_share of the uniform
// share, pulling replacements from recent encoder states. Returns how many
// codes were restarted.
template <typename Scalar>
int dead_code_restart(CodeBook<Scalar>& book, const Mat<Scalar>& recent_states,
                      Rng& rng, Scalar threshold_share = Scalar(1e-3)) {
  if (recent_states.rows() < 1 || recent_states.cols() != book.dim()) return 0;
  Scalar total = book.ema_counts.sum();
  if (total <= Scalar(0)) return 0;
  Scalar threshold = threshold_share * total / Scalar(book.size());
  int restarts = 0;
  for (int k = 0; k < book.size(); ++k) {
    if (book.ema_counts(k, 0) >= threshold) continue;
    int pick = rng.below_int(static_cast<int>(recent_states.rows()));
    book.codes.row(k) = recent_states.row(pick);
    book.ema_counts(k, 0) = Scalar(1);
    book.ema_sums.row(k) = recent_states.row(pick);
    ++restarts;
  }
  return restarts;
}

// Entropy (nats) of the normalized EMA usage distribution.
template <typename Scalar>
double codebook_usage_entropy(const CodeBook<Scalar>& book) {
  double total = static_cast<double>(book.ema_counts.sum());
  if (total <= 0) return 0;
  double ent = 0;
  for (int k = 0; k < book.size(); ++k) {
    double p = static_cast<double>(book.ema_counts(k, 0)) / total;
    if (p > 0) ent -= p * std::log(p);
  }
  return ent;
}

}  // namespace davam
