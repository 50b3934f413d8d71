// SPDX-License-Identifier: Apache-2.0
//
// KL divergences shared by the model losses and the prior objective.

#pragma once

#include "davam/autodiff.hpp"
#include "davam/quantizer.hpp"

#include <iostream>
#include <vector>

namespace davam {

// Per-step Gaussian posterior over a sentence: [T x D] means and strictly
// positive deviations.
template <typename Scalar>
struct GaussianPosterior {
  Tensor<Scalar> mu;
  Tensor<Scalar> sigma;
};

template <typename Scalar>
struct GaussianPriorStep {
  Tensor<Scalar> mu_hat;     // [1 x D]
  Tensor<Scalar> sigma_hat;  // [1 x D]
};

// Elementwise 0.5 * (log(s_hat^2 / s^2) - 1 + (s^2 + (mu_hat - mu)^2) / s_hat^2).
// All four arguments share a shape; sigma inputs must be positive.
template <typename Scalar>
Tensor<Scalar> gaussian_kl_terms(const Tensor<Scalar>& mu,
                                 const Tensor<Scalar>& sigma,
                                 const Tensor<Scalar>& mu_hat,
                                 const Tensor<Scalar>& sigma_hat) {
  if ((sigma.value().array() <= Scalar(0)).any() ||
      (sigma_hat.value().array() <= Scalar(0)).any())
    throw NumericError("gaussian_kl: non-positive deviation");
  Tensor<Scalar> var = square(sigma);
  Tensor<Scalar> var_hat = square(sigma_hat);
  Tensor<Scalar> log_ratio = sub(log(var_hat), log(var));
  Tensor<Scalar> diff_sq = square(sub(mu_hat, mu));
  Tensor<Scalar> ratio = div(add(var, diff_sq), var_hat);
  return mul_const(add_const(add(log_ratio, ratio), Scalar(-1)), Scalar(0.5));
}

// Summed over all steps and dimensions for one sentence.
template <typename Scalar>
Tensor<Scalar> gaussian_kl(const GaussianPosterior<Scalar>& post,
                           const std::vector<GaussianPriorStep<Scalar>>& prior) {
  if (static_cast<Eigen::Index>(prior.size()) != post.mu.rows())
    throw ContractError("gaussian_kl: step count mismatch");
  Tensor<Scalar> total;
  for (std::size_t t = 0; t < prior.size(); ++t) {
    if (prior[t].mu_hat.cols() != post.mu.cols())
      throw ContractError("gaussian_kl: dimension mismatch");
    Tensor<Scalar> mu_t = slice_rows(post.mu, static_cast<Eigen::Index>(t), 1);
    Tensor<Scalar> sigma_t = slice_rows(post.sigma, static_cast<Eigen::Index>(t), 1);
    Tensor<Scalar> term = sum_all(
        gaussian_kl_terms(mu_t, sigma_t, prior[t].mu_hat, prior[t].sigma_hat));
    total = (t == 0) ? term : add(total, term);
  }
  return total;
}

// -sum_t log gamma_{t, z_t}. A zero entry is clamped at 1e-10 with a warning:
// an infinite divergence signals an untrained prior, not a crash.
template <typename Scalar>
Tensor<Scalar> discrete_kl(const LatentSequence& z, const Tensor<Scalar>& gamma) {
  if (static_cast<Eigen::Index>(z.size()) != gamma.rows())
    throw ContractError("discrete_kl: sequence length mismatch");
  for (Eigen::Index t = 0; t < gamma.rows(); ++t) {
    Scalar s = gamma.value().row(t).sum();
    if (std::abs(s - Scalar(1)) > Scalar(1e-6) ||
        gamma.value().row(t).minCoeff() < Scalar(0))
      throw ContractError("discrete_kl: gamma row is not a distribution");
  }
  Tensor<Scalar> picked = pick_per_row(gamma, z);
  if ((picked.value().array() <= Scalar(0)).any())
    std::cerr << "discrete_kl: zero prior mass on an observed index, "
                 "clamping at 1e-10\n";
  constexpr Scalar kFloor = Scalar(1e-10);
  return neg(sum_all(log(clamp_min(picked, kFloor))));
}

}  // namespace davam
