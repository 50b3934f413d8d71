// SPDX-License-Identifier: Apache-2.0
//
// Autoregressive priors over latent sequences: a residual stack of causal
// 1-D convolutions with a categorical head (index sequences) or a Gaussian
// head (continuous sequences). Causality comes from left zero-padding plus
// a one-position input shift, so position t sees exactly z_{1:t-1}; position
// one conditions on a learned start symbol only.

#pragma once

#include "davam/divergences.hpp"
#include "davam/params.hpp"
#include "davam/quantizer.hpp"

#include <string>
#include <vector>

namespace davam {

template <typename Scalar>
struct CausalConvLayer {
  std::vector<Tensor<Scalar>> taps;  // kernel entries, taps[j] applies to x_{t-j}
  Tensor<Scalar> bias;               // [1 x channels]
};

// Residual body shared by both heads: x <- x + relu(causal_conv(x)).
template <typename Scalar>
struct CausalConvBody {
  std::vector<CausalConvLayer<Scalar>> layers;
  int channels = 0;
  int kernel = 0;

  int receptive_field() const {
    return static_cast<int>(layers.size()) * (kernel - 1) + 1;
  }
};

template <typename Scalar>
CausalConvBody<Scalar> make_conv_body(ParameterRegistry<Scalar>& reg,
                                      const std::string& prefix, ParamGroup group,
                                      int layers, int kernel, int channels,
                                      Rng& rng, Scalar scale) {
  if (layers < 1 || kernel < 1 || channels < 1)
    throw ConfigError("conv body: layers, kernel, channels must be positive");
  CausalConvBody<Scalar> body;
  body.channels = channels;
  body.kernel = kernel;
  for (int l = 0; l < layers; ++l) {
    CausalConvLayer<Scalar> layer;
    for (int j = 0; j < kernel; ++j) {
      layer.taps.push_back(reg.uniform(
          prefix + ".conv" + std::to_string(l) + ".w" + std::to_string(j), group,
          channels, channels, rng, scale));
    }
    layer.bias = reg.constant(prefix + ".conv" + std::to_string(l) + ".b", group,
                              1, channels, Scalar(0));
    body.layers.push_back(std::move(layer));
  }
  return body;
}

// inputs[t] is [B x channels]; outputs keep the shape. Position t only ever
// reads inputs at positions <= t.
template <typename Scalar>
std::vector<Tensor<Scalar>> conv_body_forward(
    const CausalConvBody<Scalar>& body, std::vector<Tensor<Scalar>> x) {
  for (const auto& layer : body.layers) {
    std::vector<Tensor<Scalar>> next;
    next.reserve(x.size());
    for (std::size_t t = 0; t < x.size(); ++t) {
      Tensor<Scalar> acc = add(matmul(x[t], layer.taps[0]), layer.bias);
      for (int j = 1; j < body.kernel; ++j) {
        if (static_cast<int>(t) - j < 0) break;  // left zero padding
        acc = add(acc, matmul(x[t - static_cast<std::size_t>(j)],
                              layer.taps[static_cast<std::size_t>(j)]));
      }
      next.push_back(add(x[t], relu(acc)));
    }
    x = std::move(next);
  }
  return x;
}

// ---------------------------------------------------------------------------
// Categorical prior over code indices
// ---------------------------------------------------------------------------

template <typename Scalar>
struct PriorOutput {
  Tensor<Scalar> gamma;  // [T x K], rows are categorical parameters
};

template <typename Scalar>
struct CausalConvStack {
  Tensor<Scalar> embed;  // [K x channels] index embeddings
  Tensor<Scalar> start;  // [1 x channels] learned start symbol
  CausalConvBody<Scalar> body;
  Tensor<Scalar> out_w;  // [channels x K], zero-initialized: untrained = uniform
  Tensor<Scalar> out_b;  // [1 x K]
  int codebook_size = 0;

  int receptive_field() const { return body.receptive_field(); }
};

template <typename Scalar>
CausalConvStack<Scalar> make_categorical_prior(ParameterRegistry<Scalar>& reg,
                                               const std::string& prefix,
                                               int codebook_size, int layers,
                                               int kernel, int channels, Rng& rng,
                                               Scalar scale) {
  CausalConvStack<Scalar> stack;
  stack.codebook_size = codebook_size;
  stack.embed = reg.uniform(prefix + ".embed", ParamGroup::Psi, codebook_size,
                            channels, rng, scale);
  stack.start = reg.uniform(prefix + ".start", ParamGroup::Psi, 1, channels, rng, scale);
  stack.body = make_conv_body(reg, prefix, ParamGroup::Psi, layers, kernel,
                              channels, rng, scale);
  stack.out_w = reg.constant(prefix + ".out_w", ParamGroup::Psi, channels,
                             codebook_size, Scalar(0));
  stack.out_b = reg.constant(prefix + ".out_b", ParamGroup::Psi, 1, codebook_size,
                             Scalar(0));
  return stack;
}

// Shifted input embeddings for a batch of index sequences: position 0 gets
// the start symbol, position t gets embed(z_{t-1}).
template <typename Scalar>
std::vector<Tensor<Scalar>> shifted_index_inputs(const CausalConvStack<Scalar>& stack,
                                                 const IntMat& z) {
  const int batch = static_cast<int>(z.rows());
  const int t_len = static_cast<int>(z.cols());
  std::vector<Tensor<Scalar>> inputs;
  inputs.reserve(static_cast<std::size_t>(t_len));
  Mat<Scalar> ones = Mat<Scalar>::Ones(batch, 1);
  for (int t = 0; t < t_len; ++t) {
    if (t == 0) {
      inputs.push_back(matmul(Tensor<Scalar>::from(ones), stack.start));
      continue;
    }
    std::vector<int> ids(static_cast<std::size_t>(batch));
    for (int b = 0; b < batch; ++b) {
      int id = z(b, t - 1);
      if (id < 0 || id >= stack.codebook_size)
        throw ContractError("prior_forward: index out of range");
      ids[static_cast<std::size_t>(b)] = id;
    }
    inputs.push_back(gather_rows(stack.embed, ids));
  }
  return inputs;
}

// Teacher-forced logits over a padded batch of index sequences, one
// [B x K] tensor per position.
template <typename Scalar>
std::vector<Tensor<Scalar>> prior_logits(const CausalConvStack<Scalar>& stack,
                                         const IntMat& z) {
  auto features = conv_body_forward(stack.body, shifted_index_inputs(stack, z));
  std::vector<Tensor<Scalar>> logits;
  logits.reserve(features.size());
  for (auto& f : features)
    logits.push_back(add(matmul(f, stack.out_w), stack.out_b));
  return logits;
}

// Single-sequence form: gamma_t depends only on z_{1:t-1}.
template <typename Scalar>
PriorOutput<Scalar> prior_forward(const CausalConvStack<Scalar>& stack,
                                  const LatentSequence& z) {
  if (z.empty()) throw ContractError("prior_forward: empty sequence");
  IntMat zm(1, static_cast<int>(z.size()));
  for (std::size_t t = 0; t < z.size(); ++t) {
    if (z[t] < 0 || z[t] >= stack.codebook_size)
      throw ContractError("prior_forward: index out of range");
    zm(0, static_cast<int>(t)) = z[t];
  }
  auto logits = prior_logits(stack, zm);
  std::vector<Tensor<Scalar>> rows;
  rows.reserve(logits.size());
  for (auto& l : logits) rows.push_back(softmax_rows(l));
  // Stack the [1 x K] rows into [T x K].
  std::vector<Tensor<Scalar>> padded;
  padded.reserve(rows.size());
  // select_steps wants per-row choices over same-shaped steps; replicate the
  // single row across T rows first.
  Mat<Scalar> gamma(static_cast<Eigen::Index>(rows.size()), stack.codebook_size);
  bool need_graph = false;
  for (const auto& r : rows)
    if (r.requires_grad()) need_graph = true;
  if (!need_graph) {
    for (std::size_t t = 0; t < rows.size(); ++t)
      gamma.row(static_cast<Eigen::Index>(t)) = rows[t].value().row(0);
    return {Tensor<Scalar>::from(std::move(gamma))};
  }
  // Differentiable stacking via concat along columns of transposes is
  // avoided; instead reuse select_steps with a per-row step map after
  // broadcasting each row to T rows.
  std::vector<Tensor<Scalar>> broadcast;
  Mat<Scalar> ones = Mat<Scalar>::Ones(static_cast<Eigen::Index>(rows.size()), 1);
  Tensor<Scalar> ones_t = Tensor<Scalar>::from(ones);
  std::vector<int> step_of_row(rows.size());
  for (std::size_t t = 0; t < rows.size(); ++t) {
    broadcast.push_back(matmul(ones_t, rows[t]));
    step_of_row[t] = static_cast<int>(t);
  }
  return {select_steps(broadcast, step_of_row)};
}

// Stage-two objective for one sequence; numerically identical to
// discrete_kl by sharing its implementation.
template <typename Scalar>
Tensor<Scalar> prior_nll(const LatentSequence& z, const PriorOutput<Scalar>& out) {
  return discrete_kl(z, out.gamma);
}

// ---------------------------------------------------------------------------
// Ancestral sampling with incremental per-layer caches
// ---------------------------------------------------------------------------

template <typename Scalar>
struct ConvSamplerState {
  // hist[l][j] holds the layer-l input at position t-1-j, newest first.
  std::vector<std::vector<Mat<Scalar>>> hist;

  explicit ConvSamplerState(const CausalConvBody<Scalar>& body)
      : hist(body.layers.size()) {}
};

// One incremental position through the body, on raw values.
template <typename Scalar>
Mat<Scalar> conv_body_step(const CausalConvBody<Scalar>& body,
                           ConvSamplerState<Scalar>& state, Mat<Scalar> in) {
  for (std::size_t l = 0; l < body.layers.size(); ++l) {
    const auto& layer = body.layers[l];
    Mat<Scalar> acc = in * layer.taps[0].value();
    acc.rowwise() += layer.bias.value().row(0);
    auto& h = state.hist[l];
    for (int j = 1; j < body.kernel; ++j) {
      if (static_cast<int>(h.size()) < j) break;
      acc += h[static_cast<std::size_t>(j - 1)] *
             layer.taps[static_cast<std::size_t>(j)].value();
    }
    h.insert(h.begin(), in);
    if (static_cast<int>(h.size()) > body.kernel - 1) h.pop_back();
    in += acc.cwiseMax(Scalar(0));
  }
  return in;
}

// Draws n sequences of length t_len left to right; seed-deterministic.
// temperature scales the categorical parameters as gamma^(1/temperature)
// renormalized; temperature 0 is the greedy argmax chain.
template <typename Scalar>
std::vector<LatentSequence> sample_prior_batch(const CausalConvStack<Scalar>& stack,
                                               int n, int t_len, double temperature,
                                               std::uint64_t seed) {
  if (t_len < 1) throw ContractError("sample_prior: T must be >= 1");
  if (n < 0) throw ContractError("sample_prior: n must be >= 0");
  if (temperature < 0) throw ConfigError("sample_prior: negative temperature");
  std::vector<LatentSequence> out(static_cast<std::size_t>(n),
                                  LatentSequence(static_cast<std::size_t>(t_len)));
  if (n == 0) return out;
  Rng rng(seed);
  ConvSamplerState<Scalar> state(stack.body);
  Mat<Scalar> in = stack.start.value().replicate(n, 1);
  for (int t = 0; t < t_len; ++t) {
    Mat<Scalar> feat = conv_body_step(stack.body, state, std::move(in));
    Mat<Scalar> logits = feat * stack.out_w.value();
    logits.rowwise() += stack.out_b.value().row(0);
    for (int b = 0; b < n; ++b) {
      int pick;
      if (temperature < 1e-12) {
        Eigen::Index arg = 0;
        logits.row(b).maxCoeff(&arg);
        pick = static_cast<int>(arg);
      } else {
        // softmax(logits / temperature) == gamma^(1/temperature) renormalized
        Eigen::Array<double, 1, Eigen::Dynamic> l =
            logits.row(b).template cast<double>().array() / temperature;
        l -= l.maxCoeff();
        Eigen::Array<double, 1, Eigen::Dynamic> p = l.exp();
        p /= p.sum();
        double u = rng.uniform();
        double acc = 0;
        pick = stack.codebook_size - 1;
        for (int k = 0; k < stack.codebook_size; ++k) {
          acc += p(k);
          if (u < acc) {
            pick = k;
            break;
          }
        }
      }
      out[static_cast<std::size_t>(b)][static_cast<std::size_t>(t)] = pick;
    }
    if (t + 1 < t_len) {
      Mat<Scalar> next(n, stack.body.channels);
      for (int b = 0; b < n; ++b)
        next.row(b) = stack.embed.value().row(
            out[static_cast<std::size_t>(b)][static_cast<std::size_t>(t)]);
      in = std::move(next);
    }
  }
  return out;
}

template <typename Scalar>
LatentSequence sample_prior(const CausalConvStack<Scalar>& stack, int t_len,
                            double temperature, std::uint64_t seed) {
  return sample_prior_batch(stack, 1, t_len, temperature, seed)[0];
}

// ---------------------------------------------------------------------------
// Gaussian autoregressive head (used inside GAVAM)
// ---------------------------------------------------------------------------

template <typename Scalar>
struct GaussianPriorNet {
  Tensor<Scalar> in_w;   // [D x channels]
  Tensor<Scalar> in_b;   // [1 x channels]
  Tensor<Scalar> start;  // [1 x channels]
  CausalConvBody<Scalar> body;
  Tensor<Scalar> out_w;  // [channels x 2D] -> (mu_hat, raw sigma_hat)
  Tensor<Scalar> out_b;  // [1 x 2D]
  int latent_dim = 0;
};

template <typename Scalar>
GaussianPriorNet<Scalar> make_gaussian_prior(ParameterRegistry<Scalar>& reg,
                                             const std::string& prefix,
                                             int latent_dim, int layers, int kernel,
                                             int channels, Rng& rng, Scalar scale) {
  GaussianPriorNet<Scalar> net;
  net.latent_dim = latent_dim;
  net.in_w = reg.uniform(prefix + ".in_w", ParamGroup::Psi, latent_dim, channels,
                         rng, scale);
  net.in_b = reg.constant(prefix + ".in_b", ParamGroup::Psi, 1, channels, Scalar(0));
  net.start = reg.uniform(prefix + ".start", ParamGroup::Psi, 1, channels, rng, scale);
  net.body = make_conv_body(reg, prefix, ParamGroup::Psi, layers, kernel, channels,
                            rng, scale);
  net.out_w = reg.constant(prefix + ".out_w", ParamGroup::Psi, channels,
                           2 * latent_dim, Scalar(0));
  net.out_b = reg.constant(prefix + ".out_b", ParamGroup::Psi, 1, 2 * latent_dim,
                           Scalar(0));
  return net;
}

template <typename Scalar>
struct GaussianPriorOut {
  std::vector<Tensor<Scalar>> mu_hat;     // per step, [B x D]
  std::vector<Tensor<Scalar>> sigma_hat;  // per step, [B x D], positive
};

// Teacher-forced on a continuous prefix sequence: step t consumes z_{t-1}
// (the start symbol at t = 0) and emits (mu_hat_t, sigma_hat_t).
template <typename Scalar>
GaussianPriorOut<Scalar> gaussian_prior_forward(
    const GaussianPriorNet<Scalar>& net, const std::vector<Tensor<Scalar>>& z,
    int batch) {
  std::vector<Tensor<Scalar>> inputs;
  inputs.reserve(z.size() + 1);
  Mat<Scalar> ones = Mat<Scalar>::Ones(batch, 1);
  for (std::size_t t = 0; t < z.size(); ++t) {
    if (t == 0) {
      inputs.push_back(matmul(Tensor<Scalar>::from(ones), net.start));
    } else {
      inputs.push_back(add(matmul(z[t - 1], net.in_w), net.in_b));
    }
  }
  auto features = conv_body_forward(net.body, std::move(inputs));
  GaussianPriorOut<Scalar> out;
  for (auto& f : features) {
    Tensor<Scalar> heads = add(matmul(f, net.out_w), net.out_b);
    out.mu_hat.push_back(slice_cols(heads, 0, net.latent_dim));
    out.sigma_hat.push_back(add_const(
        softplus(slice_cols(heads, net.latent_dim, net.latent_dim)), Scalar(1e-6)));
  }
  return out;
}

// Ancestral draw of a continuous latent sequence [T x D], incremental.
template <typename Scalar>
Mat<Scalar> sample_gaussian_prior(const GaussianPriorNet<Scalar>& net, int t_len,
                                  Rng& rng) {
  if (t_len < 1) throw ContractError("sample_gaussian_prior: T must be >= 1");
  ConvSamplerState<Scalar> state(net.body);
  Mat<Scalar> z(t_len, net.latent_dim);
  Mat<Scalar> in = net.start.value();
  for (int t = 0; t < t_len; ++t) {
    Mat<Scalar> feat = conv_body_step(net.body, state, std::move(in));
    Mat<Scalar> heads = feat * net.out_w.value();
    heads.rowwise() += net.out_b.value().row(0);
    for (int d = 0; d < net.latent_dim; ++d) {
      Scalar mu = heads(0, d);
      Scalar raw = heads(0, net.latent_dim + d);
      Scalar sd = (raw > Scalar(30) ? raw : std::log1p(std::exp(raw))) + Scalar(1e-6);
      z(t, d) = mu + sd * static_cast<Scalar>(rng.normal());
    }
    if (t + 1 < t_len) {
      in = z.row(t) * net.in_w.value();
      in.rowwise() += net.in_b.value().row(0);
    }
  }
  return z;
}

// Spec-facing single-step form: next-step parameters given the prefix.
template <typename Scalar>
GaussianPriorStep<Scalar> gaussian_prior_step(const GaussianPriorNet<Scalar>& net,
                                              const Tensor<Scalar>& z_prefix) {
  std::vector<Tensor<Scalar>> steps;
  for (Eigen::Index t = 0; t < z_prefix.rows(); ++t)
    steps.push_back(slice_rows(z_prefix, t, 1));
  steps.push_back(Tensor<Scalar>::zeros(1, net.latent_dim));  // shifted out
  auto out = gaussian_prior_forward(net, steps, 1);
  return {out.mu_hat.back(), out.sigma_hat.back()};
}

}  // namespace davam
