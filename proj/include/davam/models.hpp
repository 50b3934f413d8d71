// SPDX-License-Identifier: Apache-2.0
//
// Model assemblies and loss algebra. One Model type covers the five kinds:
//
//   davam    quantized per-step latents, attention over e_{z_{1:T}},
//            two-stage training (categorical conv prior fits the indices)
//   davam_q  quantized last-state latent only, no attention
//   gavam    Gaussian per-step latents with a jointly trained Gaussian
//            autoregressive prior, attention over sampled z
//   vae      single Gaussian latent from the last state, N(0, I) prior
//   lstm_lm  decoder-only language model
//
// Stage-one totals: rec + commit (quantized kinds), rec + kl (gavam),
// rec + kl_weight * kl (vae), rec (lstm_lm); all reported as means per
// sentence of per-sentence sums.

#pragma once

#include "davam/corpus.hpp"
#include "davam/divergences.hpp"
#include "davam/prior.hpp"
#include "davam/quantizer.hpp"
#include "davam/seqnet.hpp"

#include <string>
#include <vector>

namespace davam {

enum class ModelKind { Davam, DavamQ, Gavam, Vae, LstmLm };

inline const char* model_kind_name(ModelKind k) {
  switch (k) {
    case ModelKind::Davam: return "davam";
    case ModelKind::DavamQ: return "davam_q";
    case ModelKind::Gavam: return "gavam";
    case ModelKind::Vae: return "vae";
    case ModelKind::LstmLm: return "lstm_lm";
  }
  return "?";
}

inline ModelKind parse_model_kind(const std::string& s) {
  if (s == "davam") return ModelKind::Davam;
  if (s == "davam_q") return ModelKind::DavamQ;
  if (s == "gavam") return ModelKind::Gavam;
  if (s == "vae") return ModelKind::Vae;
  if (s == "lstm_lm") return ModelKind::LstmLm;
  throw ConfigError("unknown model kind: " + s);
}

inline bool is_quantized(ModelKind k) {
  return k == ModelKind::Davam || k == ModelKind::DavamQ;
}
inline bool has_attention(ModelKind k) {
  return k == ModelKind::Davam || k == ModelKind::Gavam;
}
inline bool has_encoder(ModelKind k) { return k != ModelKind::LstmLm; }

struct ModelConfig {
  ModelKind kind = ModelKind::Davam;
  int vocab_size = 0;
  int embed_dim = 128;
  int hidden_dim = 256;
  int latent_dim = 32;
  int attn_dim = 256;  // defaults to hidden_dim upstream
  int codebook_size = 512;
  int prior_layers = 16;
  int prior_kernel = 3;
  int prior_channels = 64;
  double ema_decay = 0.99;
  double ema_epsilon = 1e-5;
  double init_scale = 0.1;

  void validate() const {
    if (vocab_size <= Vocab::kReserved)
      throw ConfigError("model config: vocab_size too small");
    for (int v : {embed_dim, hidden_dim, latent_dim, attn_dim, codebook_size,
                  prior_layers, prior_kernel, prior_channels})
      if (v < 1) throw ConfigError("model config: dimensions must be positive");
    if (ema_decay < 0 || ema_decay >= 1)
      throw ConfigError("model config: ema_decay must be in [0, 1)");
  }
};

template <typename Scalar>
struct LossBreakdown {
  Scalar rec = 0;
  Scalar kl = 0;
  Scalar commit = 0;
  Scalar total = 0;
};

// Frozen snapshot of the quantizer decisions: per-step code assignments
// plus the quantization residuals e_{z} - h at freeze time. Re-running the
// forward against a snapshot turns the straight-through estimator into the
// translated identity h + (e0 - h0), which reproduces the same loss value
// and the same analytic gradient while being a genuinely differentiable
// function of the parameters. Central differences check that function.
template <typename Scalar>
struct FrozenQuantization {
  std::vector<LatentSequence> indices;
  std::vector<Mat<Scalar>> residuals;
};

template <typename Scalar>
struct ForwardOptions {
  Scalar beta = Scalar(0);        // commitment weight, quantized kinds
  Scalar kl_weight = Scalar(1);   // KL annealing weight, vae only
  Rng* noise_rng = nullptr;       // required by gavam/vae unless deterministic
  bool deterministic_latent = false;  // z = mu (evaluation convention)
  const FrozenQuantization<Scalar>* frozen = nullptr;
  bool keep_logits = false;
};

template <typename Scalar>
struct ForwardResult {
  Tensor<Scalar> total;  // graph root, mean per sentence
  LossBreakdown<Scalar> loss;
  Mat<Scalar> sentence_nll;     // [B x 1] summed token NLL per sentence
  Mat<Scalar> sentence_kl;      // [B x 1]
  Mat<Scalar> sentence_commit;  // [B x 1], beta-weighted
  // Quantized kinds: assignments per step (row = batch entry), plus the
  // valid pre-quantization rows for the EMA codebook update.
  std::vector<LatentSequence> step_indices;
  Mat<Scalar> ema_rows;
  LatentSequence ema_indices;
  FrozenQuantization<Scalar> frozen;     // snapshot for gradient checks
  std::vector<Mat<Scalar>> step_logits;  // when keep_logits
};

template <typename Scalar>
class Model {
 public:
  Model(const ModelConfig& cfg, std::uint64_t init_seed) : cfg_(cfg) {
    cfg_.validate();
    Rng rng(init_seed);
    build(rng);
  }

  const ModelConfig& config() const { return cfg_; }
  ModelKind kind() const { return cfg_.kind; }
  ParameterRegistry<Scalar>& params() { return reg_; }
  const ParameterRegistry<Scalar>& params() const { return reg_; }
  CodeBook<Scalar>& book() { return book_; }
  const CodeBook<Scalar>& book() const { return book_; }
  CausalConvStack<Scalar>& index_prior() { return prior_; }
  const CausalConvStack<Scalar>& index_prior() const { return prior_; }
  GaussianPriorNet<Scalar>& gaussian_prior() { return gprior_; }
  const GaussianPriorNet<Scalar>& gaussian_prior() const { return gprior_; }
  const Embedding<Scalar>& embedding() const { return embed_; }
  const DecoderParams<Scalar>& decoder() const { return dec_; }
  const AttentionParams<Scalar>& attention_params() const { return attn_; }

  // Latent index sequences of a batch under the frozen posterior: per-step
  // nearest codes over valid positions (davam), or the single last-state
  // code (davam_q).
  std::vector<LatentSequence> posterior_indices(const Batch& batch) const {
    NoGradGuard ng;
    if (!is_quantized(cfg_.kind))
      throw ContractError("posterior_indices: not a quantized model");
    auto enc = encode(batch, embed_, enc_);
    std::vector<LatentSequence> out(static_cast<std::size_t>(batch.size()));
    if (cfg_.kind == ModelKind::DavamQ) {
      Tensor<Scalar> last = last_valid_latent(enc, batch);
      LatentSequence z = assign_codes(last.value(), book_);
      for (int b = 0; b < batch.size(); ++b)
        out[static_cast<std::size_t>(b)] = {z[static_cast<std::size_t>(b)]};
      return out;
    }
    for (int t = 0; t < batch.max_len(); ++t) {
      Tensor<Scalar> lat = project_latent(enc.h[static_cast<std::size_t>(t)]);
      LatentSequence z = assign_codes(lat.value(), book_);
      for (int b = 0; b < batch.size(); ++b)
        if (batch.mask(b, t))
          out[static_cast<std::size_t>(b)].push_back(z[static_cast<std::size_t>(b)]);
    }
    return out;
  }

  ForwardResult<Scalar> forward(const Batch& batch,
                                const ForwardOptions<Scalar>& opt) const {
    switch (cfg_.kind) {
      case ModelKind::Davam: return davam_forward(batch, opt);
      case ModelKind::DavamQ: return davam_q_forward(batch, opt);
      case ModelKind::Gavam: return gavam_forward(batch, opt);
      case ModelKind::Vae: return vae_forward(batch, opt);
      case ModelKind::LstmLm: return lstm_lm_forward(batch, opt);
    }
    throw ContractError("forward: unreachable");
  }

  // Exposed pieces reused by generation and evaluation.
  Tensor<Scalar> project_latent(const Tensor<Scalar>& h) const {
    return add(matmul(h, enc_proj_w_), enc_proj_b_);
  }

  Tensor<Scalar> last_valid_latent(const EncoderStates<Scalar>& enc,
                                   const Batch& batch) const {
    std::vector<int> last(static_cast<std::size_t>(batch.size()));
    for (int b = 0; b < batch.size(); ++b)
      last[static_cast<std::size_t>(b)] = batch.lengths[static_cast<std::size_t>(b)] - 1;
    return project_latent(select_steps(enc.h, last));
  }

  LstmState<Scalar> decoder_init_state(const Tensor<Scalar>& latent) const {
    if (cfg_.kind != ModelKind::DavamQ && cfg_.kind != ModelKind::Vae)
      return lstm_zero_state(dec_.lstm, static_cast<int>(latent.rows()));
    Tensor<Scalar> h0 = tanh(add(matmul(latent, init_w_), init_b_));
    return {h0, Tensor<Scalar>::zeros(latent.rows(), dec_.lstm.hidden_dim)};
  }

  struct GaussianHeads {
    Tensor<Scalar> mu;
    Tensor<Scalar> sigma;
  };
  GaussianHeads gaussian_heads(const Tensor<Scalar>& h) const {
    Tensor<Scalar> mu = add(matmul(h, mu_w_), mu_b_);
    Tensor<Scalar> sigma = add_const(
        softplus(add(matmul(h, sigma_w_), sigma_b_)), Scalar(1e-6));
    return {mu, sigma};
  }

  const LstmParams<Scalar>& encoder_params() const { return enc_; }

 private:
  void build(Rng& rng) {
    const Scalar s = static_cast<Scalar>(cfg_.init_scale);
    embed_ = make_embedding(reg_, "embed", ParamGroup::Theta, cfg_.vocab_size,
                            cfg_.embed_dim, rng, s);
    if (has_encoder(cfg_.kind))
      enc_ = make_lstm(reg_, "enc.lstm", ParamGroup::Phi, cfg_.embed_dim,
                       cfg_.hidden_dim, rng, s);
    if (is_quantized(cfg_.kind)) {
      enc_proj_w_ = reg_.uniform("enc.proj.w", ParamGroup::Phi, cfg_.hidden_dim,
                                 cfg_.latent_dim, rng, s);
      enc_proj_b_ = reg_.constant("enc.proj.b", ParamGroup::Phi, 1,
                                  cfg_.latent_dim, Scalar(0));
    }
    if (cfg_.kind == ModelKind::Gavam || cfg_.kind == ModelKind::Vae) {
      mu_w_ = reg_.uniform("enc.mu.w", ParamGroup::Phi, cfg_.hidden_dim,
                           cfg_.latent_dim, rng, s);
      mu_b_ = reg_.constant("enc.mu.b", ParamGroup::Phi, 1, cfg_.latent_dim,
                            Scalar(0));
      sigma_w_ = reg_.uniform("enc.sigma.w", ParamGroup::Phi, cfg_.hidden_dim,
                              cfg_.latent_dim, rng, s);
      sigma_b_ = reg_.constant("enc.sigma.b", ParamGroup::Phi, 1, cfg_.latent_dim,
                               Scalar(0));
    }
    if (has_attention(cfg_.kind))
      attn_ = make_attention(reg_, "attn", ParamGroup::Theta, cfg_.latent_dim,
                             cfg_.hidden_dim, cfg_.attn_dim, rng, s);
    int context_dim = cfg_.kind == ModelKind::LstmLm ? 0 : cfg_.latent_dim;
    dec_ = make_decoder(reg_, "dec", ParamGroup::Theta, cfg_.embed_dim, context_dim,
                        cfg_.hidden_dim, cfg_.vocab_size, rng, s);
    if (cfg_.kind == ModelKind::DavamQ || cfg_.kind == ModelKind::Vae) {
      init_w_ = reg_.uniform("dec.init.w", ParamGroup::Theta, cfg_.latent_dim,
                             cfg_.hidden_dim, rng, s);
      init_b_ = reg_.constant("dec.init.b", ParamGroup::Theta, 1, cfg_.hidden_dim,
                              Scalar(0));
    }
    if (is_quantized(cfg_.kind)) {
      book_ = make_codebook<Scalar>(cfg_.codebook_size, cfg_.latent_dim, rng,
                                    static_cast<Scalar>(cfg_.init_scale),
                                    static_cast<Scalar>(cfg_.ema_decay),
                                    static_cast<Scalar>(cfg_.ema_epsilon));
      prior_ = make_categorical_prior(reg_, "prior", cfg_.codebook_size,
                                      cfg_.prior_layers, cfg_.prior_kernel,
                                      cfg_.prior_channels, rng, s);
    }
    if (cfg_.kind == ModelKind::Gavam)
      gprior_ = make_gaussian_prior(reg_, "prior", cfg_.latent_dim,
                                    cfg_.prior_layers, cfg_.prior_kernel,
                                    cfg_.prior_channels, rng, s);
  }

  Mat<Scalar> mask_col(const Batch& batch, int t) const {
    Mat<Scalar> col(batch.size(), 1);
    for (int b = 0; b < batch.size(); ++b)
      col(b, 0) = static_cast<Scalar>(batch.mask(b, t));
    return col;
  }

  Mat<Scalar> scalar_mask(const Batch& batch) const {
    Mat<Scalar> m(batch.size(), batch.max_len());
    for (int b = 0; b < batch.size(); ++b)
      for (int t = 0; t < batch.max_len(); ++t)
        m(b, t) = static_cast<Scalar>(batch.mask(b, t));
    return m;
  }

  // Teacher-forced decoding against per-step contexts. values/keys empty
  // means constant context (or none when context_dim is 0).
  struct DecodeAccum {
    Tensor<Scalar> nll;  // [B x 1]
    std::vector<Mat<Scalar>> logits;
  };
  DecodeAccum teacher_forced_decode(const Batch& batch,
                                    const std::vector<Tensor<Scalar>>& values,
                                    const Tensor<Scalar>& const_context,
                                    LstmState<Scalar> state,
                                    bool keep_logits) const {
    const int b_sz = batch.size();
    Mat<Scalar> enc_mask = has_attention(cfg_.kind) ? scalar_mask(batch) : Mat<Scalar>();
    AttentionKeys<Scalar> keys;
    if (has_attention(cfg_.kind)) keys = attention_keys(values, attn_);
    DecodeAccum acc;
    for (int i = 0; i + 1 < batch.max_len(); ++i) {
      std::vector<int> prev(static_cast<std::size_t>(b_sz));
      std::vector<int> target(static_cast<std::size_t>(b_sz));
      std::vector<Scalar> w(static_cast<std::size_t>(b_sz));
      for (int b = 0; b < b_sz; ++b) {
        prev[static_cast<std::size_t>(b)] = batch.token_ids(b, i);
        target[static_cast<std::size_t>(b)] = batch.token_ids(b, i + 1);
        w[static_cast<std::size_t>(b)] = static_cast<Scalar>(batch.mask(b, i + 1));
      }
      Tensor<Scalar> context;
      if (has_attention(cfg_.kind))
        context = attend(values, keys, state.h, enc_mask, attn_).context;
      else if (dec_.context_dim > 0)
        context = const_context;
      auto out = decode_step(prev, context, state, embed_, dec_);
      state = out.state;
      Tensor<Scalar> nll_col = cross_entropy_rows(out.logits, target, w);
      acc.nll = (i == 0) ? nll_col : add(acc.nll, nll_col);
      if (keep_logits) acc.logits.push_back(out.logits.value());
    }
    return acc;
  }

  ForwardResult<Scalar> finish(const Batch& batch, ForwardResult<Scalar> r,
                               const Tensor<Scalar>& nll,
                               const Tensor<Scalar>& kl,
                               const Tensor<Scalar>& commit,
                               Scalar kl_weight) const {
    const Scalar inv_b = Scalar(1) / static_cast<Scalar>(batch.size());
    Tensor<Scalar> total = nll;
    if (commit.valid()) total = add(total, commit);
    if (kl.valid()) total = add(total, mul_const(kl, kl_weight));
    r.total = mul_const(sum_all(total), inv_b);

    r.sentence_nll = nll.value();
    r.loss.rec = nll.value().sum() * inv_b;
    if (kl.valid()) {
      r.sentence_kl = kl.value();
      r.loss.kl = kl.value().sum() * inv_b;
    } else {
      r.sentence_kl = Mat<Scalar>::Zero(batch.size(), 1);
    }
    if (commit.valid()) {
      r.sentence_commit = commit.value();
      r.loss.commit = commit.value().sum() * inv_b;
    } else {
      r.sentence_commit = Mat<Scalar>::Zero(batch.size(), 1);
    }
    r.loss.total = r.total.item();
    if (!std::isfinite(static_cast<double>(r.loss.total)))
      throw NumericError("forward: non-finite loss");
    return r;
  }

  // --- davam: quantize every step, attend over the codes -----------------
  ForwardResult<Scalar> davam_forward(const Batch& batch,
                                      const ForwardOptions<Scalar>& opt) const {
    ForwardResult<Scalar> r;
    auto enc = encode(batch, embed_, enc_);
    std::vector<Tensor<Scalar>> values;
    Tensor<Scalar> commit_acc;
    std::vector<Mat<Scalar>> ema_rows;
    for (int t = 0; t < batch.max_len(); ++t) {
      Tensor<Scalar> lat = project_latent(enc.h[static_cast<std::size_t>(t)]);
      LatentSequence z;
      if (opt.frozen) {
        z = opt.frozen->indices[static_cast<std::size_t>(t)];
        values.push_back(add(
            lat, Tensor<Scalar>::from(opt.frozen->residuals[static_cast<std::size_t>(t)])));
      } else {
        z = assign_codes(lat.value(), book_);
        values.push_back(quantize_with_indices(lat, book_, z));
      }
      r.step_indices.push_back(z);

      Mat<Scalar> picked(batch.size(), cfg_.latent_dim);
      for (int b = 0; b < batch.size(); ++b)
        picked.row(b) = book_.codes.row(z[static_cast<std::size_t>(b)]);
      if (!opt.frozen) {
        r.frozen.indices.push_back(z);
        r.frozen.residuals.push_back(picked - lat.value());
      }
      Tensor<Scalar> commit_col = mul(
          row_sum(square(sub(lat, Tensor<Scalar>::from(picked)))),
          Tensor<Scalar>::from(mask_col(batch, t)));
      commit_acc = (t == 0) ? commit_col : add(commit_acc, commit_col);

      for (int b = 0; b < batch.size(); ++b) {
        if (!batch.mask(b, t)) continue;
        ema_rows.push_back(lat.value().row(b));
        r.ema_indices.push_back(z[static_cast<std::size_t>(b)]);
      }
    }
    r.ema_rows.resize(static_cast<Eigen::Index>(ema_rows.size()), cfg_.latent_dim);
    for (std::size_t i = 0; i < ema_rows.size(); ++i)
      r.ema_rows.row(static_cast<Eigen::Index>(i)) = ema_rows[i];

    auto dec = teacher_forced_decode(batch, values, Tensor<Scalar>(),
                                     lstm_zero_state(dec_.lstm, batch.size()),
                                     opt.keep_logits);
    r.step_logits = std::move(dec.logits);
    Tensor<Scalar> commit = mul_const(commit_acc, opt.beta);
    return finish(batch, std::move(r), dec.nll, Tensor<Scalar>(), commit, Scalar(1));
  }

  // --- davam_q: quantize the last state only ------------------------------
  ForwardResult<Scalar> davam_q_forward(const Batch& batch,
                                        const ForwardOptions<Scalar>& opt) const {
    ForwardResult<Scalar> r;
    auto enc = encode(batch, embed_, enc_);
    Tensor<Scalar> lat = last_valid_latent(enc, batch);
    LatentSequence z =
        opt.frozen ? opt.frozen->indices[0] : assign_codes(lat.value(), book_);
    Tensor<Scalar> zq;
    Mat<Scalar> picked(batch.size(), cfg_.latent_dim);
    for (int b = 0; b < batch.size(); ++b)
      picked.row(b) = book_.codes.row(z[static_cast<std::size_t>(b)]);
    if (opt.frozen) {
      zq = add(lat, Tensor<Scalar>::from(opt.frozen->residuals[0]));
    } else {
      zq = quantize_with_indices(lat, book_, z);
      r.frozen.indices.push_back(z);
      r.frozen.residuals.push_back(picked - lat.value());
    }
    r.step_indices.push_back(z);
    r.ema_rows = lat.value();
    r.ema_indices = z;
    // Exactly one commitment term per sentence.
    Tensor<Scalar> commit =
        mul_const(row_sum(square(sub(lat, Tensor<Scalar>::from(picked)))), opt.beta);

    auto dec = teacher_forced_decode(batch, {}, zq, decoder_init_state(zq),
                                     opt.keep_logits);
    r.step_logits = std::move(dec.logits);
    return finish(batch, std::move(r), dec.nll, Tensor<Scalar>(), commit, Scalar(1));
  }

  // --- gavam: reparameterized Gaussian latents, joint prior ---------------
  ForwardResult<Scalar> gavam_forward(const Batch& batch,
                                      const ForwardOptions<Scalar>& opt) const {
    if (!opt.deterministic_latent && opt.noise_rng == nullptr)
      throw ContractError("gavam forward: sampling requires a noise rng");
    ForwardResult<Scalar> r;
    auto enc = encode(batch, embed_, enc_);
    std::vector<Tensor<Scalar>> z_steps, mu_steps, sigma_steps;
    for (int t = 0; t < batch.max_len(); ++t) {
      auto heads = gaussian_heads(enc.h[static_cast<std::size_t>(t)]);
      Tensor<Scalar> z;
      if (opt.deterministic_latent) {
        z = heads.mu;
      } else {
        Mat<Scalar> eps(batch.size(), cfg_.latent_dim);
        for (Eigen::Index i = 0; i < eps.rows(); ++i)
          for (Eigen::Index j = 0; j < eps.cols(); ++j)
            eps(i, j) = static_cast<Scalar>(opt.noise_rng->normal());
        z = add(heads.mu, mul(heads.sigma, Tensor<Scalar>::from(eps)));
      }
      z_steps.push_back(z);
      mu_steps.push_back(heads.mu);
      sigma_steps.push_back(heads.sigma);
    }

    auto prior_out = gaussian_prior_forward(gprior_, z_steps, batch.size());
    Tensor<Scalar> kl_acc;
    for (int t = 0; t < batch.max_len(); ++t) {
      Tensor<Scalar> terms = gaussian_kl_terms(
          mu_steps[static_cast<std::size_t>(t)], sigma_steps[static_cast<std::size_t>(t)],
          prior_out.mu_hat[static_cast<std::size_t>(t)],
          prior_out.sigma_hat[static_cast<std::size_t>(t)]);
      Tensor<Scalar> kl_col =
          mul(row_sum(terms), Tensor<Scalar>::from(mask_col(batch, t)));
      kl_acc = (t == 0) ? kl_col : add(kl_acc, kl_col);
    }

    auto dec = teacher_forced_decode(batch, z_steps, Tensor<Scalar>(),
                                     lstm_zero_state(dec_.lstm, batch.size()),
                                     opt.keep_logits);
    r.step_logits = std::move(dec.logits);
    return finish(batch, std::move(r), dec.nll, kl_acc, Tensor<Scalar>(), Scalar(1));
  }

  // --- vae: one Gaussian latent from the last state, N(0, I) prior --------
  ForwardResult<Scalar> vae_forward(const Batch& batch,
                                    const ForwardOptions<Scalar>& opt) const {
    if (!opt.deterministic_latent && opt.noise_rng == nullptr)
      throw ContractError("vae forward: sampling requires a noise rng");
    ForwardResult<Scalar> r;
    auto enc = encode(batch, embed_, enc_);
    std::vector<int> last(static_cast<std::size_t>(batch.size()));
    for (int b = 0; b < batch.size(); ++b)
      last[static_cast<std::size_t>(b)] = batch.lengths[static_cast<std::size_t>(b)] - 1;
    auto heads = gaussian_heads(select_steps(enc.h, last));
    Tensor<Scalar> z;
    if (opt.deterministic_latent) {
      z = heads.mu;
    } else {
      Mat<Scalar> eps(batch.size(), cfg_.latent_dim);
      for (Eigen::Index i = 0; i < eps.rows(); ++i)
        for (Eigen::Index j = 0; j < eps.cols(); ++j)
          eps(i, j) = static_cast<Scalar>(opt.noise_rng->normal());
      z = add(heads.mu, mul(heads.sigma, Tensor<Scalar>::from(eps)));
    }
    // KL(N(mu, sigma^2) || N(0, 1)) per sentence.
    Tensor<Scalar> var = square(heads.sigma);
    Tensor<Scalar> terms = mul_const(
        add_const(add(sub(var, log(var)), square(heads.mu)), Scalar(-1)),
        Scalar(0.5));
    Tensor<Scalar> kl = row_sum(terms);

    auto dec = teacher_forced_decode(batch, {}, z, decoder_init_state(z),
                                     opt.keep_logits);
    r.step_logits = std::move(dec.logits);
    return finish(batch, std::move(r), dec.nll, kl, Tensor<Scalar>(), opt.kl_weight);
  }

  // --- lstm_lm -------------------------------------------------------------
  ForwardResult<Scalar> lstm_lm_forward(const Batch& batch,
                                        const ForwardOptions<Scalar>& opt) const {
    ForwardResult<Scalar> r;
    auto dec = teacher_forced_decode(batch, {}, Tensor<Scalar>(),
                                     lstm_zero_state(dec_.lstm, batch.size()),
                                     opt.keep_logits);
    r.step_logits = std::move(dec.logits);
    return finish(batch, std::move(r), dec.nll, Tensor<Scalar>(), Tensor<Scalar>(),
                  Scalar(1));
  }

  ModelConfig cfg_;
  ParameterRegistry<Scalar> reg_;
  Embedding<Scalar> embed_;
  LstmParams<Scalar> enc_;
  Tensor<Scalar> enc_proj_w_, enc_proj_b_;
  Tensor<Scalar> mu_w_, mu_b_, sigma_w_, sigma_b_;
  AttentionParams<Scalar> attn_;
  DecoderParams<Scalar> dec_;
  Tensor<Scalar> init_w_, init_b_;
  CodeBook<Scalar> book_;
  CausalConvStack<Scalar> prior_;
  GaussianPriorNet<Scalar> gprior_;
};

}  // namespace davam
