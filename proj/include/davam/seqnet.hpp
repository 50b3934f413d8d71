// SPDX-License-Identifier: Apache-2.0
//
// Sequence networks shared by every model: token embeddings, LSTM cells,
// the unidirectional encoder, additive attention over latent values, and
// the decoder step.

#pragma once

#include "davam/autodiff.hpp"
#include "davam/corpus.hpp"
#include "davam/params.hpp"

#include <string>
#include <utility>
#include <vector>

namespace davam {

template <typename Scalar>
struct Embedding {
  Tensor<Scalar> table;  // [vocab x embed_dim]

  Tensor<Scalar> operator()(const std::vector<int>& ids) const {
    return gather_rows(table, ids);
  }
};

template <typename Scalar>
Embedding<Scalar> make_embedding(ParameterRegistry<Scalar>& reg,
                                 const std::string& name, ParamGroup group,
                                 int vocab, int dim, Rng& rng, Scalar scale) {
  return {reg.uniform(name + ".table", group, vocab, dim, rng, scale)};
}

// One weight matrix per gate on the input and recurrent paths. Forget-gate
// bias starts at 1.
template <typename Scalar>
struct LstmParams {
  int input_dim = 0;
  int hidden_dim = 0;
  Tensor<Scalar> w_xi, w_hi, b_i;
  Tensor<Scalar> w_xf, w_hf, b_f;
  Tensor<Scalar> w_xo, w_ho, b_o;
  Tensor<Scalar> w_xg, w_hg, b_g;
};

template <typename Scalar>
LstmParams<Scalar> make_lstm(ParameterRegistry<Scalar>& reg,
                             const std::string& prefix, ParamGroup group,
                             int input_dim, int hidden_dim, Rng& rng,
                             Scalar scale) {
  LstmParams<Scalar> p;
  p.input_dim = input_dim;
  p.hidden_dim = hidden_dim;
  auto w = [&](const char* n) {
    return reg.uniform(prefix + "." + n, group, input_dim, hidden_dim, rng, scale);
  };
  auto u = [&](const char* n) {
    return reg.uniform(prefix + "." + n, group, hidden_dim, hidden_dim, rng, scale);
  };
  p.w_xi = w("w_xi"); p.w_hi = u("w_hi");
  p.b_i = reg.constant(prefix + ".b_i", group, 1, hidden_dim, Scalar(0));
  p.w_xf = w("w_xf"); p.w_hf = u("w_hf");
  p.b_f = reg.constant(prefix + ".b_f", group, 1, hidden_dim, Scalar(1));
  p.w_xo = w("w_xo"); p.w_ho = u("w_ho");
  p.b_o = reg.constant(prefix + ".b_o", group, 1, hidden_dim, Scalar(0));
  p.w_xg = w("w_xg"); p.w_hg = u("w_hg");
  p.b_g = reg.constant(prefix + ".b_g", group, 1, hidden_dim, Scalar(0));
  return p;
}

template <typename Scalar>
struct LstmState {
  Tensor<Scalar> h;
  Tensor<Scalar> c;
};

template <typename Scalar>
LstmState<Scalar> lstm_zero_state(const LstmParams<Scalar>& p, int batch) {
  return {Tensor<Scalar>::zeros(batch, p.hidden_dim),
          Tensor<Scalar>::zeros(batch, p.hidden_dim)};
}

// Standard cell: sigmoid gates, tanh candidate.
template <typename Scalar>
LstmState<Scalar> lstm_step(const Tensor<Scalar>& x, const LstmState<Scalar>& s,
                            const LstmParams<Scalar>& p) {
  if (x.cols() != p.input_dim || s.h.cols() != p.hidden_dim)
    throw ContractError("lstm_step: dimension mismatch");
  Tensor<Scalar> i = sigmoid(add(add(matmul(x, p.w_xi), matmul(s.h, p.w_hi)), p.b_i));
  Tensor<Scalar> f = sigmoid(add(add(matmul(x, p.w_xf), matmul(s.h, p.w_hf)), p.b_f));
  Tensor<Scalar> o = sigmoid(add(add(matmul(x, p.w_xo), matmul(s.h, p.w_ho)), p.b_o));
  Tensor<Scalar> g = tanh(add(add(matmul(x, p.w_xg), matmul(s.h, p.w_hg)), p.b_g));
  Tensor<Scalar> c = add(mul(f, s.c), mul(i, g));
  Tensor<Scalar> h = mul(o, tanh(c));
  return {h, c};
}

// Per-step hidden states h^e_{1:T} plus the final state. With a padded
// batch, rows past a sentence's length are computed but must be masked by
// the consumer.
template <typename Scalar>
struct EncoderStates {
  std::vector<Tensor<Scalar>> h;  // T entries of [B x hidden]
  LstmState<Scalar> final_state;
};

template <typename Scalar>
EncoderStates<Scalar> encode(const Batch& batch, const Embedding<Scalar>& embed,
                             const LstmParams<Scalar>& p) {
  if (batch.max_len() < 1) throw ContractError("encode: empty sequence");
  EncoderStates<Scalar> out;
  LstmState<Scalar> s = lstm_zero_state(p, batch.size());
  for (int t = 0; t < batch.max_len(); ++t) {
    std::vector<int> ids(static_cast<std::size_t>(batch.size()));
    for (int b = 0; b < batch.size(); ++b) ids[static_cast<std::size_t>(b)] = batch.token_ids(b, t);
    s = lstm_step(embed(ids), s, p);
    out.h.push_back(s.h);
  }
  out.final_state = s;
  return out;
}

// Additive attention: score(t) = v' tanh(W_e value_t + W_d h_prev + b).
template <typename Scalar>
struct AttentionParams {
  Tensor<Scalar> w_e;  // [latent_dim x attn_dim]
  Tensor<Scalar> w_d;  // [hidden_dim x attn_dim]
  Tensor<Scalar> b;    // [1 x attn_dim]
  Tensor<Scalar> v;    // [attn_dim x 1]
};

template <typename Scalar>
AttentionParams<Scalar> make_attention(ParameterRegistry<Scalar>& reg,
                                       const std::string& prefix, ParamGroup group,
                                       int latent_dim, int hidden_dim, int attn_dim,
                                       Rng& rng, Scalar scale) {
  AttentionParams<Scalar> p;
  p.w_e = reg.uniform(prefix + ".w_e", group, latent_dim, attn_dim, rng, scale);
  p.w_d = reg.uniform(prefix + ".w_d", group, hidden_dim, attn_dim, rng, scale);
  p.b = reg.constant(prefix + ".b", group, 1, attn_dim, Scalar(0));
  p.v = reg.uniform(prefix + ".v", group, attn_dim, 1, rng, scale);
  return p;
}

template <typename Scalar>
struct AttentionOutput {
  Tensor<Scalar> context;  // [B x latent_dim], convex combination of values
  Tensor<Scalar> weights;  // [B x T], zero at masked positions
  Tensor<Scalar> scores;   // [B x T], raw (pre-softmax, unmasked)
};

// Value keys W_e value_t are shared by every decode step; precompute once.
template <typename Scalar>
struct AttentionKeys {
  std::vector<Tensor<Scalar>> keys;  // T entries of [B x attn_dim]
};

template <typename Scalar>
AttentionKeys<Scalar> attention_keys(const std::vector<Tensor<Scalar>>& values,
                                     const AttentionParams<Scalar>& p) {
  AttentionKeys<Scalar> out;
  out.keys.reserve(values.size());
  for (const auto& v : values) out.keys.push_back(matmul(v, p.w_e));
  return out;
}

template <typename Scalar>
AttentionOutput<Scalar> attend(const std::vector<Tensor<Scalar>>& values,
                               const AttentionKeys<Scalar>& keys,
                               const Tensor<Scalar>& h_prev,
                               const Mat<Scalar>& mask,
                               const AttentionParams<Scalar>& p) {
  if (values.empty()) throw ContractError("attend: no values");
  const int t_len = static_cast<int>(values.size());
  if (mask.cols() != t_len || mask.rows() != values.front().rows())
    throw ContractError("attend: mask shape mismatch");

  Tensor<Scalar> query = add(matmul(h_prev, p.w_d), p.b);  // [B x attn]
  std::vector<Tensor<Scalar>> score_cols;
  score_cols.reserve(static_cast<std::size_t>(t_len));
  for (int t = 0; t < t_len; ++t) {
    Tensor<Scalar> pre = tanh(add(keys.keys[static_cast<std::size_t>(t)], query));
    score_cols.push_back(matmul(pre, p.v));  // [B x 1]
  }
  Tensor<Scalar> scores = concat_cols(score_cols);          // [B x T]
  Tensor<Scalar> weights = masked_softmax_rows(scores, mask);
  Tensor<Scalar> context;
  for (int t = 0; t < t_len; ++t) {
    Tensor<Scalar> term =
        scale_rows(values[static_cast<std::size_t>(t)], slice_cols(weights, t, 1));
    context = (t == 0) ? term : add(context, term);
  }
  return {context, weights, scores};
}

// Single-call form used directly by tests and single-step consumers.
template <typename Scalar>
AttentionOutput<Scalar> attention(const std::vector<Tensor<Scalar>>& values,
                                  const Tensor<Scalar>& h_prev,
                                  const Mat<Scalar>& mask,
                                  const AttentionParams<Scalar>& p) {
  return attend(values, attention_keys(values, p), h_prev, mask, p);
}

// Decoder cell: input [embedding(prev_token); context], logits from
// [h; context] through the output projection. context_dim 0 drops the
// context path entirely (plain language model).
template <typename Scalar>
struct DecoderParams {
  LstmParams<Scalar> lstm;
  Tensor<Scalar> out_w;  // [(hidden + context) x vocab]
  Tensor<Scalar> out_b;  // [1 x vocab]
  int context_dim = 0;
};

template <typename Scalar>
DecoderParams<Scalar> make_decoder(ParameterRegistry<Scalar>& reg,
                                   const std::string& prefix, ParamGroup group,
                                   int embed_dim, int context_dim, int hidden_dim,
                                   int vocab, Rng& rng, Scalar scale) {
  DecoderParams<Scalar> p;
  p.context_dim = context_dim;
  p.lstm = make_lstm(reg, prefix + ".lstm", group, embed_dim + context_dim,
                     hidden_dim, rng, scale);
  p.out_w = reg.uniform(prefix + ".out_w", group, hidden_dim + context_dim, vocab,
                        rng, scale);
  p.out_b = reg.constant(prefix + ".out_b", group, 1, vocab, Scalar(0));
  return p;
}

template <typename Scalar>
struct DecodeStepOut {
  Tensor<Scalar> logits;  // [B x vocab]
  LstmState<Scalar> state;
};

template <typename Scalar>
DecodeStepOut<Scalar> decode_step(const std::vector<int>& prev_ids,
                                  const Tensor<Scalar>& context,
                                  const LstmState<Scalar>& state,
                                  const Embedding<Scalar>& embed,
                                  const DecoderParams<Scalar>& p) {
  Tensor<Scalar> emb = embed(prev_ids);
  Tensor<Scalar> x =
      p.context_dim > 0 ? concat_cols(emb, context) : emb;
  LstmState<Scalar> next = lstm_step(x, state, p.lstm);
  Tensor<Scalar> feat =
      p.context_dim > 0 ? concat_cols(next.h, context) : next.h;
  Tensor<Scalar> logits = add(matmul(feat, p.out_w), p.out_b);
  return {logits, next};
}

}  // namespace davam
