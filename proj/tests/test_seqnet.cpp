// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "davam/gradcheck.hpp"
#include "davam/seqnet.hpp"

#include <cmath>

using namespace davam;
using T = Tensor<double>;

namespace {

MatD random_mat(Rng& rng, int r, int c, double scale = 1.0) {
  MatD m(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) m(i, j) = scale * rng.normal();
  return m;
}

double sig(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Scalar recurrence oracle for one LSTM step.
void lstm_oracle(const LstmParams<double>& p, const MatD& x, const MatD& h,
                 const MatD& c, MatD& h_out, MatD& c_out) {
  int hd = p.hidden_dim;
  h_out.resize(x.rows(), hd);
  c_out.resize(x.rows(), hd);
  for (int b = 0; b < x.rows(); ++b) {
    for (int j = 0; j < hd; ++j) {
      auto dot = [&](const T& wx, const T& wh, const T& bias) {
        double s = bias.value()(0, j);
        for (int k = 0; k < x.cols(); ++k) s += x(b, k) * wx.value()(k, j);
        for (int k = 0; k < hd; ++k) s += h(b, k) * wh.value()(k, j);
        return s;
      };
      double i = sig(dot(p.w_xi, p.w_hi, p.b_i));
      double f = sig(dot(p.w_xf, p.w_hf, p.b_f));
      double o = sig(dot(p.w_xo, p.w_ho, p.b_o));
      double g = std::tanh(dot(p.w_xg, p.w_hg, p.b_g));
      c_out(b, j) = f * c(b, j) + i * g;
      h_out(b, j) = o * std::tanh(c_out(b, j));
    }
  }
}

}  // namespace

TEST_CASE("lstm_step: zero weights and zero state give zero output") {
  ParameterRegistry<double> reg;
  Rng rng(1);
  auto p = make_lstm(reg, "cell", ParamGroup::Phi, 3, 4, rng, 0.0);
  p.b_f.value_mut().setZero();
  auto s = lstm_zero_state(p, 2);
  auto out = lstm_step(T::from(MatD::Zero(2, 3)), s, p);
  CHECK(out.h.value().cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("lstm_step: open forget gate and closed input gate preserve the cell") {
  ParameterRegistry<double> reg;
  Rng rng(2);
  auto p = make_lstm(reg, "cell", ParamGroup::Phi, 3, 4, rng, 0.0);
  p.b_f.value_mut().setConstant(1000.0);   // f -> 1 exactly
  p.b_i.value_mut().setConstant(-1000.0);  // i -> 0 exactly
  MatD c0 = random_mat(rng, 2, 4);
  LstmState<double> s{T::from(random_mat(rng, 2, 4)), T::from(c0)};
  auto out = lstm_step(T::from(random_mat(rng, 2, 3)), s, p);
  CHECK(out.c.value() == c0);
}

TEST_CASE("lstm_step: matches scalar recurrence oracle") {
  ParameterRegistry<double> reg;
  Rng rng(3);
  auto p = make_lstm(reg, "cell", ParamGroup::Phi, 4, 4, rng, 0.5);
  MatD x = random_mat(rng, 3, 4), h = random_mat(rng, 3, 4), c = random_mat(rng, 3, 4);
  auto out = lstm_step(T::from(x), {T::from(h), T::from(c)}, p);
  MatD ho, co;
  lstm_oracle(p, x, h, c, ho, co);
  CHECK((out.h.value() - ho).cwiseAbs().maxCoeff() < 1e-10);
  CHECK((out.c.value() - co).cwiseAbs().maxCoeff() < 1e-10);

  MatD bad = MatD::Zero(3, 5);
  CHECK_THROWS_AS(lstm_step(T::from(bad), {T::from(h), T::from(c)}, p), ContractError);
}

TEST_CASE("lstm_step: composite gradient check") {
  ParameterRegistry<double> reg;
  Rng rng(4);
  auto p = make_lstm(reg, "cell", ParamGroup::Phi, 3, 3, rng, 0.4);
  T x = T::from(random_mat(rng, 2, 3), true);
  MatD cmat = random_mat(rng, 2, 3);
  auto loss_fn = [&]() {
    auto s = lstm_step(x, lstm_zero_state(p, 2), p);
    auto s2 = lstm_step(x, s, p);
    return sum_all(mul(s2.h, T::from(cmat)));
  };
  std::vector<std::pair<std::string, T>> params = {{"x", x}};
  for (const auto& e : reg.entries()) params.emplace_back(e.name, e.tensor);
  auto rep = grad_check<double>(loss_fn, params, 1e-5);
  CHECK(rep.max_rel_error < 1e-6);
}

TEST_CASE("encode: one state per position, prefix causality, determinism") {
  ParameterRegistry<double> reg;
  Rng rng(5);
  auto embed = make_embedding(reg, "embed", ParamGroup::Theta, 10, 4, rng, 0.1);
  auto enc = make_lstm(reg, "enc", ParamGroup::Phi, 4, 6, rng, 0.3);

  Batch ab = make_batch({{2, 4, 5, 3}});
  Batch abc = make_batch({{2, 4, 5, 6, 3}});
  auto s_ab = encode(ab, embed, enc);
  auto s_abc = encode(abc, embed, enc);
  CHECK(s_ab.h.size() == 4);
  CHECK(s_abc.h.size() == 5);
  // States over the shared prefix are bit-identical.
  for (int t = 0; t < 2; ++t)
    CHECK(s_ab.h[static_cast<std::size_t>(t)].value() ==
          s_abc.h[static_cast<std::size_t>(t)].value());

  auto s_again = encode(ab, embed, enc);
  for (std::size_t t = 0; t < s_ab.h.size(); ++t)
    CHECK(s_ab.h[t].value() == s_again.h[t].value());
}

TEST_CASE("attention: T=1 puts full weight on the only value") {
  ParameterRegistry<double> reg;
  Rng rng(6);
  auto p = make_attention(reg, "attn", ParamGroup::Theta, 3, 4, 5, rng, 0.3);
  MatD value = random_mat(rng, 2, 3);
  MatD mask = MatD::Ones(2, 1);
  auto out = attention<double>({T::from(value)}, T::from(random_mat(rng, 2, 4)),
                               mask, p);
  CHECK(out.weights.value() == MatD::Ones(2, 1));
  CHECK(out.context.value() == value);
}

TEST_CASE("attention: identical values give that value regardless of weights") {
  ParameterRegistry<double> reg;
  Rng rng(7);
  auto p = make_attention(reg, "attn", ParamGroup::Theta, 3, 4, 5, rng, 0.5);
  MatD v = random_mat(rng, 2, 3);
  std::vector<T> values = {T::from(v), T::from(v), T::from(v)};
  MatD mask = MatD::Ones(2, 3);
  auto out = attention(values, T::from(random_mat(rng, 2, 4)), mask, p);
  CHECK((out.context.value() - v).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("attention: matches hand-rolled score/softmax oracle") {
  ParameterRegistry<double> reg;
  Rng rng(8);
  const int D = 3, H = 4, A = 5, B = 2, TT = 3;
  auto p = make_attention(reg, "attn", ParamGroup::Theta, D, H, A, rng, 0.6);
  std::vector<MatD> vals;
  std::vector<T> values;
  for (int t = 0; t < TT; ++t) {
    vals.push_back(random_mat(rng, B, D));
    values.push_back(T::from(vals.back()));
  }
  MatD hprev = random_mat(rng, B, H);
  MatD mask = MatD::Ones(B, TT);
  mask(1, 2) = 0;  // one padded position
  auto out = attention(values, T::from(hprev), mask, p);

  for (int b = 0; b < B; ++b) {
    std::vector<double> scores;
    for (int t = 0; t < TT; ++t) {
      double s = 0;
      for (int a = 0; a < A; ++a) {
        double pre = p.b.value()(0, a);
        for (int d = 0; d < D; ++d) pre += vals[static_cast<std::size_t>(t)](b, d) * p.w_e.value()(d, a);
        for (int h = 0; h < H; ++h) pre += hprev(b, h) * p.w_d.value()(h, a);
        s += p.v.value()(a, 0) * std::tanh(pre);
      }
      scores.push_back(s);
    }
    double mx = -1e300, z = 0;
    for (int t = 0; t < TT; ++t)
      if (mask(b, t) != 0) mx = std::max(mx, scores[static_cast<std::size_t>(t)]);
    std::vector<double> alpha(static_cast<std::size_t>(TT), 0.0);
    for (int t = 0; t < TT; ++t)
      if (mask(b, t) != 0) {
        alpha[static_cast<std::size_t>(t)] = std::exp(scores[static_cast<std::size_t>(t)] - mx);
        z += alpha[static_cast<std::size_t>(t)];
      }
    for (int t = 0; t < TT; ++t) {
      alpha[static_cast<std::size_t>(t)] /= z;
      CHECK(out.weights.value()(b, t) ==
            doctest::Approx(alpha[static_cast<std::size_t>(t)]).epsilon(1e-10));
    }
    for (int d = 0; d < D; ++d) {
      double c = 0;
      for (int t = 0; t < TT; ++t)
        c += alpha[static_cast<std::size_t>(t)] * vals[static_cast<std::size_t>(t)](b, d);
      CHECK(out.context.value()(b, d) == doctest::Approx(c).epsilon(1e-10));
    }
  }
  CHECK(out.weights.value()(1, 2) == 0.0);
}

TEST_CASE("attention: permuting positions with the mask permutes alpha, keeps context") {
  ParameterRegistry<double> reg;
  Rng rng(9);
  auto p = make_attention(reg, "attn", ParamGroup::Theta, 3, 4, 4, rng, 0.4);
  const int TT = 4;
  std::vector<MatD> vals;
  for (int t = 0; t < TT; ++t) vals.push_back(random_mat(rng, 1, 3));
  MatD mask(1, TT);
  mask << 1, 1, 1, 0;
  MatD hprev = random_mat(rng, 1, 4);

  std::vector<T> values;
  for (auto& v : vals) values.push_back(T::from(v));
  auto base = attention(values, T::from(hprev), mask, p);

  std::vector<int> perm = {2, 0, 3, 1};
  std::vector<T> pvalues;
  MatD pmask(1, TT);
  for (int t = 0; t < TT; ++t) {
    pvalues.push_back(T::from(vals[static_cast<std::size_t>(perm[static_cast<std::size_t>(t)])]));
    pmask(0, t) = mask(0, perm[static_cast<std::size_t>(t)]);
  }
  auto permuted = attention(pvalues, T::from(hprev), pmask, p);
  for (int t = 0; t < TT; ++t)
    CHECK(permuted.weights.value()(0, t) ==
          doctest::Approx(base.weights.value()(0, perm[static_cast<std::size_t>(t)]))
              .epsilon(1e-12));
  CHECK((permuted.context.value() - base.context.value()).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("attention: all-masked row is a contract error") {
  ParameterRegistry<double> reg;
  Rng rng(10);
  auto p = make_attention(reg, "attn", ParamGroup::Theta, 2, 3, 3, rng, 0.3);
  MatD mask = MatD::Zero(1, 2);
  std::vector<T> values = {T::from(random_mat(rng, 1, 2)), T::from(random_mat(rng, 1, 2))};
  CHECK_THROWS_AS(attention(values, T::from(random_mat(rng, 1, 3)), mask, p),
                  ContractError);
}

TEST_CASE("attention: composite gradient check") {
  ParameterRegistry<double> reg;
  Rng rng(11);
  auto p = make_attention(reg, "attn", ParamGroup::Theta, 3, 3, 4, rng, 0.5);
  T v0 = T::from(random_mat(rng, 2, 3), true);
  T v1 = T::from(random_mat(rng, 2, 3), true);
  T hprev = T::from(random_mat(rng, 2, 3), true);
  MatD mask = MatD::Ones(2, 2);
  mask(0, 1) = 0;
  MatD cmat = random_mat(rng, 2, 3);
  auto loss_fn = [&]() {
    auto out = attention<double>({v0, v1}, hprev, mask, p);
    return sum_all(mul(out.context, T::from(cmat)));
  };
  std::vector<std::pair<std::string, T>> params = {{"v0", v0}, {"v1", v1}, {"h", hprev}};
  for (const auto& e : reg.entries()) params.emplace_back(e.name, e.tensor);
  auto rep = grad_check<double>(loss_fn, params, 1e-5);
  CHECK(rep.max_rel_error < 1e-6);
}

TEST_CASE("decode_step: logits sized to vocab; zero context/embedding yields the bias") {
  ParameterRegistry<double> reg;
  Rng rng(12);
  const int V = 9;
  auto embed = make_embedding(reg, "embed", ParamGroup::Theta, V, 4, rng, 0.0);
  auto dec = make_decoder(reg, "dec", ParamGroup::Theta, 4, 3, 5, V, rng, 0.2);
  dec.out_b.value_mut() = random_mat(rng, 1, V);

  auto out = decode_step<double>({1, 2}, T::zeros(2, 3), lstm_zero_state(dec.lstm, 2),
                                 embed, dec);
  CHECK(out.logits.cols() == V);
  // Zero embedding + zero context + zero state: h after one step is a
  // function of biases only; force the lstm biases to zero so h = 0 and the
  // logits reduce to the output bias.
  for (auto* b : {&dec.lstm.b_i, &dec.lstm.b_f, &dec.lstm.b_o, &dec.lstm.b_g})
    b->value_mut().setZero();
  auto out2 = decode_step<double>({1, 2}, T::zeros(2, 3), lstm_zero_state(dec.lstm, 2),
                                  embed, dec);
  for (int j = 0; j < V; ++j) {
    CHECK(out2.logits.value()(0, j) == doctest::Approx(dec.out_b.value()(0, j)).epsilon(1e-15));
    CHECK(out2.logits.value()(1, j) == doctest::Approx(dec.out_b.value()(0, j)).epsilon(1e-15));
  }
}

TEST_CASE("decode_step: teacher-forced NLL matches step-by-step oracle") {
  ParameterRegistry<double> reg;
  Rng rng(13);
  const int V = 7, E = 3, D = 2, H = 4;
  auto embed = make_embedding(reg, "embed", ParamGroup::Theta, V, E, rng, 0.4);
  auto dec = make_decoder(reg, "dec", ParamGroup::Theta, E, D, H, V, rng, 0.4);

  std::vector<int> sent = {2, 4, 5, 6, 3};  // BOS a b c EOS
  MatD ctx = random_mat(rng, 1, D);

  // Implementation path.
  double nll = 0;
  LstmState<double> s = lstm_zero_state(dec.lstm, 1);
  for (std::size_t i = 0; i + 1 < sent.size(); ++i) {
    auto out = decode_step<double>({sent[i]}, T::from(ctx), s, embed, dec);
    s = out.state;
    nll += cross_entropy_rows(out.logits, {sent[i + 1]}, std::vector<double>{1.0})
               .item();
  }

  // Oracle: independent scalar forward with explicit softmax.
  double nll_oracle = 0;
  MatD h = MatD::Zero(1, H), c = MatD::Zero(1, H);
  for (std::size_t i = 0; i + 1 < sent.size(); ++i) {
    MatD x(1, E + D);
    x << embed.table.value().row(sent[i]), ctx;
    MatD ho, co;
    LstmParams<double> lp = dec.lstm;
    lstm_oracle(lp, x, h, c, ho, co);
    h = ho;
    c = co;
    MatD feat(1, H + D);
    feat << h, ctx;
    MatD logits = feat * dec.out_w.value() + dec.out_b.value();
    double mx = logits.maxCoeff();
    double z = (logits.array() - mx).exp().sum();
    nll_oracle -= (logits(0, sent[i + 1]) - mx) - std::log(z);
  }
  CHECK(nll == doctest::Approx(nll_oracle).epsilon(1e-10));
}
