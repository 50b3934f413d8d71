// SPDX-License-Identifier: Apache-2.0
//
// Acceptance suite: one pass/fail line per criterion, nonzero exit when any
// criterion fails. An optional argv filter runs a subset, e.g.
// `davam_acceptance 1 4 9`.

#include "davam/evalgen.hpp"
#include "davam/gradcheck.hpp"
#include "davam/grammar.hpp"
#include "davam/models.hpp"
#include "davam/sweep.hpp"
#include "davam/train.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>
#include <string>
#include <vector>

using namespace davam;

namespace {

struct Checker {
  bool ok = true;
  std::string first_failure;

  void expect(bool cond, const std::string& what) {
    if (cond) return;
    if (ok) first_failure = what;
    ok = false;
  }
};

MatD random_mat(Rng& rng, int r, int c, double scale = 1.0) {
  MatD m(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) m(i, j) = scale * rng.normal();
  return m;
}

// ---------------------------------------------------------------------------
// Shared desk-scale artifacts (built once, reused by criteria 6 and 8)
// ---------------------------------------------------------------------------

TrainConfig desk_config(const std::string& kind) {
  TrainConfig cfg;
  cfg.model_kind = kind;
  cfg.codebook_size = 32;
  cfg.latent_dim = 24;
  cfg.hidden_dim = 48;
  cfg.embed_dim = 48;
  cfg.attn_dim = 48;
  cfg.batch_size = 32;
  cfg.epochs = 90;
  cfg.warmup_epochs = 5;
  cfg.beta_start = 0.1;
  cfg.beta_max = 0.25;
  cfg.lr = 1.0;
  cfg.plateau_patience = 3;
  cfg.init_scale = 0.2;
  cfg.prior_layers = 8;
  cfg.prior_channels = 32;
  cfg.stage_two_epochs = 20;
  cfg.vocab_cap = 300;
  cfg.seed = 1;
  return cfg;
}

struct DeskRun {
  Vocab vocab;
  Dataset train, valid, test;
  Checkpoint davam_stage1, davam_stage2, davam_q, gavam;
  double stage_two_val_nll = 0;
};

const DeskRun& desk_run() {
  static DeskRun run = [] {
    DeskRun r;
    auto train_lines = make_grammar_corpus(2000, 101);
    r.vocab = build_vocab_from_lines(train_lines, 300);
    r.train = encode_dataset(train_lines, r.vocab, 100);
    r.valid = encode_dataset(make_grammar_corpus(200, 102), r.vocab, 100);
    r.test = encode_dataset(make_grammar_corpus(200, 103), r.vocab, 100);

    auto s1 = train_stage_one<float>(r.train, r.valid, r.vocab.size(),
                                     desk_config("davam"));
    r.davam_stage1 = s1.checkpoint;
    auto s2 = train_stage_two<float>(r.train, r.valid, s1.checkpoint);
    r.davam_stage2 = s2.checkpoint;
    r.stage_two_val_nll = s2.log.records.back().val_kl;
    r.davam_q = train_stage_one<float>(r.train, r.valid, r.vocab.size(),
                                       desk_config("davam_q"))
                    .checkpoint;
    r.gavam = train_stage_one<float>(r.train, r.valid, r.vocab.size(),
                                     desk_config("gavam"))
                  .checkpoint;
    return r;
  }();
  return run;
}

// ---------------------------------------------------------------------------
// 1. Formula fidelity
// ---------------------------------------------------------------------------

Checker criterion_1() {
  Checker c;
  using T = Tensor<double>;

  MatD one = MatD::Constant(1, 1, 1.0);
  MatD zero = MatD::Zero(1, 1);
  GaussianPosterior<double> post{T::from(one), T::from(one)};
  std::vector<GaussianPriorStep<double>> same = {{T::from(one), T::from(one)}};
  c.expect(std::abs(gaussian_kl(post, same).item()) < 1e-12,
           "gaussian_kl zero case");
  std::vector<GaussianPriorStep<double>> shifted = {{T::from(zero), T::from(one)}};
  c.expect(std::abs(gaussian_kl(post, shifted).item() - 0.5) < 1e-12,
           "gaussian_kl 0.5 case");

  // Monte-Carlo oracle, 1e6 samples, within three standard errors.
  Rng rng(424242);
  const int t_len = 2, d = 3, n = 1000000;
  MatD mu(t_len, d), sigma(t_len, d), mu_h(t_len, d), sigma_h(t_len, d);
  for (int i = 0; i < t_len; ++i)
    for (int j = 0; j < d; ++j) {
      mu(i, j) = rng.normal();
      sigma(i, j) = 0.4 + 0.5 * std::abs(rng.normal());
      mu_h(i, j) = rng.normal();
      sigma_h(i, j) = 0.4 + 0.5 * std::abs(rng.normal());
    }
  GaussianPosterior<double> p2{T::from(mu), T::from(sigma)};
  std::vector<GaussianPriorStep<double>> prior;
  for (int t = 0; t < t_len; ++t)
    prior.push_back({T::from(MatD(mu_h.row(t))), T::from(MatD(sigma_h.row(t)))});
  double analytic = gaussian_kl(p2, prior).item();
  double sum = 0, sum_sq = 0;
  for (int s = 0; s < n; ++s) {
    double v = 0;
    for (int i = 0; i < t_len; ++i)
      for (int j = 0; j < d; ++j) {
        double z = mu(i, j) + sigma(i, j) * rng.normal();
        double a = (z - mu(i, j)) / sigma(i, j);
        double b = (z - mu_h(i, j)) / sigma_h(i, j);
        v += std::log(sigma_h(i, j) / sigma(i, j)) + 0.5 * (b * b - a * a);
      }
    sum += v;
    sum_sq += v * v;
  }
  double mean = sum / n;
  double se = std::sqrt((sum_sq / n - mean * mean) / n);
  c.expect(std::abs(analytic - mean) < 3 * se, "gaussian_kl Monte-Carlo oracle");

  LatentSequence z = {1, 3};
  MatD perfect = MatD::Zero(2, 4);
  perfect(0, 1) = 1;
  perfect(1, 3) = 1;
  c.expect(discrete_kl(z, T::from(perfect)).item() == 0.0, "discrete_kl perfect");
  MatD uni = MatD::Constant(2, 4, 0.25);
  c.expect(std::abs(discrete_kl(z, T::from(uni)).item() - 2 * std::log(4.0)) < 1e-12,
           "discrete_kl uniform T log K");
  return c;
}

// ---------------------------------------------------------------------------
// 2. Collapse-freedom invariant
// ---------------------------------------------------------------------------

Checker criterion_2() {
  Checker c;
  ModelConfig mc;
  mc.kind = ModelKind::Davam;
  mc.vocab_size = 20;
  mc.embed_dim = 8;
  mc.hidden_dim = 12;
  mc.latent_dim = 6;
  mc.attn_dim = 8;
  mc.codebook_size = 8;
  mc.prior_layers = 3;
  mc.prior_channels = 8;
  Model<double> model(mc, 7);
  Batch batch = make_batch({{2, 4, 5, 6, 3}, {2, 7, 8, 3}});
  auto seqs = model.posterior_indices(batch);
  model.params().zero_grads();
  Tensor<double> total;
  for (const auto& zs : seqs) {
    auto out = prior_forward(model.index_prior(), zs);
    Tensor<double> nll = prior_nll(zs, out);
    total = total.valid() ? add(total, nll) : nll;
  }
  total.backward();
  for (const auto& e : model.params().entries()) {
    if (e.group == ParamGroup::Psi) continue;
    bool zero = !e.tensor.has_grad() ||
                e.tensor.grad().cwiseAbs().maxCoeff() == 0.0;
    c.expect(zero, "prior_nll gradient leaked into " + e.name);
  }

  // Stage two leaves phi, theta, and the code book bit-unchanged.
  const auto& r = desk_run();
  for (const auto& t : r.davam_stage1.tensors) {
    if (t.group == TensorGroup::Psi) continue;
    const NamedTensor* after = r.davam_stage2.find(t.name);
    c.expect(after != nullptr && after->data == t.data,
             "stage two changed " + t.name);
  }
  return c;
}

// ---------------------------------------------------------------------------
// 3. Gradient correctness
// ---------------------------------------------------------------------------

Checker criterion_3() {
  Checker c;
  using T = Tensor<double>;
  const double tol = 1e-6;
  double worst = 0;
  for (int seed = 0; seed < 100; ++seed) {
    Rng r(1000 + static_cast<std::uint64_t>(seed));
    T a = T::from(random_mat(r, 3, 4), true);
    T b = T::from(random_mat(r, 3, 4), true);
    T w = T::from(random_mat(r, 4, 2), true);
    T row = T::from(random_mat(r, 1, 4), true);
    T colv = T::from(random_mat(r, 3, 1), true);
    T sc = T::from(random_mat(r, 1, 1), true);
    MatD cv = random_mat(r, 3, 4);
    MatD cw = random_mat(r, 3, 2);
    T cc = T::from(cv);
    MatD mask(3, 4);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 4; ++j) mask(i, j) = (i + j) % 3 == 0 ? 0.0 : 1.0;
    std::vector<int> targets = {1, 3, 0};
    std::vector<double> weights = {1, 0, 1};
    std::vector<int> gather_ids = {2, 0, 0};
    T table = T::from(random_mat(r, 4, 3), true);
    MatD cg = random_mat(r, 3, 3);

    auto run = [&](const char* name, auto fn,
                   std::vector<std::pair<std::string, T>> params) {
      auto rep = grad_check<double>(fn, params, 1e-5);
      worst = std::max(worst, rep.max_rel_error);
      c.expect(rep.max_rel_error < tol,
               std::string(name) + " grad check at seed " + std::to_string(seed));
    };
    run("matmul", [&] { return sum_all(mul(matmul(a, w), T::from(cw))); },
        {{"a", a}, {"w", w}});
    run("add", [&] { return sum_all(mul(add(a, b), cc)); }, {{"a", a}, {"b", b}});
    run("add_row", [&] { return sum_all(mul(add(a, row), cc)); },
        {{"a", a}, {"r", row}});
    run("add_scalar", [&] { return sum_all(mul(add(a, sc), cc)); },
        {{"a", a}, {"s", sc}});
    run("sub", [&] { return sum_all(mul(sub(a, b), cc)); }, {{"a", a}, {"b", b}});
    run("mul", [&] { return sum_all(mul(mul(a, b), cc)); }, {{"a", a}, {"b", b}});
    run("mul_row", [&] { return sum_all(mul(mul(a, row), cc)); },
        {{"a", a}, {"r", row}});
    run("div", [&] { return sum_all(mul(div(a, add_const(square(b), 0.5)), cc)); },
        {{"a", a}, {"b", b}});
    run("scale_rows", [&] { return sum_all(mul(scale_rows(a, colv), cc)); },
        {{"a", a}, {"c", colv}});
    run("tanh", [&] { return sum_all(mul(tanh(a), cc)); }, {{"a", a}});
    run("sigmoid", [&] { return sum_all(mul(sigmoid(a), cc)); }, {{"a", a}});
    run("exp", [&] { return sum_all(mul(exp(a), cc)); }, {{"a", a}});
    run("log", [&] { return sum_all(mul(log(add_const(square(a), 0.1)), cc)); },
        {{"a", a}});
    run("softplus", [&] { return sum_all(mul(softplus(a), cc)); }, {{"a", a}});
    run("relu", [&] { return sum_all(mul(relu(a), cc)); }, {{"a", a}});
    run("square", [&] { return sum_all(mul(square(a), cc)); }, {{"a", a}});
    run("neg", [&] { return sum_all(mul(neg(a), cc)); }, {{"a", a}});
    run("row_sum", [&] { return sum_all(mul(row_sum(a), colv)); }, {{"a", a}});
    run("softmax", [&] { return sum_all(mul(softmax_rows(a), cc)); }, {{"a", a}});
    run("masked_softmax",
        [&] { return sum_all(mul(masked_softmax_rows(a, mask), cc)); }, {{"a", a}});
    run("cross_entropy",
        [&] { return sum_all(cross_entropy_rows(a, targets, weights)); },
        {{"a", a}});
    run("gather", [&] { return sum_all(mul(gather_rows(table, gather_ids), T::from(cg))); },
        {{"t", table}});
    run("concat_slice",
        [&] { return sum_all(mul(slice_cols(concat_cols(a, b), 2, 4), T::from(cv))); },
        {{"a", a}, {"b", b}});
    run("pick_clamp",
        [&] { return sum_all(log(clamp_min(softmax_rows(a), 1e-10))); }, {{"a", a}});

    // Gradient-routing ops carry definitional gradients that finite
    // differences cannot see; assert their two-sided contracts directly.
    {
      T h = T::from(random_mat(r, 2, 3), true);
      T e = T::from(random_mat(r, 2, 3), true);
      T st = straight_through(h, e);
      c.expect(st.value() == e.value(), "straight_through forward is not e");
      MatD up = random_mat(r, 2, 3);
      sum_all(mul(st, T::from(up))).backward();
      c.expect(h.grad() == up, "straight_through gradient to h is not upstream");
      c.expect(!e.has_grad(), "straight_through leaked gradient to e");

      T s = T::from(random_mat(r, 2, 2), true);
      T sg = stop_gradient(s);
      c.expect(sg.value() == s.value(), "stop_gradient altered the forward");
      c.expect(!sg.requires_grad(), "stop_gradient output still differentiable");
    }
  }
  std::printf("    primitives: worst rel error %.3g over 100 seeds\n", worst);

  // Composite stage-one loss against central differences, indices frozen.
  double composite_worst = 0;
  for (int seed = 0; seed < 3; ++seed) {
    ModelConfig mc;
    mc.kind = ModelKind::Davam;
    mc.vocab_size = 9;
    mc.embed_dim = 6;
    mc.hidden_dim = 8;
    mc.latent_dim = 4;
    mc.attn_dim = 6;
    mc.codebook_size = 5;
    mc.prior_layers = 2;
    mc.prior_channels = 8;
    Model<double> model(mc, 13 + static_cast<std::uint64_t>(seed));
    Batch batch = make_batch({{2, 4, 5, 6, 3}, {2, 7, 4, 3}});
    ForwardOptions<double> opt;
    opt.beta = 0.7;
    auto first = model.forward(batch, opt);
    ForwardOptions<double> frozen = opt;
    frozen.frozen = &first.frozen;
    auto loss_fn = [&] { return model.forward(batch, frozen).total; };
    std::vector<std::pair<std::string, Tensor<double>>> params;
    for (const auto& e : model.params().entries())
      if (e.group != ParamGroup::Psi) params.emplace_back(e.name, e.tensor);
    auto rep = grad_check<double>(loss_fn, params, 1e-5);
    composite_worst = std::max(composite_worst, rep.max_rel_error);
    c.expect(rep.max_rel_error < 1e-4,
             "composite stage-one loss at seed " + std::to_string(seed));
  }
  std::printf("    composite stage-one loss: worst rel error %.3g\n",
              composite_worst);
  return c;
}

// ---------------------------------------------------------------------------
// 4. Quantizer oracles
// ---------------------------------------------------------------------------

Checker criterion_4() {
  Checker c;
  Rng rng(4004);
  for (int inst = 0; inst < 1000; ++inst) {
    Rng r = rng.fork(static_cast<std::uint64_t>(inst));
    auto book = make_codebook<double>(32, 8, r, 1.0);
    MatD rows = random_mat(r, 8, 8);
    auto z = assign_codes(rows, book);
    for (int t = 0; t < 8; ++t) {
      int best = 0;
      double best_d = std::numeric_limits<double>::max();
      for (int k = 0; k < 32; ++k) {
        double d = (rows.row(t) - book.codes.row(k)).squaredNorm();
        if (d < best_d) {
          best_d = d;
          best = k;
        }
      }
      c.expect(z[static_cast<std::size_t>(t)] == best,
               "nearest-neighbor mismatch vs brute force");
    }
  }

  for (int inst = 0; inst < 50; ++inst) {
    Rng r = rng.fork(777 + static_cast<std::uint64_t>(inst));
    MatD samples = random_mat(r, 40, 3);
    double prev = std::numeric_limits<double>::max();
    for (int iters = 0; iters <= 10; ++iters) {
      auto book = kmeans_init(samples, 5, iters, 55);
      double obj = kmeans_objective(samples, book);
      c.expect(obj <= prev + 1e-9, "k-means objective increased");
      prev = obj;
    }
  }

  // EMA against the unrolled two-step recurrence.
  Rng r2(808);
  const double decay = 0.99, eps = 1e-5;
  auto book = make_codebook<double>(4, 3, r2, 1.0, decay, eps);
  MatD c0 = book.ema_counts, s0 = book.ema_sums;
  MatD h1 = random_mat(r2, 5, 3), h2 = random_mat(r2, 7, 3);
  auto z1 = assign_codes(h1, book);
  ema_update(book, h1, z1);
  auto z2 = assign_codes(h2, book);
  ema_update(book, h2, z2);
  auto stats = [&](const MatD& h, const LatentSequence& z, MatD& sums, MatD& counts) {
    sums = MatD::Zero(4, 3);
    counts = MatD::Zero(4, 1);
    for (int t = 0; t < h.rows(); ++t) {
      sums.row(z[static_cast<std::size_t>(t)]) += h.row(t);
      counts(z[static_cast<std::size_t>(t)], 0) += 1;
    }
  };
  MatD bs1, bc1, bs2, bc2;
  stats(h1, z1, bs1, bc1);
  stats(h2, z2, bs2, bc2);
  MatD counts = decay * (decay * c0 + (1 - decay) * bc1) + (1 - decay) * bc2;
  MatD sums = decay * (decay * s0 + (1 - decay) * bs1) + (1 - decay) * bs2;
  c.expect((book.ema_counts - counts).cwiseAbs().maxCoeff() < 1e-12,
           "EMA counts vs unrolled recurrence");
  c.expect((book.ema_sums - sums).cwiseAbs().maxCoeff() < 1e-12,
           "EMA sums vs unrolled recurrence");
  for (int k = 0; k < 4; ++k) {
    MatD expect = sums.row(k) / std::max(counts(k, 0), eps);
    c.expect((book.codes.row(k) - expect).cwiseAbs().maxCoeff() < 1e-12,
             "EMA codes vs unrolled recurrence");
  }
  return c;
}

// ---------------------------------------------------------------------------
// 5. Prior causality and Markov recovery
// ---------------------------------------------------------------------------

Checker criterion_5() {
  Checker c;
  // Bit-exact causality on a 16-layer stack, sweeping every position.
  {
    ParameterRegistry<double> reg;
    Rng rng(515);
    auto stack = make_categorical_prior(reg, "prior", 6, 16, 3, 16, rng, 0.15);
    stack.out_w.value_mut() = MatD::Random(16, 6);
    const int t_len = stack.receptive_field() + 7;
    LatentSequence z(static_cast<std::size_t>(t_len));
    for (int t = 0; t < t_len; ++t) z[static_cast<std::size_t>(t)] = (t * 5 + 1) % 6;
    auto base = prior_forward(stack, z);
    for (int t = 0; t < t_len; ++t) {
      LatentSequence perturbed = z;
      perturbed[static_cast<std::size_t>(t)] =
          (z[static_cast<std::size_t>(t)] + 3) % 6;
      auto out = prior_forward(stack, perturbed);
      for (int s = 0; s <= t; ++s)
        c.expect(out.gamma.value().row(s) == base.gamma.value().row(s),
                 "gamma row " + std::to_string(s) + " moved when z_" +
                     std::to_string(t) + " changed");
    }
  }

  // A prior trained on a 2-state Markov source recovers the transitions.
  {
    const double p01 = 0.25, p10 = 0.4;
    Rng src(511);
    std::vector<LatentSequence> data;
    const int t_len = 10;
    for (int i = 0; i < 3000; ++i) {
      LatentSequence z(static_cast<std::size_t>(t_len));
      int s = src.uniform() < 0.5 ? 0 : 1;
      z[0] = s;
      for (int t = 1; t < t_len; ++t) {
        if (src.uniform() < (s == 0 ? p01 : p10)) s = 1 - s;
        z[static_cast<std::size_t>(t)] = s;
      }
      data.push_back(std::move(z));
    }
    ParameterRegistry<float> reg;
    Rng rng(512);
    auto stack = make_categorical_prior(reg, "prior", 2, 4, 3, 16, rng, 0.2f);
    GroupFilter<float> psi{false, false, true};
    for (int epoch = 0; epoch < 12; ++epoch) {
      for (const auto& batch :
           make_index_batches(data, 64, derive_seed(99, static_cast<std::uint64_t>(epoch)))) {
        Tensor<float> loss = prior_batch_nll(stack, batch);
        reg.zero_grads();
        loss.backward();
        sgd_step(reg, psi, 0.25f, 5.0f);
      }
    }
    auto samples = sample_prior_batch(stack, 10000, t_len, 1.0, 616);
    Eigen::Matrix2d counts = Eigen::Matrix2d::Zero();
    for (const auto& z : samples)
      for (std::size_t t = 1; t < z.size(); ++t) counts(z[t - 1], z[t]) += 1.0;
    double tv0 = 0.5 * (std::abs(counts(0, 0) / counts.row(0).sum() - (1 - p01)) +
                        std::abs(counts(0, 1) / counts.row(0).sum() - p01));
    double tv1 = 0.5 * (std::abs(counts(1, 0) / counts.row(1).sum() - p10) +
                        std::abs(counts(1, 1) / counts.row(1).sum() - (1 - p10)));
    std::printf("    Markov recovery: TV %.4f / %.4f (bound 0.05)\n", tv0, tv1);
    c.expect(tv0 < 0.05, "row-0 transition TV " + std::to_string(tv0));
    c.expect(tv1 < 0.05, "row-1 transition TV " + std::to_string(tv1));
  }
  return c;
}

// ---------------------------------------------------------------------------
// 6. Desk-scale behavioral reproduction
// ---------------------------------------------------------------------------

Checker criterion_6() {
  Checker c;
  const auto& r = desk_run();
  auto davam_rep = evaluate(r.davam_stage2, r.valid);
  auto q_rep = evaluate(r.davam_q, r.valid);
  auto g_rep = evaluate(r.gavam, r.valid);

  std::printf("    davam rec %.2f | davam_q rec %.2f | gavam rec %.2f, "
              "kl/sentence %.4f\n",
              davam_rep.rec, q_rep.rec, g_rep.rec, g_rep.kl_per_sentence);
  c.expect(davam_rep.rec < q_rep.rec, "(a) davam rec not below davam_q rec");
  c.expect(g_rep.kl_per_sentence < 0.1,
           "(b) gavam KL did not collapse below 0.1 nats/sentence");
  c.expect(g_rep.rec > davam_rep.rec, "(b) gavam rec not above davam rec");

  double mean_t = 0;
  for (const auto& s : r.valid.sentences) mean_t += static_cast<double>(s.size());
  mean_t /= static_cast<double>(r.valid.size());
  double uniform = mean_t * std::log(32.0);
  std::printf("    stage-two prior NLL %.3f vs uniform bound %.3f\n",
              r.stage_two_val_nll, uniform);
  c.expect(r.stage_two_val_nll < 0.5 * uniform,
           "(c) stage-two prior NLL not below half the uniform bound");
  return c;
}

// ---------------------------------------------------------------------------
// 7. Paper-scale declaration and sensitivity sweeps
// ---------------------------------------------------------------------------

Checker criterion_7() {
  Checker c;
  std::printf(
      "    paper-scale numbers (e.g. PTB Rec 60.16 / PPL 17.94 at K=512) are "
      "NOT reproducible at desk scale;\n    the paper-scale config ships at "
      "configs/paper_scale.cfg and is validated here.\n");
#ifdef DAVAM_SOURCE_DIR
  TrainConfig paper = TrainConfig::load(std::string(DAVAM_SOURCE_DIR) +
                                        "/configs/paper_scale.cfg");
  c.expect(paper.codebook_size == 512, "paper config codebook_size");
  c.expect(paper.beta_max == 5.0, "paper config beta_max");
  c.expect(paper.lr == 1.0, "paper config lr");
  c.expect(paper.warmup_epochs == 10, "paper config warmup");
  c.expect(paper.prior_layers == 16, "paper config prior depth");
#else
  c.expect(false, "source dir not wired");
#endif

  const auto& r = desk_run();

  // (i) Rec non-increasing in codebook size, desk grid at the full recipe.
  TrainConfig base = desk_config("davam");
  base.stage_two_epochs = 12;
  auto k_pts = run_sweep(r.train, r.valid, r.vocab.size(), base,
                         SweepAxis::CodebookSize, {8, 32, 64});
  std::printf("%s", sweep_table(SweepAxis::CodebookSize, k_pts).c_str());
  for (std::size_t i = 1; i < k_pts.size(); ++i)
    c.expect(k_pts[i].rec <= k_pts[i - 1].rec + 0.3,
             "rec increased with codebook size");

  // Reduced-scale corpus for the remaining axes.
  auto small_lines = make_grammar_corpus(600, 201);
  Vocab small_vocab = build_vocab_from_lines(small_lines, 300);
  Dataset small_train = encode_dataset(small_lines, small_vocab, 100);
  Dataset small_valid =
      encode_dataset(make_grammar_corpus(150, 202), small_vocab, 100);
  TrainConfig reduced = base;
  reduced.epochs = 30;
  reduced.prior_layers = 6;
  reduced.prior_channels = 24;

  // (ii) Rec flat within +-10% across the paper's latent-dim grid.
  auto d_pts = run_sweep(small_train, small_valid, small_vocab.size(), reduced,
                         SweepAxis::LatentDim, {8, 16, 32, 64, 128, 256});
  std::printf("%s", sweep_table(SweepAxis::LatentDim, d_pts).c_str());
  double d_mean = 0;
  for (const auto& p : d_pts) d_mean += p.rec;
  d_mean /= static_cast<double>(d_pts.size());
  for (const auto& p : d_pts)
    c.expect(std::abs(p.rec - d_mean) <= 0.10 * d_mean,
             "rec not flat across latent dims");

  // (iii) Rec minimized at an interior beta_max over the paper grid. At desk
  // scale the measured curve is monotone with its minimum at the 0.1
  // boundary (the commitment's stabilization benefit never activates when
  // the EMA code book tracks the encoder easily); the assertion is kept as
  // stated and is expected to fail. See the run log for the curve.
  auto b_pts = run_sweep(small_train, small_valid, small_vocab.size(), reduced,
                         SweepAxis::BetaMax, {0.1, 0.25, 1, 5, 20});
  std::printf("%s", sweep_table(SweepAxis::BetaMax, b_pts).c_str());
  std::size_t argmin = 0;
  for (std::size_t i = 1; i < b_pts.size(); ++i)
    if (b_pts[i].rec < b_pts[argmin].rec) argmin = i;
  c.expect(argmin != 0 && argmin + 1 != b_pts.size(),
           "rec minimized at the beta_max grid boundary (value " +
               std::to_string(b_pts[argmin].axis_value) +
               "), not at an interior point");
  return c;
}

// ---------------------------------------------------------------------------
// 8. Metrics oracles
// ---------------------------------------------------------------------------

Checker criterion_8() {
  Checker c;
  auto div = diversity({"a a b"});
  c.expect(div.dist1 == 2.0 / 3, "diversity dist1 hand count");
  c.expect(div.dist2 == 1.0, "diversity dist2 hand count");
  double ent = -(2.0 / 3 * std::log(2.0 / 3) + 1.0 / 3 * std::log(1.0 / 3));
  c.expect(std::abs(div.ent - ent) < 1e-12, "diversity entropy hand count");

  // Uniform model perplexity equals the vocabulary size.
  TrainConfig cfg = desk_config("lstm_lm");
  const int vocab_size = 53;
  Model<float> model(model_config_from(cfg, vocab_size), 3);
  model.params().get("dec.out_w").value_mut().setZero();
  model.params().get("dec.out_b").value_mut().setZero();
  Dataset ds;
  ds.sentences = {{2, 4, 5, 3}, {2, 6, 3}};
  Checkpoint ckpt = to_checkpoint(model, cfg, false, LengthHistogram(ds));
  auto rep = evaluate(ckpt, ds);
  c.expect(std::abs(rep.ppl - vocab_size) < 1e-9 * vocab_size,
           "uniform model ppl != vocab size");

  // Batch-size invariance on the trained desk checkpoint.
  const auto& r = desk_run();
  auto r1 = evaluate(r.davam_stage2, r.test, 1);
  auto r32 = evaluate(r.davam_stage2, r.test, 32);
  std::printf("    batch-size drift: rec %.2e, kl %.2e\n",
              std::abs(r1.rec - r32.rec), std::abs(r1.kl - r32.kl));
  c.expect(std::abs(r1.rec - r32.rec) < 1e-8, "evaluate rec varies with batch size");
  c.expect(std::abs(r1.ppl - r32.ppl) < 1e-8, "evaluate ppl varies with batch size");
  c.expect(std::abs(r1.kl - r32.kl) < 1e-8, "evaluate kl varies with batch size");
  return c;
}

// ---------------------------------------------------------------------------
// 9. Determinism and persistence
// ---------------------------------------------------------------------------

Checker criterion_9() {
  Checker c;
  auto lines = make_grammar_corpus(80, 901);
  Vocab vocab = build_vocab_from_lines(lines, 300);
  Dataset train = encode_dataset(lines, vocab, 100);
  Dataset valid = encode_dataset(make_grammar_corpus(20, 902), vocab, 100);
  TrainConfig cfg = desk_config("davam");
  cfg.epochs = 5;
  cfg.stage_two_epochs = 4;

  auto a = train_stage_one<float>(train, valid, vocab.size(), cfg);
  auto b = train_stage_one<float>(train, valid, vocab.size(), cfg);
  c.expect(a.log.deterministic_serialize() == b.log.deterministic_serialize(),
           "train logs differ across identical seeded runs");
  c.expect(a.checkpoint.content_hash() == b.checkpoint.content_hash(),
           "checkpoints differ across identical seeded runs");

  std::string path = "/tmp/davam_acceptance_ckpt.ckpt";
  a.checkpoint.save(path);
  Checkpoint loaded = Checkpoint::load(path);
  c.expect(loaded.content_hash() == a.checkpoint.content_hash(),
           "checkpoint round trip not bit-exact");
  for (std::size_t i = 0; i < loaded.tensors.size(); ++i)
    c.expect(loaded.tensors[i].data == a.checkpoint.tensors[i].data,
             "tensor payload changed in round trip");

  // Distinct error taxonomy.
  {
    std::ofstream out("/tmp/davam_acceptance_bad.ckpt", std::ios::binary);
    out << "DAVAMCKPTgarbage";
  }
  bool corrupt = false;
  try {
    Checkpoint::load("/tmp/davam_acceptance_bad.ckpt");
  } catch (const CorruptCheckpointError&) {
    corrupt = true;
  } catch (...) {
  }
  c.expect(corrupt, "truncated container did not raise the corrupt error");

  Checkpoint vbad = a.checkpoint;
  vbad.version = 77;
  vbad.save("/tmp/davam_acceptance_ver.ckpt");
  bool version = false;
  try {
    Checkpoint::load("/tmp/davam_acceptance_ver.ckpt");
  } catch (const CheckpointVersionError&) {
    version = true;
  } catch (...) {
  }
  c.expect(version, "version mismatch did not raise its error");

  Checkpoint missing = a.checkpoint;
  missing.tensors.erase(missing.tensors.begin());
  bool miss = false;
  try {
    model_from_checkpoint<float>(missing, LoadParts::all());
  } catch (const MissingTensorError&) {
    miss = true;
  } catch (...) {
  }
  c.expect(miss, "missing tensor did not raise its error");

  TrainConfig gcfg = desk_config("gavam");
  gcfg.epochs = 2;
  auto gavam = train_stage_one<float>(train, valid, vocab.size(), gcfg);
  bool kind = false;
  try {
    train_stage_two<float>(train, valid, gavam.checkpoint);
  } catch (const ModelKindError&) {
    kind = true;
  } catch (...) {
  }
  c.expect(kind, "stage two on gavam did not raise the model-kind error");

  bool stage = false;
  try {
    GenerateOptions opt;
    opt.n = 1;
    generate_from_scratch(a.checkpoint, vocab, opt);
  } catch (const StageError&) {
    stage = true;
  } catch (...) {
  }
  c.expect(stage, "generation without stage two did not raise the stage error");
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> filter;
  for (int i = 1; i < argc; ++i) filter.insert(std::atoi(argv[i]));
  auto wanted = [&](int id) { return filter.empty() || filter.count(id); };

  struct Entry {
    int id;
    const char* name;
    Checker (*fn)();
  };
  const std::vector<Entry> criteria = {
      {1, "formula fidelity (Gaussian and discrete KL closed forms + MC oracle)",
       criterion_1},
      {2, "collapse-freedom invariant (KL gradients and stage-two freeze)",
       criterion_2},
      {3, "gradient correctness (primitives at 1e-6, composite at 1e-4)",
       criterion_3},
      {4, "quantizer oracles (nearest neighbor, k-means, EMA)", criterion_4},
      {5, "prior causality and Markov recovery", criterion_5},
      {6, "desk-scale behavioral reproduction", criterion_6},
      {7, "paper-scale declaration and sensitivity sweeps", criterion_7},
      {8, "metrics oracles (diversity, uniform PPL, batch invariance)",
       criterion_8},
      {9, "determinism and persistence", criterion_9},
  };

  int failures = 0;
  for (const auto& entry : criteria) {
    if (!wanted(entry.id)) continue;
    auto t0 = std::chrono::steady_clock::now();
    Checker result;
    try {
      result = entry.fn();
    } catch (const std::exception& e) {
      result.ok = false;
      result.first_failure = std::string("exception: ") + e.what();
    }
    double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("[%s] criterion %d: %s (%.1fs)%s%s\n",
                result.ok ? "PASS" : "FAIL", entry.id, entry.name, secs,
                result.ok ? "" : " — ", result.ok ? "" : result.first_failure.c_str());
    std::fflush(stdout);
    if (!result.ok) ++failures;
  }
  if (failures > 0)
    std::printf("%d criterion(s) failed\n", failures);
  return failures;
}
