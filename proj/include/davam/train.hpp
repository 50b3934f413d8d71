// SPDX-License-Identifier: Apache-2.0
//
// Two-stage training. Stage one: SGD on phi and theta (psi joins for gavam,
// whose objective is minimized jointly), gradient clipping at a global norm,
// EMA codebook updates after each optimizer step, K-means re-initialization
// of the code book from the first epoch's encoder states, beta annealing,
// plateau-driven learning-rate decay with a bounded decay count, best
// validation checkpoint retained. Stage two: the categorical prior alone
// fits the frozen posterior's index sequences.

#pragma once

#include "davam/checkpoint.hpp"
#include "davam/corpus.hpp"
#include "davam/models.hpp"
#include "davam/train_config.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <numeric>
#include <string>
#include <vector>

namespace davam {

// beta_start through the warm-up epochs, then a linear ramp to beta_max over
// the following warmup_epochs epochs, beta_max afterwards.
inline double anneal_beta(int epoch, const TrainConfig& cfg) {
  if (epoch < 0) throw ContractError("anneal_beta: epoch must be >= 0");
  const int w = cfg.warmup_epochs;
  if (epoch <= w) return cfg.beta_start;
  if (epoch >= 2 * w) return cfg.beta_max;
  return cfg.beta_start +
         (cfg.beta_max - cfg.beta_start) * static_cast<double>(epoch - w) / w;
}

// Vanilla-VAE KL weight: 0 -> 1 linearly over anneal_epochs.
inline double vae_kl_weight(int epoch, const TrainConfig& cfg) {
  if (cfg.anneal_epochs == 0) return 1.0;
  double w = static_cast<double>(epoch) / cfg.anneal_epochs;
  return w > 1.0 ? 1.0 : w;
}

struct TrainLogRecord {
  int epoch = 0;
  double rec = 0, kl = 0, commit = 0;
  double lr = 0, beta = 0;
  double code_usage_entropy = 0;
  double val_rec = 0, val_kl = 0, val_total = 0;
  int code_restarts = 0;
  double wall_time_s = 0;

  // Fixed key order; %.17g round-trips doubles exactly, so identical runs
  // serialize identically.
  std::string to_json(bool with_wall_time) const {
    char buf[512];
    std::snprintf(buf, sizeof(buf),
                  "{\"epoch\":%d,\"rec\":%.17g,\"kl\":%.17g,\"commit\":%.17g,"
                  "\"lr\":%.17g,\"beta\":%.17g,\"code_usage_entropy\":%.17g,"
                  "\"val_rec\":%.17g,\"val_kl\":%.17g,\"val_total\":%.17g,"
                  "\"code_restarts\":%d",
                  epoch, rec, kl, commit, lr, beta, code_usage_entropy, val_rec,
                  val_kl, val_total, code_restarts);
    std::string line(buf);
    if (with_wall_time) {
      std::snprintf(buf, sizeof(buf), ",\"wall_time_s\":%.6f", wall_time_s);
      line += buf;
    }
    line += "}";
    return line;
  }
};

struct TrainLog {
  std::vector<TrainLogRecord> records;

  std::string serialize(bool with_wall_time = true) const {
    std::string out;
    for (const auto& r : records) out += r.to_json(with_wall_time) + "\n";
    return out;
  }

  // Wall time is inherently non-deterministic; reproducibility contracts
  // compare everything else.
  std::string deterministic_serialize() const { return serialize(false); }

  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("trainlog: cannot open " + path);
    out << serialize(true);
  }
};

inline ModelConfig model_config_from(const TrainConfig& tc, int vocab_size) {
  ModelConfig mc;
  mc.kind = parse_model_kind(tc.model_kind);
  mc.vocab_size = vocab_size;
  mc.embed_dim = tc.embed_dim;
  mc.hidden_dim = tc.hidden_dim;
  mc.latent_dim = tc.latent_dim;
  mc.attn_dim = tc.attn_dim == 0 ? tc.hidden_dim : tc.attn_dim;
  mc.codebook_size = tc.codebook_size;
  mc.prior_layers = tc.prior_layers;
  mc.prior_kernel = tc.prior_kernel;
  mc.prior_channels = tc.prior_channels;
  mc.ema_decay = tc.ema_decay;
  mc.ema_epsilon = tc.ema_epsilon;
  mc.init_scale = tc.init_scale;
  return mc;
}

// ---------------------------------------------------------------------------
// Checkpoint <-> model
// ---------------------------------------------------------------------------

inline TensorGroup to_tensor_group(ParamGroup g) {
  switch (g) {
    case ParamGroup::Phi: return TensorGroup::Phi;
    case ParamGroup::Theta: return TensorGroup::Theta;
    case ParamGroup::Psi: return TensorGroup::Psi;
  }
  return TensorGroup::Meta;
}

template <typename Scalar>
Checkpoint to_checkpoint(const Model<Scalar>& model, const TrainConfig& cfg,
                         bool has_prior, const LengthHistogram& hist) {
  Checkpoint ckpt;
  ckpt.model_kind = cfg.model_kind;
  ckpt.has_prior = has_prior;
  ckpt.config_text = cfg.serialize();
  for (const auto& e : model.params().entries()) {
    NamedTensor t;
    t.name = e.name;
    t.group = to_tensor_group(e.group);
    t.data = e.tensor.value().template cast<float>();
    ckpt.tensors.push_back(std::move(t));
  }
  if (is_quantized(model.kind())) {
    const auto& book = model.book();
    ckpt.tensors.push_back(
        {"codebook.codes", TensorGroup::CodeBook, book.codes.template cast<float>()});
    ckpt.tensors.push_back({"codebook.ema_counts", TensorGroup::CodeBook,
                            book.ema_counts.template cast<float>()});
    ckpt.tensors.push_back({"codebook.ema_sums", TensorGroup::CodeBook,
                            book.ema_sums.template cast<float>()});
  }
  MatF hist_mat(2, static_cast<Eigen::Index>(hist.lengths().size()));
  for (std::size_t i = 0; i < hist.lengths().size(); ++i) {
    hist_mat(0, static_cast<Eigen::Index>(i)) = static_cast<float>(hist.lengths()[i]);
    hist_mat(1, static_cast<Eigen::Index>(i)) = static_cast<float>(hist.probs()[i]);
  }
  ckpt.tensors.push_back({"length_histogram", TensorGroup::Meta, hist_mat});
  return ckpt;
}

// Which checkpoint groups a consumer needs. Generation deliberately skips
// phi: decoding from the prior must not touch encoder parameters.
struct LoadParts {
  bool phi = true;
  bool theta = true;
  bool psi = false;

  static LoadParts all() { return {true, true, true}; }
  static LoadParts generation() { return {false, true, true}; }
  static LoadParts evaluation(bool with_prior) { return {true, true, with_prior}; }
};

template <typename Scalar>
struct LoadedModel {
  Model<Scalar> model;
  TrainConfig cfg;
  LengthHistogram hist;
  bool has_prior = false;
};

template <typename Scalar>
LoadedModel<Scalar> model_from_checkpoint(const Checkpoint& ckpt, LoadParts parts) {
  TrainConfig cfg = TrainConfig::parse_text(ckpt.config_text);
  if (cfg.model_kind != ckpt.model_kind)
    throw CorruptCheckpointError("checkpoint: config/kind disagreement");
  const NamedTensor& embed = ckpt.require("embed.table");
  int vocab_size = static_cast<int>(embed.data.rows());
  Model<Scalar> model(model_config_from(cfg, vocab_size), /*init_seed=*/0);

  for (const auto& e : model.params().entries()) {
    bool needed = (e.group == ParamGroup::Phi && parts.phi) ||
                  (e.group == ParamGroup::Theta && parts.theta) ||
                  (e.group == ParamGroup::Psi && parts.psi);
    if (!needed) continue;
    const NamedTensor& t = ckpt.require(e.name);
    if (t.data.rows() != e.tensor.rows() || t.data.cols() != e.tensor.cols())
      throw CorruptCheckpointError("checkpoint: shape mismatch for " + e.name);
    Tensor<Scalar> p = e.tensor;
    p.value_mut() = t.data.template cast<Scalar>();
  }
  if (is_quantized(model.kind())) {
    auto& book = model.book();
    book.codes = ckpt.require("codebook.codes").data.template cast<Scalar>();
    book.ema_counts =
        ckpt.require("codebook.ema_counts").data.template cast<Scalar>();
    book.ema_sums = ckpt.require("codebook.ema_sums").data.template cast<Scalar>();
  }
  const NamedTensor& hist_mat = ckpt.require("length_histogram");
  std::vector<int> lengths;
  std::vector<double> probs;
  for (Eigen::Index i = 0; i < hist_mat.data.cols(); ++i) {
    lengths.push_back(static_cast<int>(hist_mat.data(0, i)));
    probs.push_back(static_cast<double>(hist_mat.data(1, i)));
  }
  return {std::move(model), std::move(cfg), LengthHistogram(lengths, probs),
          ckpt.has_prior};
}

// ---------------------------------------------------------------------------
// Optimizer step
// ---------------------------------------------------------------------------

template <typename Scalar>
struct GroupFilter {
  bool phi = false, theta = false, psi = false;

  bool wants(ParamGroup g) const {
    return (g == ParamGroup::Phi && phi) || (g == ParamGroup::Theta && theta) ||
           (g == ParamGroup::Psi && psi);
  }
};

// Clip to a global norm over the selected groups, then plain SGD.
template <typename Scalar>
void sgd_step(ParameterRegistry<Scalar>& reg, const GroupFilter<Scalar>& groups,
              Scalar lr, Scalar clip_norm) {
  Scalar norm_sq = 0;
  for (const auto& e : reg.entries())
    if (groups.wants(e.group) && e.tensor.has_grad())
      norm_sq += e.tensor.grad().squaredNorm();
  Scalar scale = Scalar(1);
  if (clip_norm > 0 && norm_sq > clip_norm * clip_norm)
    scale = clip_norm / std::sqrt(norm_sq);
  for (const auto& e : reg.entries()) {
    if (!groups.wants(e.group) || !e.tensor.has_grad()) continue;
    Tensor<Scalar> p = e.tensor;
    p.value_mut() -= lr * scale * p.grad();
  }
}

// ---------------------------------------------------------------------------
// Plateau-driven learning-rate schedule
// ---------------------------------------------------------------------------

struct PlateauSchedule {
  double lr;
  double factor;
  int patience;
  int max_decays;

  double best = std::numeric_limits<double>::infinity();
  int stale = 0;
  int decays = 0;
  bool stopped = false;

  PlateauSchedule(double lr0, double factor_, int patience_, int max_decays_)
      : lr(lr0), factor(factor_), patience(patience_), max_decays(max_decays_) {}

  // Returns true when this epoch's validation loss is a new best.
  bool observe(double val_loss) {
    if (val_loss < best) {
      best = val_loss;
      stale = 0;
      return true;
    }
    if (++stale >= patience) {
      stale = 0;
      if (decays >= max_decays) {
        stopped = true;
      } else {
        lr *= factor;
        ++decays;
      }
    }
    return false;
  }
};

// ---------------------------------------------------------------------------
// Stage one
// ---------------------------------------------------------------------------

template <typename Scalar>
struct StageResult {
  Checkpoint checkpoint;  // best validation
  TrainLog log;
};

namespace detail_train {

inline void dump_batch(const Batch& batch) {
  std::cerr << "offending batch (token ids):\n";
  for (int b = 0; b < batch.size(); ++b) {
    for (int t = 0; t < batch.max_len(); ++t) std::cerr << batch.token_ids(b, t) << ' ';
    std::cerr << '\n';
  }
}

template <typename Scalar>
LossBreakdown<Scalar> validation_pass(const Model<Scalar>& model,
                                      const Dataset& valid,
                                      const TrainConfig& cfg, Scalar beta,
                                      Scalar kl_weight) {
  NoGradGuard ng;
  LossBreakdown<Scalar> agg;
  std::size_t n = 0;
  for (const auto& batch : make_batches(valid, cfg.batch_size, /*seed=*/0)) {
    ForwardOptions<Scalar> opt;
    opt.beta = beta;
    opt.kl_weight = kl_weight;
    opt.deterministic_latent = true;
    auto r = model.forward(batch, opt);
    const auto b = static_cast<Scalar>(batch.size());
    agg.rec += r.loss.rec * b;
    agg.kl += r.loss.kl * b;
    agg.commit += r.loss.commit * b;
    agg.total += r.loss.total * b;
    n += static_cast<std::size_t>(batch.size());
  }
  const auto inv = Scalar(1) / static_cast<Scalar>(n);
  agg.rec *= inv;
  agg.kl *= inv;
  agg.commit *= inv;
  agg.total *= inv;
  return agg;
}

}  // namespace detail_train

template <typename Scalar = float>
StageResult<Scalar> train_stage_one(const Dataset& train, const Dataset& valid,
                                    int vocab_size, const TrainConfig& cfg) {
  cfg.validate();
  if (train.empty() || valid.empty())
    throw DataError("train_stage_one: empty corpus split");

  Model<Scalar> model(model_config_from(cfg, vocab_size), derive_seed(cfg.seed, 1));
  Rng noise(derive_seed(cfg.seed, 2));
  Rng restart_rng(derive_seed(cfg.seed, 4));
  const bool quantized = is_quantized(model.kind());
  const bool joint_psi = model.kind() == ModelKind::Gavam;
  GroupFilter<Scalar> groups{true, true, joint_psi};

  LengthHistogram hist(train);
  PlateauSchedule sched(cfg.lr, cfg.lr_decay_factor, cfg.plateau_patience,
                        cfg.max_decays);
  StageResult<Scalar> result;
  std::vector<Mat<Scalar>> kmeans_buffer;
  Mat<Scalar> recent_rows;

  for (int epoch = 0; epoch < cfg.epochs && !sched.stopped; ++epoch) {
    auto t0 = std::chrono::steady_clock::now();
    const auto beta = static_cast<Scalar>(anneal_beta(epoch, cfg));
    const auto klw = static_cast<Scalar>(
        model.kind() == ModelKind::Vae ? vae_kl_weight(epoch, cfg) : 1.0);

    double rec_sum = 0, kl_sum = 0, commit_sum = 0;
    std::size_t sentences = 0;
    for (const auto& batch :
         make_batches(train, cfg.batch_size, derive_seed(cfg.seed, 100 + static_cast<std::uint64_t>(epoch)))) {
      ForwardOptions<Scalar> opt;
      opt.beta = beta;
      opt.kl_weight = klw;
      opt.noise_rng = &noise;
      ForwardResult<Scalar> r;
      try {
        r = model.forward(batch, opt);
      } catch (const NumericError&) {
        detail_train::dump_batch(batch);
        throw;
      }
      model.params().zero_grads();
      r.total.backward();
      sgd_step(model.params(), groups, static_cast<Scalar>(sched.lr),
               static_cast<Scalar>(cfg.grad_clip));
      if (quantized) {
        // EMA follows the optimizer step of the same batch.
        ema_update(model.book(), r.ema_rows, r.ema_indices);
        if (epoch == 0) kmeans_buffer.push_back(r.ema_rows);
        recent_rows = r.ema_rows;
      }
      rec_sum += static_cast<double>(r.loss.rec) * batch.size();
      kl_sum += static_cast<double>(r.loss.kl) * batch.size();
      commit_sum += static_cast<double>(r.loss.commit) * batch.size();
      sentences += static_cast<std::size_t>(batch.size());
    }

    TrainLogRecord rec;
    rec.epoch = epoch;
    rec.rec = rec_sum / static_cast<double>(sentences);
    rec.kl = kl_sum / static_cast<double>(sentences);
    rec.commit = commit_sum / static_cast<double>(sentences);
    rec.lr = sched.lr;
    rec.beta = beta;

    if (quantized && epoch == 0) {
      // K-means over the first epoch's encoder states replaces the random
      // code book before epoch two.
      Eigen::Index total_rows = 0;
      for (const auto& m : kmeans_buffer) total_rows += m.rows();
      Mat<Scalar> samples(total_rows, model.book().dim());
      Eigen::Index at = 0;
      for (const auto& m : kmeans_buffer) {
        samples.middleRows(at, m.rows()) = m;
        at += m.rows();
      }
      model.book() = kmeans_init(samples, cfg.codebook_size, cfg.kmeans_iters,
                                 derive_seed(cfg.seed, 3),
                                 static_cast<Scalar>(cfg.ema_decay),
                                 static_cast<Scalar>(cfg.ema_epsilon));
      kmeans_buffer.clear();
    } else if (quantized && cfg.dead_code_restarts != 0 && recent_rows.rows() > 0) {
      rec.code_restarts =
          dead_code_restart(model.book(), recent_rows, restart_rng,
                            static_cast<Scalar>(cfg.dead_code_threshold));
    }
    if (quantized) rec.code_usage_entropy = codebook_usage_entropy(model.book());

    auto val = detail_train::validation_pass(model, valid, cfg, beta, klw);
    rec.val_rec = static_cast<double>(val.rec);
    rec.val_kl = static_cast<double>(val.kl);
    rec.val_total = static_cast<double>(val.total);
    // Plateau and best-checkpoint selection watch the unannealed validation
    // ELBO (rec + kl): the beta-weighted commitment and the vae KL ramp are
    // training schedules and would otherwise fake plateaus as they grow.
    if (sched.observe(rec.val_rec + rec.val_kl) || result.checkpoint.tensors.empty())
      result.checkpoint = to_checkpoint(model, cfg, /*has_prior=*/false, hist);

    rec.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.log.records.push_back(rec);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Stage two
// ---------------------------------------------------------------------------

struct IndexBatch {
  IntMat z;      // [B x T_max], padded with 0
  IntMat mask;   // 1 where valid
  std::vector<int> lengths;
};

inline std::vector<IndexBatch> make_index_batches(
    const std::vector<LatentSequence>& seqs, int batch_size, std::uint64_t seed) {
  if (seqs.empty()) throw DataError("make_index_batches: no sequences");
  if (batch_size < 1) throw ConfigError("make_index_batches: batch_size must be >= 1");
  Rng rng(seed);
  std::vector<std::size_t> order(seqs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(order);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return seqs[a].size() < seqs[b].size();
  });
  std::vector<IndexBatch> batches;
  for (std::size_t i = 0; i < order.size(); i += static_cast<std::size_t>(batch_size)) {
    std::size_t n = std::min(order.size() - i, static_cast<std::size_t>(batch_size));
    int t_max = 0;
    for (std::size_t j = 0; j < n; ++j)
      t_max = std::max(t_max, static_cast<int>(seqs[order[i + j]].size()));
    IndexBatch b;
    b.z = IntMat::Zero(static_cast<int>(n), t_max);
    b.mask = IntMat::Zero(static_cast<int>(n), t_max);
    for (std::size_t j = 0; j < n; ++j) {
      const auto& s = seqs[order[i + j]];
      b.lengths.push_back(static_cast<int>(s.size()));
      for (std::size_t t = 0; t < s.size(); ++t) {
        b.z(static_cast<int>(j), static_cast<int>(t)) = s[t];
        b.mask(static_cast<int>(j), static_cast<int>(t)) = 1;
      }
    }
    batches.push_back(std::move(b));
  }
  rng.shuffle(batches);
  return batches;
}

// Mean per-sequence NLL of a batch under the categorical prior, as a graph.
template <typename Scalar>
Tensor<Scalar> prior_batch_nll(const CausalConvStack<Scalar>& stack,
                               const IndexBatch& batch) {
  auto logits = prior_logits(stack, batch.z);
  const int n = static_cast<int>(batch.z.rows());
  Tensor<Scalar> total;
  for (int t = 0; t < batch.z.cols(); ++t) {
    std::vector<int> targets(static_cast<std::size_t>(n));
    std::vector<Scalar> w(static_cast<std::size_t>(n));
    for (int b = 0; b < n; ++b) {
      targets[static_cast<std::size_t>(b)] = batch.z(b, t);
      w[static_cast<std::size_t>(b)] = static_cast<Scalar>(batch.mask(b, t));
    }
    Tensor<Scalar> nll =
        sum_all(cross_entropy_rows(logits[static_cast<std::size_t>(t)], targets, w));
    total = (t == 0) ? nll : add(total, nll);
  }
  return mul_const(total, Scalar(1) / static_cast<Scalar>(n));
}

// Latent sequences of every sentence under the frozen posterior.
template <typename Scalar>
std::vector<LatentSequence> dataset_indices(const Model<Scalar>& model,
                                            const Dataset& ds, int batch_size) {
  std::vector<LatentSequence> out;
  Dataset ordered = ds;  // keep input order: batch by consecutive slices
  for (std::size_t i = 0; i < ordered.sentences.size();
       i += static_cast<std::size_t>(batch_size)) {
    std::vector<std::vector<int>> group;
    for (std::size_t j = i;
         j < std::min(ordered.sentences.size(), i + static_cast<std::size_t>(batch_size));
         ++j)
      group.push_back(ordered.sentences[j]);
    Batch batch = make_batch(group);
    for (auto& z : model.posterior_indices(batch)) out.push_back(std::move(z));
  }
  return out;
}

template <typename Scalar = float>
StageResult<Scalar> train_stage_two(const Dataset& train, const Dataset& valid,
                                    const Checkpoint& stage_one) {
  ModelKind kind = parse_model_kind(stage_one.model_kind);
  if (!is_quantized(kind))
    throw ModelKindError("stage two requires a quantized model, got " +
                         stage_one.model_kind);
  auto loaded = model_from_checkpoint<Scalar>(stage_one, LoadParts::all());
  Model<Scalar>& model = loaded.model;
  const TrainConfig& cfg = loaded.cfg;

  auto book_hash = [&model]() {
    const auto& b = model.book();
    std::uint64_t h = fnv1a64(
        b.codes.data(), sizeof(Scalar) * static_cast<std::size_t>(b.codes.size()));
    h = fnv1a64(b.ema_counts.data(),
                sizeof(Scalar) * static_cast<std::size_t>(b.ema_counts.size()), h);
    return fnv1a64(b.ema_sums.data(),
                   sizeof(Scalar) * static_cast<std::size_t>(b.ema_sums.size()), h);
  };
  const std::uint64_t phi_theta_hash =
      model.params().content_hash({ParamGroup::Phi, ParamGroup::Theta});
  const std::uint64_t frozen_book_hash = book_hash();

  auto train_z = dataset_indices(model, train, cfg.batch_size);
  auto valid_z = dataset_indices(model, valid, cfg.batch_size);

  PlateauSchedule sched(cfg.lr, cfg.lr_decay_factor, cfg.plateau_patience,
                        cfg.max_decays);
  GroupFilter<Scalar> psi_only{false, false, true};
  StageResult<Scalar> result;

  for (int epoch = 0; epoch < cfg.stage_two_epochs && !sched.stopped; ++epoch) {
    auto t0 = std::chrono::steady_clock::now();
    double nll_sum = 0;
    std::size_t count = 0;
    for (const auto& batch : make_index_batches(
             train_z, cfg.batch_size,
             derive_seed(cfg.seed, 200 + static_cast<std::uint64_t>(epoch)))) {
      Tensor<Scalar> loss = prior_batch_nll(model.index_prior(), batch);
      if (!std::isfinite(static_cast<double>(loss.item())))
        throw NumericError("stage two: non-finite prior loss");
      model.params().zero_grads();
      loss.backward();
      sgd_step(model.params(), psi_only, static_cast<Scalar>(sched.lr),
               static_cast<Scalar>(cfg.grad_clip));
      nll_sum += static_cast<double>(loss.item()) * batch.z.rows();
      count += static_cast<std::size_t>(batch.z.rows());
    }

    double val_nll = 0;
    {
      NoGradGuard ng;
      std::size_t vn = 0;
      for (const auto& batch : make_index_batches(valid_z, cfg.batch_size, 0)) {
        val_nll +=
            static_cast<double>(prior_batch_nll(model.index_prior(), batch).item()) *
            batch.z.rows();
        vn += static_cast<std::size_t>(batch.z.rows());
      }
      val_nll /= static_cast<double>(vn);
    }

    TrainLogRecord rec;
    rec.epoch = epoch;
    rec.kl = nll_sum / static_cast<double>(count);
    rec.lr = sched.lr;
    rec.val_kl = val_nll;
    rec.val_total = val_nll;
    if (sched.observe(val_nll) || result.checkpoint.tensors.empty())
      result.checkpoint = to_checkpoint(model, cfg, /*has_prior=*/true, loaded.hist);
    rec.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.log.records.push_back(rec);
  }

  if (model.params().content_hash({ParamGroup::Phi, ParamGroup::Theta}) !=
          phi_theta_hash ||
      book_hash() != frozen_book_hash)
    throw ContractError("stage two touched phi/theta/codebook state");
  return result;
}

}  // namespace davam
