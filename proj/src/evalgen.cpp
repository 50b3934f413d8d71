// SPDX-License-Identifier: Apache-2.0
#include "davam/evalgen.hpp"

#include "davam/models.hpp"
#include "davam/train.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

namespace davam {

namespace {

void check_vocab_fits(const Dataset& ds, int vocab_size) {
  for (const auto& s : ds.sentences)
    for (int id : s)
      if (id < 0 || id >= vocab_size)
        throw ConfigError("evaluate: corpus and checkpoint vocabularies differ");
}

// -log gamma_{t, z_t} summed over one sequence, via the prior op itself.
double sequence_prior_nll(const CausalConvStack<double>& stack,
                          const LatentSequence& z) {
  NoGradGuard ng;
  auto out = prior_forward(stack, z);
  return prior_nll(z, out).item();
}

}  // namespace

std::string EvalReport::table() const {
  char buf[256];
  std::string out;
  out += "  Rec      PPL      KL\n";
  std::snprintf(buf, sizeof(buf), "  %-8.2f %-8.2f %-8.4f\n", rec, ppl, kl);
  out += buf;
  std::snprintf(buf, sizeof(buf), "  (%lld sentences, %lld predicted tokens)\n",
                static_cast<long long>(sentence_count),
                static_cast<long long>(token_count));
  out += buf;
  return out;
}

std::string EvalReport::json_line() const {
  char buf[320];
  std::snprintf(buf, sizeof(buf),
                "{\"rec\":%.17g,\"ppl\":%.17g,\"kl\":%.17g,"
                "\"kl_per_sentence\":%.17g,\"token_count\":%lld,"
                "\"sentence_count\":%lld}",
                rec, ppl, kl, kl_per_sentence, static_cast<long long>(token_count),
                static_cast<long long>(sentence_count));
  return buf;
}

EvalReport evaluate(const Checkpoint& ckpt, const Dataset& corpus, int batch_size) {
  if (corpus.empty()) throw DataError("evaluate: empty corpus");
  ModelKind kind = parse_model_kind(ckpt.model_kind);
  bool use_prior = ckpt.has_prior || kind == ModelKind::Gavam;
  auto loaded = model_from_checkpoint<double>(
      ckpt, LoadParts::evaluation(is_quantized(kind) ? ckpt.has_prior
                                                     : kind == ModelKind::Gavam));
  const Model<double>& model = loaded.model;
  check_vocab_fits(corpus, model.config().vocab_size);

  NoGradGuard ng;
  EvalReport report;
  double nll_total = 0, kl_sentence_total = 0, kl_convention_total = 0;
  for (std::size_t i = 0; i < corpus.sentences.size();
       i += static_cast<std::size_t>(batch_size)) {
    std::vector<std::vector<int>> group;
    for (std::size_t j = i;
         j < std::min(corpus.sentences.size(), i + static_cast<std::size_t>(batch_size));
         ++j)
      group.push_back(corpus.sentences[j]);
    Batch batch = make_batch(group);

    ForwardOptions<double> opt;
    opt.deterministic_latent = true;
    auto r = model.forward(batch, opt);
    for (int b = 0; b < batch.size(); ++b) {
      nll_total += r.sentence_nll(b, 0);
      report.token_count += batch.lengths[static_cast<std::size_t>(b)] - 1;
    }
    report.sentence_count += batch.size();

    if (is_quantized(kind) && use_prior) {
      for (auto& z : model.posterior_indices(batch)) {
        double nll = sequence_prior_nll(model.index_prior(), z);
        kl_sentence_total += nll;
        kl_convention_total += nll / static_cast<double>(z.size());
      }
    } else if (kind == ModelKind::Gavam || kind == ModelKind::Vae) {
      for (int b = 0; b < batch.size(); ++b) {
        kl_sentence_total += r.sentence_kl(b, 0);
        kl_convention_total += r.sentence_kl(b, 0);
      }
    }
  }
  const auto n = static_cast<double>(report.sentence_count);
  report.rec = nll_total / n;
  report.ppl = std::exp(nll_total / static_cast<double>(report.token_count));
  report.kl = kl_convention_total / n;
  report.kl_per_sentence = kl_sentence_total / n;
  return report;
}

// ---------------------------------------------------------------------------
// Generation
// ---------------------------------------------------------------------------

namespace {

// Free-running decode: sample tokens from the softmax until EOS or the cap.
// PAD and BOS are never emitted.
std::vector<int> decode_sample(const Model<float>& model,
                               const std::vector<Tensor<float>>& values,
                               const Tensor<float>& const_context, int cap,
                               Rng& rng) {
  NoGradGuard ng;
  const int vocab = model.config().vocab_size;
  Mat<float> enc_mask;
  AttentionKeys<float> keys;
  if (has_attention(model.kind())) {
    enc_mask = Mat<float>::Ones(1, static_cast<Eigen::Index>(values.size()));
    keys = attention_keys(values, model.attention_params());
  }
  LstmState<float> state =
      has_attention(model.kind()) || model.kind() == ModelKind::LstmLm
          ? lstm_zero_state(model.decoder().lstm, 1)
          : model.decoder_init_state(const_context);
  std::vector<int> out = {Vocab::kBos};
  for (int step = 0; step < cap; ++step) {
    Tensor<float> context;
    if (has_attention(model.kind()))
      context = attend(values, keys, state.h, enc_mask, model.attention_params())
                    .context;
    else if (model.decoder().context_dim > 0)
      context = const_context;
    auto dec = decode_step<float>({out.back()}, context, state, model.embedding(),
                                  model.decoder());
    state = dec.state;
    Eigen::Array<double, 1, Eigen::Dynamic> logits =
        dec.logits.value().row(0).cast<double>().array();
    logits(Vocab::kPad) = -1e30;
    logits(Vocab::kBos) = -1e30;
    logits -= logits.maxCoeff();
    Eigen::Array<double, 1, Eigen::Dynamic> p = logits.exp();
    p /= p.sum();
    double u = rng.uniform();
    int pick = vocab - 1;
    double acc = 0;
    for (int k = 0; k < vocab; ++k) {
      acc += p(k);
      if (u < acc) {
        pick = k;
        break;
      }
    }
    out.push_back(pick);
    if (pick == Vocab::kEos) break;
  }
  return out;
}

}  // namespace

std::vector<std::string> generate_from_scratch(const Checkpoint& ckpt,
                                               const Vocab& vocab,
                                               const GenerateOptions& opt) {
  if (opt.n < 0) throw ContractError("generate: n must be >= 0");
  ModelKind kind = parse_model_kind(ckpt.model_kind);
  if (is_quantized(kind) && !ckpt.has_prior)
    throw StageError("generate: checkpoint lacks the stage-two prior; run the "
                     "prior command first");
  auto loaded = model_from_checkpoint<float>(ckpt, LoadParts::generation());
  const Model<float>& model = loaded.model;
  if (vocab.size() != model.config().vocab_size)
    throw ConfigError("generate: vocabulary size does not match the checkpoint");

  NoGradGuard ng;
  std::vector<std::string> sentences;
  Rng rng(opt.seed);
  for (int i = 0; i < opt.n; ++i) {
    int t_len = opt.fixed_length > 0 ? opt.fixed_length : loaded.hist.sample(rng);
    t_len = std::max(t_len, 2);
    std::vector<Tensor<float>> values;
    Tensor<float> const_context;

    switch (kind) {
      case ModelKind::Davam: {
        LatentSequence z = sample_prior_batch(model.index_prior(), 1, t_len,
                                              opt.temperature, rng.next())[0];
        for (int idx : z) {
          MatF row = model.book().codes.row(idx);
          values.push_back(Tensor<float>::from(std::move(row)));
        }
        break;
      }
      case ModelKind::DavamQ: {
        LatentSequence z =
            sample_prior_batch(model.index_prior(), 1, 1, opt.temperature,
                               rng.next())[0];
        MatF row = model.book().codes.row(z[0]);
        const_context = Tensor<float>::from(std::move(row));
        break;
      }
      case ModelKind::Gavam: {
        Rng noise(rng.next());
        MatF z = sample_gaussian_prior(model.gaussian_prior(), t_len, noise);
        for (int t = 0; t < t_len; ++t) {
          MatF row = z.row(t);
          values.push_back(Tensor<float>::from(std::move(row)));
        }
        break;
      }
      case ModelKind::Vae: {
        MatF z(1, model.config().latent_dim);
        for (int d = 0; d < model.config().latent_dim; ++d)
          z(0, d) = static_cast<float>(rng.normal());
        const_context = Tensor<float>::from(std::move(z));
        break;
      }
      case ModelKind::LstmLm:
        break;
    }

    std::vector<int> ids = decode_sample(model, values, const_context, 2 * t_len, rng);
    sentences.push_back(decode_sentence(ids, vocab));
  }
  return sentences;
}

// ---------------------------------------------------------------------------
// Fluency proxy and augmentation
// ---------------------------------------------------------------------------

double fluency_proxy(const std::vector<std::string>& sentences,
                     const Checkpoint& reference_lm, const Vocab& vocab) {
  if (sentences.empty()) throw ContractError("fluency_proxy: no sentences");
  if (parse_model_kind(reference_lm.model_kind) != ModelKind::LstmLm)
    throw ConfigError("fluency_proxy: reference must be an lstm_lm checkpoint");
  auto loaded = model_from_checkpoint<double>(reference_lm, LoadParts::all());
  if (vocab.size() != loaded.model.config().vocab_size)
    throw ConfigError("fluency_proxy: vocabulary does not match the reference");

  NoGradGuard ng;
  double ppl_sum = 0;
  for (const auto& text : sentences) {
    Batch batch = make_batch({encode_sentence(text, vocab)});
    ForwardOptions<double> opt;
    opt.deterministic_latent = true;
    auto r = loaded.model.forward(batch, opt);
    int tokens = batch.lengths[0] - 1;
    ppl_sum += std::exp(r.sentence_nll(0, 0) / tokens);
  }
  return ppl_sum / static_cast<double>(sentences.size());
}

std::string AugmentResult::table() const {
  char buf[160];
  std::string out = "  base_size ratio ppl_base ppl_aug\n";
  std::snprintf(buf, sizeof(buf), "  %-9zu %-5.2g %-8.3f %-8.3f\n", base_size, ratio,
                ppl_base, ppl_aug);
  out += buf;
  return out;
}

AugmentResult augment(const std::vector<std::string>& base_train_lines,
                      const std::vector<std::string>& valid_lines,
                      const std::vector<std::string>& test_lines, double ratio,
                      const Checkpoint& davam_ckpt, const Vocab& vocab,
                      const TrainConfig& lm_config) {
  if (ratio < 0) throw ConfigError("augment: ratio must be >= 0");
  TrainConfig cfg = lm_config;
  cfg.model_kind = "lstm_lm";
  cfg.validate();

  AugmentResult result;
  result.base_size = base_train_lines.size();
  result.ratio = ratio;

  int n_aug = static_cast<int>(
      std::llround(ratio * static_cast<double>(base_train_lines.size())));
  GenerateOptions gen;
  gen.n = n_aug;
  gen.seed = derive_seed(cfg.seed, 77);
  std::vector<std::string> generated =
      n_aug > 0 ? generate_from_scratch(davam_ckpt, vocab, gen)
                : std::vector<std::string>{};

  Dataset valid = encode_dataset(valid_lines, vocab, cfg.max_sentence_tokens);
  Dataset test = encode_dataset(test_lines, vocab, cfg.max_sentence_tokens);

  auto run_lm = [&](const std::vector<std::string>& train_lines) {
    Dataset train = encode_dataset(train_lines, vocab, cfg.max_sentence_tokens);
    auto stage = train_stage_one<float>(train, valid, vocab.size(), cfg);
    return evaluate(stage.checkpoint, test, cfg.batch_size).ppl;
  };

  result.ppl_base = run_lm(base_train_lines);
  std::vector<std::string> augmented = base_train_lines;
  augmented.insert(augmented.end(), generated.begin(), generated.end());
  result.ppl_aug = run_lm(augmented);
  return result;
}

}  // namespace davam
