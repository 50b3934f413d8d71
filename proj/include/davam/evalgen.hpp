// SPDX-License-Identifier: Apache-2.0
//
// Evaluation and generation: Rec/PPL/KL on held-out corpora, generation
// from scratch through the trained prior, diversity metrics, the LM-based
// fluency proxy, and the data-augmentation study.

#pragma once

#include "davam/checkpoint.hpp"
#include "davam/corpus.hpp"
#include "davam/train_config.hpp"

#include <string>
#include <vector>

namespace davam {

struct EvalReport {
  double rec = 0;  // mean per-sentence summed NLL, nats
  double ppl = 0;  // exp(total NLL / predicted tokens)
  // Reported KL convention: quantized kinds average -log gamma along the
  // latent sequence; gavam reports the per-sentence Gaussian sum; vae the
  // per-sentence KL to N(0, I); lstm_lm has none.
  double kl = 0;
  double kl_per_sentence = 0;  // mean per-sentence KL sum, all kinds
  std::int64_t token_count = 0;
  std::int64_t sentence_count = 0;

  std::string table() const;
  std::string json_line() const;
};

// Teacher-forced evaluation in double precision; deterministic, and
// batch-size invariant to accumulation tolerance.
EvalReport evaluate(const Checkpoint& ckpt, const Dataset& corpus,
                    int batch_size = 32);

struct GenerateOptions {
  int n = 1;
  int fixed_length = 0;  // 0: draw T from the checkpoint's length histogram
  std::uint64_t seed = 1;
  double temperature = 1.0;  // prior sampling temperature (quantized kinds)
};

// Samples sentences with no source input: latent sequence from the prior,
// tokens from the decoder softmax until EOS or twice the latent length.
// BOS/EOS framing is stripped from the returned text.
std::vector<std::string> generate_from_scratch(const Checkpoint& ckpt,
                                               const Vocab& vocab,
                                               const GenerateOptions& opt);

struct DiversityReport {
  double ent = 0;    // unigram entropy of the pooled output, nats
  double dist1 = 0;  // distinct unigrams / total unigrams
  double dist2 = 0;  // distinct bigrams / total bigrams
};

DiversityReport diversity(const std::vector<std::string>& sentences);

// Mean per-sentence perplexity under a reference language model trained on
// held-out data. A proxy for fluency; not comparable to scores from
// external pretrained models.
double fluency_proxy(const std::vector<std::string>& sentences,
                     const Checkpoint& reference_lm, const Vocab& vocab);

struct AugmentResult {
  std::size_t base_size = 0;
  double ratio = 0;
  double ppl_base = 0;
  double ppl_aug = 0;

  std::string table() const;
};

// Generates ratio * |base| sentences from the checkpoint, appends them to
// the base training lines, trains one language model on each corpus with an
// identical config and seed, and reports the test perplexity pair.
AugmentResult augment(const std::vector<std::string>& base_train_lines,
                      const std::vector<std::string>& valid_lines,
                      const std::vector<std::string>& test_lines, double ratio,
                      const Checkpoint& davam_ckpt, const Vocab& vocab,
                      const TrainConfig& lm_config);

}  // namespace davam
