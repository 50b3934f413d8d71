// SPDX-License-Identifier: Apache-2.0
//
// Corpus ingestion: whitespace-pre-tokenized text, frequency-ranked
// vocabulary with fixed reserved ids, length-bucketed padded batches.

#pragma once

#include "davam/common.hpp"

#include <map>
#include <string>
#include <unordered_map>
#include <vector>

namespace davam {

class Vocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kBos = 2;
  static constexpr int kEos = 3;
  static constexpr int kReserved = 4;

  static const char* reserved_token(int id);

  Vocab() = default;

  int size() const { return static_cast<int>(id_to_token_.size()) + kReserved; }

  // UNK for anything unseen.
  int token_id(const std::string& token) const;
  const std::string& token(int id) const;

  void add_token(const std::string& token);

  void save(const std::string& path) const;
  static Vocab load(const std::string& path);

 private:
  std::unordered_map<std::string, int> token_to_id_;
  std::vector<std::string> id_to_token_;  // non-reserved, id = index + 4
};

// Tokens ranked by frequency, ties broken lexicographically, capped at
// max_size including the four reserved ids.
Vocab build_vocab(const std::string& corpus_path, int max_size);
Vocab build_vocab_from_lines(const std::vector<std::string>& lines, int max_size);

// BOS + ids + EOS; unknown tokens map to UNK.
std::vector<int> encode_sentence(const std::string& text, const Vocab& vocab);
std::string decode_sentence(const std::vector<int>& ids, const Vocab& vocab);

struct Dataset {
  std::vector<std::vector<int>> sentences;  // framed with BOS/EOS
  std::size_t truncated_count = 0;

  bool empty() const { return sentences.empty(); }
  std::size_t size() const { return sentences.size(); }
};

std::vector<std::string> read_lines(const std::string& path);

// Encodes every line; sentences longer than max_tokens words are truncated
// before EOS and counted.
Dataset encode_dataset(const std::vector<std::string>& lines, const Vocab& vocab,
                       int max_tokens = 100);
Dataset load_dataset(const std::string& path, const Vocab& vocab,
                     int max_tokens = 100);

struct Batch {
  IntMat token_ids;          // [B x T_max], PAD beyond each length
  std::vector<int> lengths;  // includes BOS/EOS
  IntMat mask;               // mask(i, t) = 1 iff t < lengths[i]

  int size() const { return static_cast<int>(lengths.size()); }
  int max_len() const { return static_cast<int>(token_ids.cols()); }
};

Batch make_batch(const std::vector<std::vector<int>>& sentences);

// Deterministic under the seed: sentences are bucketed by similar length to
// limit padding, then batch order is shuffled. Every sentence appears
// exactly once.
std::vector<Batch> make_batches(const Dataset& dataset, int batch_size,
                                std::uint64_t shuffle_seed);

class LengthHistogram {
 public:
  explicit LengthHistogram(const Dataset& dataset);
  LengthHistogram(std::vector<int> lengths, std::vector<double> probs);

  const std::vector<int>& lengths() const { return lengths_; }
  const std::vector<double>& probs() const { return probs_; }

  double mean() const;
  int sample(Rng& rng) const;

 private:
  std::vector<int> lengths_;
  std::vector<double> probs_;
};

}  // namespace davam
