// SPDX-License-Identifier: Apache-2.0
#include "davam/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>

namespace davam {

const char* Vocab::reserved_token(int id) {
  switch (id) {
    case kPad: return "<pad>";
    case kUnk: return "<unk>";
    case kBos: return "[s]";
    case kEos: return "[/s]";
    default: throw ContractError("reserved_token: not a reserved id");
  }
}

int Vocab::token_id(const std::string& token) const {
  auto it = token_to_id_.find(token);
  return it == token_to_id_.end() ? kUnk : it->second;
}

const std::string& Vocab::token(int id) const {
  static const std::string reserved[kReserved] = {"<pad>", "<unk>", "[s]", "[/s]"};
  if (id >= 0 && id < kReserved) return reserved[id];
  int idx = id - kReserved;
  if (idx < 0 || idx >= static_cast<int>(id_to_token_.size()))
    throw ContractError("Vocab::token: id out of range");
  return id_to_token_[static_cast<std::size_t>(idx)];
}

void Vocab::add_token(const std::string& token) {
  if (token_to_id_.count(token)) return;
  int id = static_cast<int>(id_to_token_.size()) + kReserved;
  token_to_id_.emplace(token, id);
  id_to_token_.push_back(token);
}

void Vocab::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("Vocab::save: cannot open " + path);
  for (int i = 0; i < kReserved; ++i) out << reserved_token(i) << "\n";
  for (const auto& t : id_to_token_) out << t << "\n";
}

Vocab Vocab::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("Vocab::load: cannot open " + path);
  Vocab v;
  std::string line;
  for (int i = 0; i < kReserved; ++i) {
    if (!std::getline(in, line) || line != reserved_token(i))
      throw DataError("Vocab::load: bad reserved header in " + path);
  }
  while (std::getline(in, line)) {
    if (!line.empty()) v.add_token(line);
  }
  return v;
}

namespace {

std::vector<std::string> split_ws(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream iss(line);
  std::string tok;
  while (iss >> tok) out.push_back(tok);
  return out;
}

}  // namespace

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("read_lines: cannot open " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

Vocab build_vocab_from_lines(const std::vector<std::string>& lines, int max_size) {
  if (max_size <= Vocab::kReserved)
    throw ConfigError("build_vocab: max_size must exceed the reserved ids");
  std::unordered_map<std::string, std::int64_t> freq;
  bool any_token = false;
  for (const auto& line : lines) {
    for (auto& tok : split_ws(line)) {
      ++freq[tok];
      any_token = true;
    }
  }
  if (!any_token) throw DataError("build_vocab: empty corpus");

  std::vector<std::pair<std::string, std::int64_t>> ranked(freq.begin(), freq.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });

  Vocab v;
  int budget = max_size - Vocab::kReserved;
  for (const auto& [tok, count] : ranked) {
    (void)count;
    if (budget-- <= 0) break;
    v.add_token(tok);
  }
  return v;
}

Vocab build_vocab(const std::string& corpus_path, int max_size) {
  return build_vocab_from_lines(read_lines(corpus_path), max_size);
}

std::vector<int> encode_sentence(const std::string& text, const Vocab& vocab) {
  std::vector<int> ids;
  ids.push_back(Vocab::kBos);
  for (auto& tok : split_ws(text)) ids.push_back(vocab.token_id(tok));
  ids.push_back(Vocab::kEos);
  return ids;
}

std::string decode_sentence(const std::vector<int>& ids, const Vocab& vocab) {
  std::string out;
  for (int id : ids) {
    if (id == Vocab::kBos || id == Vocab::kEos || id == Vocab::kPad) continue;
    if (!out.empty()) out += ' ';
    out += vocab.token(id);
  }
  return out;
}

Dataset encode_dataset(const std::vector<std::string>& lines, const Vocab& vocab,
                       int max_tokens) {
  Dataset ds;
  for (const auto& line : lines) {
    std::vector<int> ids = encode_sentence(line, vocab);
    int words = static_cast<int>(ids.size()) - 2;
    if (words > max_tokens) {
      ids.resize(static_cast<std::size_t>(max_tokens) + 1);
      ids.push_back(Vocab::kEos);
      ++ds.truncated_count;
    }
    ds.sentences.push_back(std::move(ids));
  }
  if (ds.truncated_count > 0)
    std::cerr << "corpus: truncated " << ds.truncated_count
              << " sentences to " << max_tokens << " tokens\n";
  return ds;
}

Dataset load_dataset(const std::string& path, const Vocab& vocab, int max_tokens) {
  return encode_dataset(read_lines(path), vocab, max_tokens);
}

Batch make_batch(const std::vector<std::vector<int>>& sentences) {
  if (sentences.empty()) throw ContractError("make_batch: empty batch");
  int b = static_cast<int>(sentences.size());
  int t_max = 0;
  for (const auto& s : sentences) t_max = std::max(t_max, static_cast<int>(s.size()));
  Batch batch;
  batch.token_ids = IntMat::Constant(b, t_max, Vocab::kPad);
  batch.mask = IntMat::Zero(b, t_max);
  batch.lengths.resize(static_cast<std::size_t>(b));
  for (int i = 0; i < b; ++i) {
    const auto& s = sentences[static_cast<std::size_t>(i)];
    batch.lengths[static_cast<std::size_t>(i)] = static_cast<int>(s.size());
    for (int t = 0; t < static_cast<int>(s.size()); ++t) {
      batch.token_ids(i, t) = s[static_cast<std::size_t>(t)];
      batch.mask(i, t) = 1;
    }
  }
  return batch;
}

std::vector<Batch> make_batches(const Dataset& dataset, int batch_size,
                                std::uint64_t shuffle_seed) {
  if (batch_size < 1) throw ConfigError("make_batches: batch_size must be >= 1");
  if (dataset.empty()) throw DataError("make_batches: empty dataset");

  Rng rng(shuffle_seed);
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(order);
  // Length bucketing: stable sort of a shuffled order keeps same-length
  // sentences randomized while grouping similar lengths together.
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return dataset.sentences[a].size() < dataset.sentences[b].size();
  });

  std::vector<Batch> batches;
  for (std::size_t i = 0; i < order.size(); i += static_cast<std::size_t>(batch_size)) {
    std::vector<std::vector<int>> group;
    for (std::size_t j = i;
         j < std::min(order.size(), i + static_cast<std::size_t>(batch_size)); ++j)
      group.push_back(dataset.sentences[order[j]]);
    batches.push_back(make_batch(group));
  }
  rng.shuffle(batches);
  return batches;
}

LengthHistogram::LengthHistogram(const Dataset& dataset) {
  if (dataset.empty()) throw DataError("length_histogram: empty dataset");
  std::map<int, std::int64_t> counts;
  for (const auto& s : dataset.sentences) ++counts[static_cast<int>(s.size())];
  double total = static_cast<double>(dataset.size());
  for (const auto& [len, count] : counts) {
    lengths_.push_back(len);
    probs_.push_back(static_cast<double>(count) / total);
  }
}

LengthHistogram::LengthHistogram(std::vector<int> lengths, std::vector<double> probs)
    : lengths_(std::move(lengths)), probs_(std::move(probs)) {
  if (lengths_.size() != probs_.size() || lengths_.empty())
    throw ContractError("length_histogram: malformed histogram");
}

double LengthHistogram::mean() const {
  double m = 0;
  for (std::size_t i = 0; i < lengths_.size(); ++i) m += lengths_[i] * probs_[i];
  return m;
}

int LengthHistogram::sample(Rng& rng) const {
  double u = rng.uniform();
  double acc = 0;
  for (std::size_t i = 0; i < lengths_.size(); ++i) {
    acc += probs_[i];
    if (u < acc) return lengths_[i];
  }
  return lengths_.back();
}

}  // namespace davam
