// SPDX-License-Identifier: Apache-2.0
#include "davam/grammar.hpp"

#include "davam/common.hpp"

#include <set>
#include <sstream>

namespace davam {

namespace {

struct Topic {
  std::vector<std::string> nouns;   // singular stems, pluralized with +s
  std::vector<std::string> verbs;   // plural stems, singular adds +s
  std::vector<std::string> adjs;
};

const std::vector<Topic>& topics() {
  static const std::vector<Topic> t = {
      {{"cat", "dog", "wolf", "bear", "lion", "tiger", "rabbit", "crow", "swan",
        "hound", "otter", "falcon"},
       {"chase", "watch", "follow", "greet", "fear", "avoid"},
       {"furry", "wild", "tame", "hungry", "sleepy", "swift", "quiet", "brave"}},
      {{"cook", "baker", "farmer", "waiter", "guest", "vendor", "grocer", "brewer",
        "taster", "gardener", "miller", "picker"},
       {"serve", "taste", "slice", "share", "praise", "pay"},
       {"fresh", "sweet", "salty", "ripe", "warm", "spicy", "bitter", "crisp"}},
      {{"smith", "worker", "builder", "miner", "carver", "welder", "joiner",
        "roofer", "turner", "fitter", "mason", "glazier"},
       {"grind", "sharpen", "repair", "carry", "hold", "clean"},
       {"heavy", "sharp", "rusty", "sturdy", "bright", "narrow", "broken", "solid"}}};
  return t;
}

// Proper names are the corpus's unpredictable content: a language model
// cannot guess which name fills a slot, so reconstructing them requires
// information carried by the latent sequence.
const std::vector<std::string>& names() {
  static const std::vector<std::string> n = {
      "anna",  "bruno", "carla", "dario", "elena", "fabio", "gina",  "hugo",
      "irene", "jonas", "karin", "luca",  "marta", "nino",  "olga",  "paolo",
      "rosa",  "sofia", "tomas", "ulla",  "vera",  "walter", "ximena", "yann",
      "zelda", "ines",  "bodo",  "clara", "dieter", "edda"};
  return n;
}

const std::vector<std::string>& dets_sg() {
  static const std::vector<std::string> d = {"the", "a", "this", "every"};
  return d;
}
const std::vector<std::string>& dets_pl() {
  static const std::vector<std::string> d = {"the", "some", "these", "many"};
  return d;
}
const std::vector<std::string>& places() {
  static const std::vector<std::string> p = {"park",   "barn",  "field", "market",
                                             "cellar", "forge", "yard",  "mill",
                                             "dock",   "shed",  "tower", "bridge"};
  return p;
}
const std::vector<std::string>& adverbs() {
  static const std::vector<std::string> a = {"slowly",  "gently", "quickly",
                                             "calmly",  "eagerly", "proudly",
                                             "loudly",  "softly"};
  return a;
}
const std::vector<std::string>& preps() {
  static const std::vector<std::string> p = {"in", "near", "behind", "beside"};
  return p;
}

const std::string& pick(const std::vector<std::string>& v, Rng& rng) {
  return v[static_cast<std::size_t>(rng.below_int(static_cast<int>(v.size())))];
}

// A noun phrase is either a bare proper name (singular) or a determined,
// optionally modified common noun. Returns whether the phrase is plural.
bool noun_phrase(std::ostringstream& out, const Topic& topic, Rng& rng) {
  if (rng.uniform() < 0.45) {
    out << pick(names(), rng);
    return false;
  }
  bool plural = rng.uniform() < 0.5;
  out << pick(plural ? dets_pl() : dets_sg(), rng);
  int n_adj = rng.uniform() < 0.55 ? (rng.uniform() < 0.3 ? 2 : 1) : 0;
  std::set<std::string> used;
  for (int i = 0; i < n_adj; ++i) {
    const std::string& adj = pick(topic.adjs, rng);
    if (!used.insert(adj).second) continue;
    out << ' ' << adj;
  }
  out << ' ' << pick(topic.nouns, rng);
  if (plural) out << 's';
  return plural;
}

}  // namespace

std::vector<std::string> make_grammar_corpus(int n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::string> lines;
  lines.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const Topic& topic =
        topics()[static_cast<std::size_t>(rng.below_int(static_cast<int>(topics().size())))];
    std::ostringstream out;
    // Number agreement between the subject and the verb form.
    bool plural = noun_phrase(out, topic, rng);
    out << ' ' << pick(topic.verbs, rng);
    if (!plural) out << 's';
    out << ' ';
    noun_phrase(out, topic, rng);
    if (rng.uniform() < 0.5)
      out << ' ' << pick(preps(), rng) << " the " << pick(places(), rng);
    if (rng.uniform() < 0.3) out << ' ' << pick(adverbs(), rng);
    lines.push_back(out.str());
  }
  return lines;
}

int grammar_vocab_size() {
  std::set<std::string> words;
  for (const auto& w : names()) words.insert(w);
  for (const auto& topic : topics()) {
    for (const auto& w : topic.nouns) {
      words.insert(w);
      words.insert(w + "s");
    }
    for (const auto& w : topic.verbs) {
      words.insert(w);
      words.insert(w + "s");
    }
    for (const auto& w : topic.adjs) words.insert(w);
  }
  for (const auto& w : dets_sg()) words.insert(w);
  for (const auto& w : dets_pl()) words.insert(w);
  for (const auto& w : places()) words.insert(w);
  for (const auto& w : adverbs()) words.insert(w);
  for (const auto& w : preps()) words.insert(w);
  return static_cast<int>(words.size());
}

}  // namespace davam
