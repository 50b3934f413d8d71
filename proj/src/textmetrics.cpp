// SPDX-License-Identifier: Apache-2.0
#include "davam/evalgen.hpp"

#include <cmath>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

namespace davam {

DiversityReport diversity(const std::vector<std::string>& sentences) {
  if (sentences.empty()) throw ContractError("diversity: empty sentence list");
  std::unordered_map<std::string, std::int64_t> unigrams;
  std::unordered_set<std::string> bigrams;
  std::int64_t total_unigrams = 0, total_bigrams = 0;
  for (const auto& s : sentences) {
    std::istringstream iss(s);
    std::string tok, prev;
    bool first = true;
    while (iss >> tok) {
      ++unigrams[tok];
      ++total_unigrams;
      if (!first) {
        bigrams.insert(prev + " " + tok);
        ++total_bigrams;
      }
      prev = tok;
      first = false;
    }
  }
  if (total_unigrams == 0) throw ContractError("diversity: no tokens");

  DiversityReport r;
  for (const auto& [tok, count] : unigrams) {
    (void)tok;
    double p = static_cast<double>(count) / static_cast<double>(total_unigrams);
    r.ent -= p * std::log(p);
  }
  r.dist1 = static_cast<double>(unigrams.size()) /
            static_cast<double>(total_unigrams);
  r.dist2 = total_bigrams == 0
                ? 1.0
                : static_cast<double>(bigrams.size()) /
                      static_cast<double>(total_bigrams);
  return r;
}

}  // namespace davam
