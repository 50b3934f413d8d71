// SPDX-License-Identifier: Apache-2.0
//
// Seeded synthetic-grammar corpus for demos and behavioral tests: subject /
// verb / object sentences with topic consistency and number agreement, so a
// model that tracks per-position structure has something to learn.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace davam {

std::vector<std::string> make_grammar_corpus(int n, std::uint64_t seed);

// Distinct word forms the grammar can emit (vocabulary budget).
int grammar_vocab_size();

}  // namespace davam
