// SPDX-License-Identifier: Apache-2.0
//
// Writes a synthetic-grammar corpus as train/valid/test splits, one
// sentence per line. Handy for demos and for exercising the pipeline
// without external data.

#include <CLI11.hpp>

#include "davam/grammar.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;

int main(int argc, char** argv) {
  CLI::App app{"make-grammar-corpus: seeded synthetic corpus generator"};
  std::string out_dir;
  int train_n = 2000, valid_n = 200, test_n = 200;
  std::uint64_t seed = 1;
  app.add_option("--out", out_dir)->required();
  app.add_option("--train", train_n);
  app.add_option("--valid", valid_n);
  app.add_option("--test", test_n);
  app.add_option("--seed", seed);
  CLI11_PARSE(app, argc, argv);

  fs::create_directories(out_dir);
  auto write = [&](const char* name, int n, std::uint64_t salt) {
    std::ofstream out(fs::path(out_dir) / name, std::ios::binary);
    for (const auto& line : davam::make_grammar_corpus(n, seed + salt))
      out << line << "\n";
  };
  write("train.txt", train_n, 0);
  write("valid.txt", valid_n, 1);
  write("test.txt", test_n, 2);
  std::cout << "wrote " << train_n << "/" << valid_n << "/" << test_n
            << " sentences to " << out_dir << " (vocab budget "
            << davam::grammar_vocab_size() << " words)\n";
  return 0;
}
