// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end. Subcommands: train, prior, generate, eval,
// augment. Human-readable output goes to stdout, diagnostics and manifests
// without an --out directory go to stderr. Exit codes: 1 config, 2 data,
// 3 numeric abort, 4 missing training stage.

#include <CLI11.hpp>
#include <json.hpp>

#include "davam/evalgen.hpp"
#include "davam/grammar.hpp"
#include "davam/train.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace davam;

namespace {

std::uint64_t file_digest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  std::string bytes = ss.str();
  return fnv1a64(bytes.data(), bytes.size());
}

struct CorpusDir {
  std::string train, valid, test;
};

CorpusDir corpus_files(const std::string& dir, bool need_train = true) {
  CorpusDir c;
  c.train = (fs::path(dir) / "train.txt").string();
  c.valid = (fs::path(dir) / "valid.txt").string();
  c.test = (fs::path(dir) / "test.txt").string();
  if (need_train && !fs::exists(c.train))
    throw DataError("corpus: missing " + c.train);
  if (!fs::exists(c.valid)) throw DataError("corpus: missing " + c.valid);
  if (!fs::exists(c.test)) c.test.clear();
  return c;
}

void emit_manifest(const json& manifest, const std::string& out_dir) {
  if (out_dir.empty()) {
    std::cerr << manifest.dump() << "\n";
    return;
  }
  std::ofstream out(fs::path(out_dir) / "manifest.json");
  if (!out) throw DataError("cannot write manifest in " + out_dir);
  out << manifest.dump(2) << "\n";
}

std::string sibling_vocab(const std::string& ckpt_path, const std::string& override_path) {
  if (!override_path.empty()) return override_path;
  return (fs::path(ckpt_path).parent_path() / "vocab.txt").string();
}

std::uint64_t seed_override(std::uint64_t seed) {
  const char* env = std::getenv("DAVAM_SEED");
  if (!env || !*env) return seed;
  try {
    return std::stoull(env);
  } catch (const std::exception&) {
    throw ConfigError("DAVAM_SEED is not an integer");
  }
}

json corpus_manifest(const CorpusDir& c) {
  json j;
  j["train"] = {{"path", c.train}, {"digest", to_hex(file_digest(c.train))}};
  j["valid"] = {{"path", c.valid}, {"digest", to_hex(file_digest(c.valid))}};
  if (!c.test.empty())
    j["test"] = {{"path", c.test}, {"digest", to_hex(file_digest(c.test))}};
  return j;
}

int cmd_train(const std::string& config_path, const std::string& corpus_dir,
              const std::string& out_dir) {
  TrainConfig cfg = TrainConfig::load(config_path);
  cfg.seed = seed_override(cfg.seed);
  CorpusDir files = corpus_files(corpus_dir);

  fs::create_directories(out_dir);
  json manifest;
  manifest["command"] = "train";
  manifest["config"] = cfg.serialize();
  manifest["seeds"] = {{"seed", cfg.seed}};
  manifest["corpus"] = corpus_manifest(files);
  manifest["artifacts"] = {
      {"checkpoint", (fs::path(out_dir) / "checkpoint.ckpt").string()},
      {"vocab", (fs::path(out_dir) / "vocab.txt").string()},
      {"trainlog", (fs::path(out_dir) / "trainlog.jsonl").string()}};
  emit_manifest(manifest, out_dir);

  Vocab vocab = build_vocab(files.train, cfg.vocab_cap);
  Dataset train = load_dataset(files.train, vocab, cfg.max_sentence_tokens);
  Dataset valid = load_dataset(files.valid, vocab, cfg.max_sentence_tokens);

  auto result = train_stage_one<float>(train, valid, vocab.size(), cfg);

  vocab.save((fs::path(out_dir) / "vocab.txt").string());
  result.checkpoint.save((fs::path(out_dir) / "checkpoint.ckpt").string());
  result.log.save((fs::path(out_dir) / "trainlog.jsonl").string());
  manifest["checkpoint_hash"] = to_hex(result.checkpoint.content_hash());
  emit_manifest(manifest, out_dir);

  const auto& last = result.log.records.back();
  std::cout << "trained " << cfg.model_kind << " for " << result.log.records.size()
            << " epochs; val rec " << last.val_rec << ", val total "
            << last.val_total << "\n";
  std::cout << "checkpoint: " << (fs::path(out_dir) / "checkpoint.ckpt").string()
            << "\n";
  return 0;
}

int cmd_prior(const std::string& from_ckpt, const std::string& corpus_dir,
              const std::string& out_dir, const std::string& vocab_path) {
  Checkpoint stage1 = Checkpoint::load(from_ckpt);
  TrainConfig cfg = TrainConfig::parse_text(stage1.config_text);
  CorpusDir files = corpus_files(corpus_dir);
  Vocab vocab = Vocab::load(sibling_vocab(from_ckpt, vocab_path));
  Dataset train = load_dataset(files.train, vocab, cfg.max_sentence_tokens);
  Dataset valid = load_dataset(files.valid, vocab, cfg.max_sentence_tokens);

  fs::create_directories(out_dir);
  json manifest;
  manifest["command"] = "prior";
  manifest["from"] = {{"path", from_ckpt},
                      {"checkpoint_hash", to_hex(stage1.content_hash())}};
  manifest["config"] = cfg.serialize();
  manifest["seeds"] = {{"seed", cfg.seed}};
  manifest["corpus"] = corpus_manifest(files);
  manifest["artifacts"] = {
      {"checkpoint", (fs::path(out_dir) / "checkpoint.ckpt").string()},
      {"trainlog", (fs::path(out_dir) / "trainlog.jsonl").string()}};
  emit_manifest(manifest, out_dir);

  auto result = train_stage_two<float>(train, valid, stage1);
  result.checkpoint.save((fs::path(out_dir) / "checkpoint.ckpt").string());
  result.log.save((fs::path(out_dir) / "trainlog.jsonl").string());
  vocab.save((fs::path(out_dir) / "vocab.txt").string());
  manifest["checkpoint_hash"] = to_hex(result.checkpoint.content_hash());
  emit_manifest(manifest, out_dir);

  std::cout << "stage-two prior trained; validation NLL "
            << result.log.records.back().val_kl << " nats/sequence\n";
  std::cout << "checkpoint: " << (fs::path(out_dir) / "checkpoint.ckpt").string()
            << "\n";
  return 0;
}

int cmd_generate(const std::string& ckpt_path, int n, const std::string& length,
                 std::uint64_t seed, double temperature,
                 const std::string& vocab_path, const std::string& out_dir) {
  Checkpoint ckpt = Checkpoint::load(ckpt_path);
  Vocab vocab = Vocab::load(sibling_vocab(ckpt_path, vocab_path));
  GenerateOptions opt;
  opt.n = n;
  opt.seed = seed_override(seed);
  opt.temperature = temperature;
  if (length != "auto") {
    try {
      opt.fixed_length = std::stoi(length);
    } catch (const std::exception&) {
      throw ConfigError("generate: --length must be an integer or 'auto'");
    }
    if (opt.fixed_length < 1)
      throw ConfigError("generate: --length must be positive");
  }

  json manifest;
  manifest["command"] = "generate";
  manifest["checkpoint"] = {{"path", ckpt_path},
                            {"checkpoint_hash", to_hex(ckpt.content_hash())}};
  manifest["seeds"] = {{"seed", opt.seed}};
  manifest["flags"] = {{"n", n}, {"length", length}, {"temperature", temperature}};
  emit_manifest(manifest, out_dir);

  for (const auto& s : generate_from_scratch(ckpt, vocab, opt))
    std::cout << s << "\n";
  return 0;
}

int cmd_eval(const std::string& ckpt_path, const std::string& corpus_dir,
             const std::string& split, const std::string& vocab_path) {
  Checkpoint ckpt = Checkpoint::load(ckpt_path);
  TrainConfig cfg = TrainConfig::parse_text(ckpt.config_text);
  Vocab vocab = Vocab::load(sibling_vocab(ckpt_path, vocab_path));
  if (vocab.size() != static_cast<int>(ckpt.require("embed.table").data.rows()))
    throw ConfigError("eval: vocabulary does not match the checkpoint");
  CorpusDir files = corpus_files(corpus_dir, /*need_train=*/false);
  std::string path;
  if (split == "test") {
    path = files.test.empty() ? files.valid : files.test;
  } else if (split == "valid") {
    path = files.valid;
  } else if (split == "train") {
    path = files.train;
  } else {
    throw ConfigError("eval: --split must be train, valid, or test");
  }
  Dataset ds = load_dataset(path, vocab, cfg.max_sentence_tokens);

  json manifest;
  manifest["command"] = "eval";
  manifest["checkpoint"] = {{"path", ckpt_path},
                            {"checkpoint_hash", to_hex(ckpt.content_hash())}};
  manifest["flags"] = {{"split", split}, {"corpus", corpus_dir}};
  manifest["corpus_digest"] = to_hex(file_digest(path));
  emit_manifest(manifest, "");

  EvalReport report = evaluate(ckpt, ds, cfg.batch_size);
  std::cout << ckpt.model_kind << " on " << path << ":\n"
            << report.table() << report.json_line() << "\n";
  return 0;
}

int cmd_augment(const std::string& ckpt_path, const std::string& corpus_dir,
                double ratio, const std::string& config_path,
                const std::string& vocab_path) {
  Checkpoint ckpt = Checkpoint::load(ckpt_path);
  Vocab vocab = Vocab::load(sibling_vocab(ckpt_path, vocab_path));
  CorpusDir files = corpus_files(corpus_dir);
  if (files.test.empty()) throw DataError("augment: corpus needs a test.txt");

  TrainConfig lm_cfg;
  if (!config_path.empty()) lm_cfg = TrainConfig::load(config_path);
  lm_cfg.model_kind = "lstm_lm";
  lm_cfg.seed = seed_override(lm_cfg.seed);

  json manifest;
  manifest["command"] = "augment";
  manifest["checkpoint"] = {{"path", ckpt_path},
                            {"checkpoint_hash", to_hex(ckpt.content_hash())}};
  manifest["flags"] = {{"ratio", ratio}};
  manifest["config"] = lm_cfg.serialize();
  manifest["seeds"] = {{"seed", lm_cfg.seed}};
  manifest["corpus"] = corpus_manifest(files);
  emit_manifest(manifest, "");

  auto result = augment(read_lines(files.train), read_lines(files.valid),
                        read_lines(files.test), ratio, ckpt, vocab, lm_cfg);
  std::cout << result.table();
  char line[200];
  std::snprintf(line, sizeof(line),
                "{\"base_size\":%zu,\"ratio\":%.17g,\"ppl_base\":%.17g,"
                "\"ppl_aug\":%.17g}\n",
                result.base_size, result.ratio, result.ppl_base, result.ppl_aug);
  std::cout << line;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"davam: discrete auto-regressive variational attention text models"};
  app.require_subcommand(1);

  std::string config_path, corpus_dir, out_dir, ckpt_path, vocab_path;
  std::string length = "auto", split = "test";
  int n = 1;
  std::uint64_t seed = 1;
  double temperature = 1.0, ratio = 1.0;

  auto* train = app.add_subcommand("train", "stage-one training");
  train->add_option("--config", config_path)->required();
  train->add_option("--corpus", corpus_dir)->required();
  train->add_option("--out", out_dir)->required();

  auto* prior = app.add_subcommand("prior", "stage-two prior training");
  prior->add_option("--from", ckpt_path)->required();
  prior->add_option("--corpus", corpus_dir)->required();
  prior->add_option("--out", out_dir)->required();
  prior->add_option("--vocab", vocab_path);

  auto* generate = app.add_subcommand("generate", "sample sentences from scratch");
  generate->add_option("--ckpt", ckpt_path)->required();
  generate->add_option("--n", n);
  generate->add_option("--length", length, "latent length: integer or 'auto'");
  generate->add_option("--seed", seed);
  generate->add_option("--temperature", temperature);
  generate->add_option("--vocab", vocab_path);
  generate->add_option("--out", out_dir);

  auto* eval = app.add_subcommand("eval", "held-out Rec/PPL/KL");
  eval->add_option("--ckpt", ckpt_path)->required();
  eval->add_option("--corpus", corpus_dir)->required();
  eval->add_option("--split", split);
  eval->add_option("--vocab", vocab_path);

  auto* augment_cmd = app.add_subcommand("augment", "LM data-augmentation study");
  augment_cmd->add_option("--ckpt", ckpt_path)->required();
  augment_cmd->add_option("--base-corpus", corpus_dir)->required();
  augment_cmd->add_option("--ratio", ratio);
  augment_cmd->add_option("--config", config_path);
  augment_cmd->add_option("--vocab", vocab_path);

  try {
    app.parse(argc, argv);
    if (train->parsed()) return cmd_train(config_path, corpus_dir, out_dir);
    if (prior->parsed()) return cmd_prior(ckpt_path, corpus_dir, out_dir, vocab_path);
    if (generate->parsed())
      return cmd_generate(ckpt_path, n, length, seed, temperature, vocab_path,
                          out_dir);
    if (eval->parsed()) return cmd_eval(ckpt_path, corpus_dir, split, vocab_path);
    if (augment_cmd->parsed())
      return cmd_augment(ckpt_path, corpus_dir, ratio, config_path, vocab_path);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;  // flag errors are config errors
  } catch (const StageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
