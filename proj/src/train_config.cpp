// SPDX-License-Identifier: Apache-2.0
#include "davam/train_config.hpp"

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace davam {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

struct Field {
  std::function<std::string(const TrainConfig&)> get;
  std::function<void(TrainConfig&, const std::string&)> set;
};

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

int parse_int(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    int out = std::stoi(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw ConfigError("config: bad integer for " + key + ": " + v);
  }
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    double out = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw ConfigError("config: bad number for " + key + ": " + v);
  }
}

const std::map<std::string, Field>& fields() {
  static const std::map<std::string, Field> table = [] {
    std::map<std::string, Field> f;
    auto add_int = [&f](const std::string& key, int TrainConfig::* member) {
      f[key] = {[member](const TrainConfig& c) { return std::to_string(c.*member); },
                [member, key](TrainConfig& c, const std::string& v) {
                  c.*member = parse_int(key, v);
                }};
    };
    auto add_double = [&f](const std::string& key, double TrainConfig::* member) {
      f[key] = {[member](const TrainConfig& c) { return fmt_double(c.*member); },
                [member, key](TrainConfig& c, const std::string& v) {
                  c.*member = parse_double(key, v);
                }};
    };
    f["model_kind"] = {[](const TrainConfig& c) { return c.model_kind; },
                       [](TrainConfig& c, const std::string& v) { c.model_kind = v; }};
    f["seed"] = {[](const TrainConfig& c) {
                   char buf[32];
                   std::snprintf(buf, sizeof(buf), "%" PRIu64, c.seed);
                   return std::string(buf);
                 },
                 [](TrainConfig& c, const std::string& v) {
                   try {
                     c.seed = std::stoull(v);
                   } catch (const std::exception&) {
                     throw ConfigError("config: bad seed: " + v);
                   }
                 }};
    add_int("codebook_size", &TrainConfig::codebook_size);
    add_int("latent_dim", &TrainConfig::latent_dim);
    add_int("hidden_dim", &TrainConfig::hidden_dim);
    add_int("embed_dim", &TrainConfig::embed_dim);
    add_int("attn_dim", &TrainConfig::attn_dim);
    add_int("batch_size", &TrainConfig::batch_size);
    add_int("epochs", &TrainConfig::epochs);
    add_int("warmup_epochs", &TrainConfig::warmup_epochs);
    add_double("beta_start", &TrainConfig::beta_start);
    add_double("beta_max", &TrainConfig::beta_max);
    add_double("lr", &TrainConfig::lr);
    add_double("lr_decay_factor", &TrainConfig::lr_decay_factor);
    add_int("plateau_patience", &TrainConfig::plateau_patience);
    add_int("max_decays", &TrainConfig::max_decays);
    add_int("vocab_cap", &TrainConfig::vocab_cap);
    add_int("max_sentence_tokens", &TrainConfig::max_sentence_tokens);
    add_double("ema_decay", &TrainConfig::ema_decay);
    add_double("ema_epsilon", &TrainConfig::ema_epsilon);
    add_int("kmeans_iters", &TrainConfig::kmeans_iters);
    add_int("dead_code_restarts", &TrainConfig::dead_code_restarts);
    add_double("dead_code_threshold", &TrainConfig::dead_code_threshold);
    add_int("prior_layers", &TrainConfig::prior_layers);
    add_int("prior_kernel", &TrainConfig::prior_kernel);
    add_int("prior_channels", &TrainConfig::prior_channels);
    add_int("stage_two_epochs", &TrainConfig::stage_two_epochs);
    add_int("anneal_epochs", &TrainConfig::anneal_epochs);
    add_double("init_scale", &TrainConfig::init_scale);
    add_double("grad_clip", &TrainConfig::grad_clip);
    return f;
  }();
  return table;
}

}  // namespace

void TrainConfig::validate() const {
  if (model_kind != "davam" && model_kind != "davam_q" && model_kind != "gavam" &&
      model_kind != "vae" && model_kind != "lstm_lm")
    throw ConfigError("config: unknown model_kind " + model_kind);
  if (beta_start > beta_max)
    throw ConfigError("config: beta_start must not exceed beta_max");
  auto positive = [](double v, const char* name) {
    if (v <= 0) throw ConfigError(std::string("config: ") + name + " must be positive");
  };
  positive(codebook_size, "codebook_size");
  positive(latent_dim, "latent_dim");
  positive(hidden_dim, "hidden_dim");
  positive(embed_dim, "embed_dim");
  positive(batch_size, "batch_size");
  positive(epochs, "epochs");
  positive(warmup_epochs, "warmup_epochs");
  positive(beta_start, "beta_start");
  positive(lr, "lr");
  positive(lr_decay_factor, "lr_decay_factor");
  positive(plateau_patience, "plateau_patience");
  positive(vocab_cap, "vocab_cap");
  positive(max_sentence_tokens, "max_sentence_tokens");
  positive(kmeans_iters, "kmeans_iters");
  positive(prior_layers, "prior_layers");
  positive(prior_kernel, "prior_kernel");
  positive(prior_channels, "prior_channels");
  positive(stage_two_epochs, "stage_two_epochs");
  positive(init_scale, "init_scale");
  positive(grad_clip, "grad_clip");
  if (max_decays < 0) throw ConfigError("config: max_decays must be >= 0");
  if (anneal_epochs < 0) throw ConfigError("config: anneal_epochs must be >= 0");
  if (ema_decay < 0 || ema_decay >= 1)
    throw ConfigError("config: ema_decay must be in [0, 1)");
  if (attn_dim < 0) throw ConfigError("config: attn_dim must be >= 0");
}

std::string TrainConfig::serialize() const {
  std::string out;
  for (const auto& [key, field] : fields())
    out += key + " = " + field.get(*this) + "\n";
  return out;
}

TrainConfig TrainConfig::parse_text(const std::string& text) {
  TrainConfig cfg;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    std::size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config: expected key = value, got: " + line);
    std::string key = trim(t.substr(0, eq));
    std::string value = trim(t.substr(eq + 1));
    auto it = fields().find(key);
    if (it == fields().end()) throw ConfigError("config: unknown key " + key);
    it->second.set(cfg, value);
  }
  cfg.validate();
  return cfg;
}

TrainConfig TrainConfig::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("config: cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_text(ss.str());
}

}  // namespace davam
