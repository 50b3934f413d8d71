// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "davam/common.hpp"

#include <string>

namespace davam {

// Fully determines a run given a corpus. The on-disk form is flat
// `key = value` text with keys exactly matching the field names.
struct TrainConfig {
  std::string model_kind = "davam";
  int codebook_size = 512;
  int latent_dim = 32;
  int hidden_dim = 256;
  int embed_dim = 128;
  int attn_dim = 0;  // 0 resolves to hidden_dim
  int batch_size = 32;
  int epochs = 30;
  int warmup_epochs = 10;
  double beta_start = 0.1;
  double beta_max = 5.0;
  double lr = 1.0;
  double lr_decay_factor = 0.5;
  int plateau_patience = 2;
  int max_decays = 5;
  std::uint64_t seed = 1;
  int vocab_cap = 20000;
  int max_sentence_tokens = 100;
  double ema_decay = 0.99;
  double ema_epsilon = 1e-5;
  int kmeans_iters = 10;
  int dead_code_restarts = 1;  // 0 disables
  double dead_code_threshold = 1e-3;
  int prior_layers = 16;
  int prior_kernel = 3;
  int prior_channels = 64;
  int stage_two_epochs = 30;
  int anneal_epochs = 10;  // vae KL weight ramp 0 -> 1
  double init_scale = 0.1;
  double grad_clip = 5.0;

  void validate() const;
  std::string serialize() const;
  static TrainConfig parse_text(const std::string& text);
  static TrainConfig load(const std::string& path);
};

}  // namespace davam
