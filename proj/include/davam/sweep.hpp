// SPDX-License-Identifier: Apache-2.0
//
// Sensitivity-sweep harness: retrains the quantized model along one config
// axis (codebook size, maximum commitment weight, latent dimension) and
// reports validation reconstruction and KL per point.

#pragma once

#include "davam/evalgen.hpp"
#include "davam/train.hpp"

#include <string>
#include <vector>

namespace davam {

struct SweepPoint {
  double axis_value = 0;
  double rec = 0;  // validation mean per-sentence NLL
  double kl = 0;   // sequence-averaged prior divergence after stage two
};

enum class SweepAxis { CodebookSize, BetaMax, LatentDim };

inline SweepAxis parse_sweep_axis(const std::string& s) {
  if (s == "codebook_size") return SweepAxis::CodebookSize;
  if (s == "beta_max") return SweepAxis::BetaMax;
  if (s == "latent_dim") return SweepAxis::LatentDim;
  throw ConfigError("sweep: unknown axis " + s);
}

// One full stage-one (+ stage-two, so the KL column is meaningful) run per
// axis value. Everything else comes from the base config.
inline std::vector<SweepPoint> run_sweep(const Dataset& train, const Dataset& valid,
                                         int vocab_size, TrainConfig base,
                                         SweepAxis axis,
                                         const std::vector<double>& values) {
  if (values.empty()) throw ConfigError("sweep: no axis values");
  std::vector<SweepPoint> points;
  for (double v : values) {
    TrainConfig cfg = base;
    switch (axis) {
      case SweepAxis::CodebookSize: cfg.codebook_size = static_cast<int>(v); break;
      case SweepAxis::BetaMax: cfg.beta_max = v; break;
      case SweepAxis::LatentDim: cfg.latent_dim = static_cast<int>(v); break;
    }
    cfg.validate();
    auto stage1 = train_stage_one<float>(train, valid, vocab_size, cfg);
    auto stage2 = train_stage_two<float>(train, valid, stage1.checkpoint);
    auto report = evaluate(stage2.checkpoint, valid, cfg.batch_size);
    points.push_back({v, report.rec, report.kl});
  }
  return points;
}

inline std::string sweep_table(SweepAxis axis, const std::vector<SweepPoint>& points) {
  const char* name = axis == SweepAxis::CodebookSize ? "codebook_size"
                     : axis == SweepAxis::BetaMax    ? "beta_max"
                                                     : "latent_dim";
  char buf[128];
  std::string out;
  std::snprintf(buf, sizeof(buf), "  %-14s %-10s %-10s\n", name, "Rec", "KL");
  out += buf;
  for (const auto& p : points) {
    std::snprintf(buf, sizeof(buf), "  %-14g %-10.3f %-10.4f\n", p.axis_value, p.rec,
                  p.kl);
    out += buf;
  }
  return out;
}

}  // namespace davam
