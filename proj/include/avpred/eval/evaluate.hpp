#pragma once

#include <cstdio>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "avpred/eval/metrics.hpp"
#include "avpred/train/trainer.hpp"

namespace avpred::eval {

using json = nlohmann::json;

/// A model restored from a checkpoint: MME only after stage 1, MME and CAR
/// after stage 2.
struct LoadedModel {
  std::unique_ptr<train::System> system;
  model::MotionMode mode = model::MotionMode::Full;
  std::optional<model::RefineVariant> variant;
  int stage = 1;
  std::string source;
};

inline LoadedModel load_model(const train::Checkpoint& ck, std::string source = "") {
  LoadedModel m;
  m.stage = ck.stage;
  m.source = std::move(source);
  const auto cfg = model::ModelConfig::from_json(ck.model_config);
  m.system = std::make_unique<train::System>(cfg, ck.stage == 2, 0);
  train::load_into(ck, m.system->store);
  const auto& tc = ck.train_config;
  const std::string mode =
      tc.contains("stage1_motion_mode") ? tc.at("stage1_motion_mode").get<std::string>() : tc.value("motion_mode", "mme");
  m.mode = model::motion_mode_from_string(mode);
  if (ck.stage == 2) m.variant = model::refine_variant_from_string(tc.value("refine_variant", "car"));
  return m;
}

struct EvalOptions {
  std::size_t horizon = 0;  // 0 evaluates every frame after K
  std::size_t chunk = 8;    // samples per inference batch
};

/// Per-frame metrics over predicted frames, averaged over samples.
/// `ssim`/`psnr` score the refined frames when CAR is present and the raw
/// warped frames otherwise; `warp_*` always score the raw warps.
struct EvalReport {
  std::string split, checkpoint, motion_mode, refine_variant;
  int stage = 1;
  std::size_t samples = 0, seen = 0, horizon = 0;
  std::vector<std::size_t> frames;  // 1-based frame numbers K+1..K+horizon
  std::vector<double> ssim, psnr, aepe, warp_ssim, warp_psnr;

  static double mean(const std::vector<double>& v) {
    return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / double(v.size());
  }
  /// Mean over the last `n` entries of a per-frame list.
  static double tail_mean(const std::vector<double>& v, std::size_t n) {
    n = std::min(n, v.size());
    return n == 0 ? 0.0 : std::accumulate(v.end() - long(n), v.end(), 0.0) / double(n);
  }

  json to_json() const {
    return {{"split", split},
            {"checkpoint", checkpoint},
            {"stage", stage},
            {"motion_mode", motion_mode},
            {"refine_variant", refine_variant},
            {"samples", samples},
            {"seen", seen},
            {"horizon", horizon},
            {"frames", frames},
            {"ssim", ssim},
            {"psnr", psnr},
            {"aepe", aepe},
            {"warp_ssim", warp_ssim},
            {"warp_psnr", warp_psnr},
            {"mean",
             {{"ssim", mean(ssim)},
              {"psnr", mean(psnr)},
              {"aepe", mean(aepe)},
              {"warp_ssim", mean(warp_ssim)},
              {"warp_psnr", mean(warp_psnr)}}}};
  }

  std::string table() const {
    std::string out;
    char line[160];
    std::snprintf(line, sizeof line, "%6s %8s %8s %8s %10s %10s\n", "frame", "SSIM", "PSNR", "AEPE", "warp SSIM",
                  "warp PSNR");
    out += line;
    auto row = [&](const std::string& label, double s, double p, double a, double ws, double wp) {
      std::snprintf(line, sizeof line, "%6s %8.4f %8.2f %8.4f %10.4f %10.2f\n", label.c_str(), s, p, a, ws, wp);
      out += line;
    };
    for (std::size_t j = 0; j < frames.size(); ++j)
      row(std::to_string(frames[j]), ssim[j], psnr[j], aepe[j], warp_ssim[j], warp_psnr[j]);
    row("mean", mean(ssim), mean(psnr), mean(aepe), mean(warp_ssim), mean(warp_psnr));
    return out;
  }
};

/// Runs the rollout on every sample in inference mode and scores each
/// predicted frame against ground truth.
inline EvalReport evaluate(const train::System& sys, model::MotionMode mode,
                           std::optional<model::RefineVariant> variant, const data::Dataset& ds,
                           const EvalOptions& opt = {}) {
  if (ds.samples.empty()) throw ConfigError("evaluation dataset is empty");
  if (variant && !sys.car) throw ConfigError("refinement requested but the model has no CAR");
  const auto& s0 = ds.samples.front();
  const std::size_t K = s0.spec.seen, T = s0.length();
  const std::size_t horizon = opt.horizon ? opt.horizon : T - K;
  if (K + horizon > T)
    throw ConfigError("horizon " + std::to_string(horizon) + " exceeds the " + std::to_string(T - K) +
                      " frames available after K=" + std::to_string(K));

  EvalReport r;
  r.split = ds.split;
  r.motion_mode = model::to_string(mode);
  r.refine_variant = variant ? model::to_string(*variant) : "none";
  r.samples = ds.samples.size();
  r.seen = K;
  r.horizon = horizon;
  for (std::size_t j = 0; j < horizon; ++j) r.frames.push_back(K + j + 1);
  r.ssim.assign(horizon, 0.0);
  r.psnr.assign(horizon, 0.0);
  r.aepe.assign(horizon, 0.0);
  r.warp_ssim.assign(horizon, 0.0);
  r.warp_psnr.assign(horizon, 0.0);

  const std::size_t chunk = std::max<std::size_t>(1, opt.chunk);
  for (std::size_t start = 0; start < ds.samples.size(); start += chunk) {
    std::vector<const data::Sequence*> members;
    for (std::size_t i = start; i < std::min(ds.samples.size(), start + chunk); ++i) {
      if (ds.samples[i].length() != T || ds.samples[i].spec.seen != K)
        throw ConfigError("evaluation samples must share T and K");
      members.push_back(&ds.samples[i]);
    }
    const auto batch = data::make_batch(members, K);
    ad::Tape quiet(false);
    const auto motion = model::mme_rollout(quiet, *sys.mme, batch, horizon, mode, ad::NormMode::Inference);
    std::vector<ad::Tensor> refined;
    if (variant)
      refined = model::car_rollout(quiet, *sys.car, batch, motion.flows, *variant, ad::NormMode::Inference);
    for (std::size_t b = 0; b < members.size(); ++b) {
      for (std::size_t j = 0; j < horizon; ++j) {
        const auto gt_frame = members[b]->frames.slice0(K + j);
        const auto gt_flow = members[b]->flows.slice0(K + j);
        const auto warped = motion.warped[j].slice0(b);
        const double ws = eval::ssim(warped, gt_frame), wp = eval::psnr(warped, gt_frame);
        r.warp_ssim[j] += ws;
        r.warp_psnr[j] += wp;
        r.aepe[j] += eval::aepe(motion.flows[j].slice0(b), gt_flow);
        if (variant) {
          const auto v = refined[j].slice0(b);
          r.ssim[j] += eval::ssim(v, gt_frame);
          r.psnr[j] += eval::psnr(v, gt_frame);
        } else {
          r.ssim[j] += ws;
          r.psnr[j] += wp;
        }
      }
    }
  }
  const double n = double(ds.samples.size());
  for (auto* list : {&r.ssim, &r.psnr, &r.aepe, &r.warp_ssim, &r.warp_psnr})
    for (auto& v : *list) v /= n;
  return r;
}

inline EvalReport evaluate(const LoadedModel& m, const data::Dataset& ds, const EvalOptions& opt = {}) {
  auto r = evaluate(*m.system, m.mode, m.variant, ds, opt);
  r.checkpoint = m.source;
  r.stage = m.stage;
  return r;
}

}  // namespace avpred::eval
