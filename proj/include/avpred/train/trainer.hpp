#pragma once

#include <algorithm>
#include <functional>
#include <memory>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "avpred/data/batch.hpp"
#include "avpred/data/dataset.hpp"
#include "avpred/model/car.hpp"
#include "avpred/train/adam.hpp"
#include "avpred/train/checkpoint.hpp"
#include "avpred/train/config.hpp"
#include "avpred/train/losses.hpp"

namespace avpred::train {

using model::MotionMode;
using model::RefineVariant;

/// Parameters and modules of the full model. CAR exists only from stage 2.
struct System {
  model::ModelConfig cfg;
  model::ParamStore store;
  std::unique_ptr<model::MotionEstimator> mme;
  std::unique_ptr<model::ContextRefiner> car;

  System(const model::ModelConfig& c, bool with_car, std::uint64_t seed) : cfg(c) {
    Rng rng_mme(seed);
    mme = std::make_unique<model::MotionEstimator>(cfg, store, rng_mme);
    if (with_car) {
      Rng rng_car(seed ^ 0xca7ca7ca7ULL);
      car = std::make_unique<model::ContextRefiner>(cfg, store, rng_car);
    }
  }
};

/// Non-recorded MME flows for each sample, used as fixed CAR inputs.
inline std::vector<std::vector<ad::Tensor>> precompute_flows(const model::MotionEstimator& mme,
                                                             const std::vector<const data::Sequence*>& samples,
                                                             std::size_t horizon, MotionMode mode) {
  std::vector<std::vector<ad::Tensor>> out;
  out.reserve(samples.size());
  for (const auto* s : samples) {
    ad::Tape quiet(false);
    out.push_back(model::mme_rollout(quiet, mme, data::make_batch(*s), horizon, mode, ad::NormMode::Inference).flows);
  }
  return out;
}

inline std::vector<ad::Tensor> ground_truth(const data::Batch& b, const ad::Tensor& series, std::size_t horizon) {
  std::vector<ad::Tensor> out;
  for (std::size_t j = 0; j < horizon; ++j) out.push_back(data::Batch::at(series, b.seen + j));
  return out;
}

/// Stacks per-sample flow lists [1,2,H,W] into per-step [B,2,H,W].
inline std::vector<ad::Tensor> gather_flows(const std::vector<std::vector<ad::Tensor>>& flows,
                                            const std::vector<std::size_t>& idx) {
  std::vector<ad::Tensor> out;
  const std::size_t h = flows[idx[0]].size();
  for (std::size_t j = 0; j < h; ++j) {
    std::vector<ad::Tensor> parts;
    for (std::size_t i : idx) parts.push_back(flows[i][j]);
    ad::Tape quiet(false);
    out.push_back(ad::concat(quiet, parts, 0));
  }
  return out;
}

inline json without_key(json j, const std::string& key) {
  j.erase(key);
  return j;
}

using EpochCallback = std::function<void(const EpochLog&)>;

/// Two-stage trainer. Stage 1 fits MME on L_flow + lambda * L_smooth;
/// stage 2 freezes MME and fits CAR on L_v.
class Trainer {
 public:
  /// Fresh stage-1 run.
  Trainer(const TrainConfig& cfg, std::size_t height, std::size_t width)
      : cfg_(cfg), stage_(1), sys_(cfg.model_config(height, width), false, cfg.seed), rng_(cfg.seed) {
    cfg_.validate();
    make_optimizer();
  }

  /// Fresh stage-2 run on top of a stage-1 checkpoint.
  Trainer(const TrainConfig& cfg, const Checkpoint& stage1)
      : cfg_(cfg),
        stage_(2),
        sys_(model::ModelConfig::from_json(stage1.model_config), true, cfg.seed),
        rng_(cfg.seed) {
    cfg_.validate();
    if (stage1.stage != 1)
      throw ConfigError("stage 2 needs a stage-1 checkpoint, got stage " + std::to_string(stage1.stage));
    sys_.cfg.car_audio_next = cfg.car_audio_next;
    load_into(stage1, sys_.store, "car.");
    mme_mode_ = TrainConfig::from_json(stage1.train_config).motion_mode;
    make_optimizer();
  }

  /// Resumes a run from its own checkpoint.
  explicit Trainer(const Checkpoint& ck)
      : cfg_(TrainConfig::from_json(without_key(ck.train_config, "stage1_motion_mode"))),
        stage_(ck.stage),
        sys_(model::ModelConfig::from_json(ck.model_config), ck.stage == 2, cfg_.seed),
        rng_(cfg_.seed) {
    load_into(ck, sys_.store);
    if (stage_ == 2) {
      mme_mode_ = ck.train_config.contains("stage1_motion_mode") ? ck.train_config.at("stage1_motion_mode").get<std::string>()
                                                                 : cfg_.motion_mode;
    }
    make_optimizer();
    for (std::size_t k = 0; k < adam_->params().size(); ++k) {
      const auto& name = adam_->params()[k].first;
      const auto* m = ck.find("adam_m." + name);
      const auto* v = ck.find("adam_v." + name);
      if (!m || !v) throw FormatError("checkpoint lacks optimizer state for '" + name + "'");
      std::copy(m->data().begin(), m->data().end(), adam_->first_moments()[k].data_mut().begin());
      std::copy(v->data().begin(), v->data().end(), adam_->second_moments()[k].data_mut().begin());
    }
    adam_->set_steps(ck.adam_steps);
    restore_rng_state(rng_, ck.rng_state);
    epoch_ = ck.epoch;
    history_ = ck.history;
  }

  int stage() const { return stage_; }
  std::size_t epoch() const { return epoch_; }
  const History& history() const { return history_; }
  const TrainConfig& config() const { return cfg_; }
  System& system() { return sys_; }
  const System& system() const { return sys_; }
  MotionMode mme_mode() const { return model::motion_mode_from_string(mme_mode_.empty() ? cfg_.motion_mode : mme_mode_); }

  /// Runs epochs until `total_epochs` have completed (counting resumed
  /// ones). Saves a checkpoint after each epoch when `ckpt_dir` is set.
  void train(const data::Dataset& ds, std::size_t total_epochs, const std::optional<fs::path>& ckpt_dir = {},
             const EpochCallback& on_epoch = {}) {
    if (ds.samples.size() <= cfg_.val_count) throw ConfigError("dataset too small for the validation hold-out");
    std::vector<const data::Sequence*> train_set, val_set;
    for (std::size_t i = 0; i < ds.samples.size(); ++i)
      (i + cfg_.val_count < ds.samples.size() ? train_set : val_set).push_back(&ds.samples[i]);
    const auto& s0 = *train_set.front();
    if (s0.frames.dim(2) != sys_.cfg.height || s0.frames.dim(3) != sys_.cfg.width)
      throw ConfigError("dataset frames do not match the model resolution");
    const std::size_t K = s0.spec.seen, T = s0.length();
    if (T <= K) throw ConfigError("dataset sequences have no frames to predict");
    const std::size_t horizon = std::min(cfg_.train_horizon, T - K);

    std::vector<std::vector<ad::Tensor>> train_flows, val_flows;
    std::vector<std::vector<double>> frozen;
    if (stage_ == 2) {
      train_flows = precompute_flows(*sys_.mme, train_set, horizon, mme_mode());
      val_flows = precompute_flows(*sys_.mme, val_set, horizon, mme_mode());
      for (const auto& [n, p] : sys_.store.params_with_prefix("mme.")) frozen.push_back(p.vec());
    }

    while (epoch_ < total_epochs) {
      std::vector<std::size_t> order(train_set.size());
      std::iota(order.begin(), order.end(), 0);
      std::shuffle(order.begin(), order.end(), rng_);
      EpochLog log{epoch_, 0.0, 0.0, 0.0, std::nullopt};
      std::size_t steps = 0;
      const std::size_t B = cfg_.effective_batch();
      for (std::size_t start = 0; start < order.size(); start += B) {
        std::vector<std::size_t> idx(order.begin() + start, order.begin() + std::min(order.size(), start + B));
        // A lone trailing sample would leave batch norm without batch statistics.
        if (idx.size() == 1 && B > 1) continue;
        std::vector<const data::Sequence*> members;
        for (std::size_t i : idx) members.push_back(train_set[i]);
        const auto batch = data::make_batch(members, K);
        StepLog sl = stage_ == 1 ? step_stage1(batch, horizon) : step_stage2(batch, gather_flows(train_flows, idx));
        sl.epoch = epoch_;
        sl.step = adam_->steps();
        history_.steps.push_back(sl);
        log.train_loss += sl.loss;
        log.train_primary += sl.primary;
        log.train_smooth += sl.smooth;
        ++steps;
      }
      log.train_loss /= double(steps);
      log.train_primary /= double(steps);
      log.train_smooth /= double(steps);
      if (!val_set.empty()) log.val_loss = validate(val_set, val_flows, horizon);
      history_.epochs.push_back(log);
      ++epoch_;
      if (ckpt_dir) save_checkpoint(checkpoint(), *ckpt_dir);
      if (on_epoch) on_epoch(log);
    }

    if (stage_ == 2) {
      const auto now = sys_.store.params_with_prefix("mme.");
      for (std::size_t i = 0; i < now.size(); ++i)
        if (now[i].second.vec() != frozen[i])
          throw std::logic_error("frozen MME parameter '" + now[i].first + "' changed during stage 2");
    }
  }

  Checkpoint checkpoint() const {
    Checkpoint ck;
    ck.stage = stage_;
    ck.train_config = cfg_.to_json();
    if (stage_ == 2) ck.train_config["stage1_motion_mode"] = mme_mode_;
    ck.model_config = sys_.cfg.to_json();
    ck.epoch = epoch_;
    ck.adam_steps = adam_->steps();
    ck.rng_state = rng_state(rng_);
    ck.history = history_;
    for (const auto* group : {&sys_.store.params(), &sys_.store.buffers()})
      for (const auto& [n, t] : *group) ck.arrays.emplace_back(n, t.clone());
    for (std::size_t k = 0; k < adam_->params().size(); ++k) {
      ck.arrays.emplace_back("adam_m." + adam_->params()[k].first, adam_->first_moments()[k].clone());
      ck.arrays.emplace_back("adam_v." + adam_->params()[k].first, adam_->second_moments()[k].clone());
    }
    std::sort(ck.arrays.begin(), ck.arrays.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    return ck;
  }

 private:
  void make_optimizer() {
    AdamOptions opt{stage_ == 1 ? cfg_.lr_mme : cfg_.lr_car, cfg_.beta1, cfg_.beta2, cfg_.adam_eps};
    adam_ = std::make_unique<Adam>(sys_.store.params_with_prefix(stage_ == 1 ? "mme." : "car."), opt);
  }

  StepLog step_stage1(const data::Batch& batch, std::size_t horizon) {
    ad::Tape tape;
    const auto r = model::mme_rollout(tape, *sys_.mme, batch, horizon, cfg_.mode(), ad::NormMode::Training);
    const auto lf = loss_flow(tape, r.flows, ground_truth(batch, batch.flows, horizon));
    const auto ls = loss_smooth(tape, r.flows, ground_truth(batch, batch.frames, horizon));
    const auto total = ad::add(tape, lf, ad::scale(tape, ls, cfg_.lambda_smooth));
    StepLog sl;
    sl.loss = total.item();
    sl.primary = lf.item();
    sl.smooth = ls.item();
    if (sl.loss != sl.primary + cfg_.lambda_smooth * sl.smooth)
      throw NumericError("L_MME decomposition does not hold at step " + std::to_string(adam_->steps()));
    finish_step(total, tape, sl);
    return sl;
  }

  StepLog step_stage2(const data::Batch& batch, const std::vector<ad::Tensor>& flows) {
    ad::Tape tape;
    const auto frames = model::car_rollout(tape, *sys_.car, batch, flows, cfg_.variant(), ad::NormMode::Training);
    const auto lv = loss_image(tape, frames, ground_truth(batch, batch.frames, flows.size()));
    StepLog sl;
    sl.loss = sl.primary = lv.item();
    finish_step(lv, tape, sl);
    return sl;
  }

  void finish_step(const ad::Tensor& loss, ad::Tape& tape, StepLog& sl) {
    adam_->zero_grad();
    ad::backward(loss, tape);
    sl.grad_norm = adam_->clip_grad_norm(cfg_.grad_clip);
    adam_->step();
  }

  double validate(const std::vector<const data::Sequence*>& set, const std::vector<std::vector<ad::Tensor>>& flows,
                  std::size_t horizon) const {
    double sum = 0.0;
    for (std::size_t i = 0; i < set.size(); ++i) {
      ad::Tape quiet(false);
      const auto batch = data::make_batch(*set[i]);
      if (stage_ == 1) {
        const auto r = model::mme_rollout(quiet, *sys_.mme, batch, horizon, cfg_.mode(), ad::NormMode::Inference);
        const auto lf = loss_flow(quiet, r.flows, ground_truth(batch, batch.flows, horizon)).item();
        const auto ls = loss_smooth(quiet, r.flows, ground_truth(batch, batch.frames, horizon)).item();
        sum += lf + cfg_.lambda_smooth * ls;
      } else {
        const auto frames =
            model::car_rollout(quiet, *sys_.car, batch, flows[i], cfg_.variant(), ad::NormMode::Inference);
        sum += loss_image(quiet, frames, ground_truth(batch, batch.frames, horizon)).item();
      }
    }
    return sum / double(set.size());
  }

  TrainConfig cfg_;
  int stage_;
  System sys_;
  Rng rng_;
  std::unique_ptr<Adam> adam_;
  std::size_t epoch_ = 0;
  History history_;
  std::string mme_mode_;
};

}  // namespace avpred::train
