#pragma once

#include <string>
#include <vector>

#include "avpred/data/batch.hpp"
#include "avpred/model/config.hpp"
#include "avpred/model/layers.hpp"

namespace avpred::model {

/// Backward warp: out(p) = frame(p + flow(p)), bilinear with border clamp.
inline Tensor warp(Tape& tape, const Tensor& frame, const Tensor& flow) {
  if (frame.rank() != 4 || flow.rank() != 4 || flow.dim(1) != 2 || frame.dim(0) != flow.dim(0) ||
      frame.dim(2) != flow.dim(2) || frame.dim(3) != flow.dim(3))
    throw DimensionError("warp: frame " + shape_str(frame.shape()) + " and flow " + shape_str(flow.shape()) +
                         " do not match");
  const auto grid = ad::identity_grid(frame.dim(0), frame.dim(2), frame.dim(3));
  return ad::bilinear_sample(tape, frame, ad::add(tape, grid, flow));
}

/// softmax(q kᵀ) v with q [B,l,c], k and v [B,m,c]; unscaled as in the
/// non-local attention block.
inline Tensor attend(Tape& tape, const Tensor& q, const Tensor& k, const Tensor& v) {
  const auto scores = ad::matmul(tape, q, ad::transpose(tape, k, 1, 2));
  return ad::matmul(tape, ad::softmax(tape, scores, -1), v);
}

/// Four stride-2 convolutions over [frame, flow]; the output lies in (-1, 1).
struct MotionEncoder {
  std::vector<ConvBnAct> layers;

  MotionEncoder() = default;
  MotionEncoder(const ModelConfig& cfg, ParamStore& ps, const std::string& name, Rng& rng) {
    std::size_t in = cfg.channels + 2;
    for (std::size_t i = 0; i < cfg.motion_channels.size(); ++i) {
      const bool last = i + 1 == cfg.motion_channels.size();
      layers.emplace_back(ps, name + "." + std::to_string(i), in, cfg.motion_channels[i], 4, 4,
                          Conv2dOptions::uniform(2, 1), last ? Activation::Tanh : Activation::LeakyRelu, rng);
      in = cfg.motion_channels[i];
    }
  }

  Tensor operator()(Tape& tape, const Tensor& frame, const Tensor& flow, NormMode mode) const {
    auto x = ad::concat(tape, {frame, flow}, 1);
    for (const auto& l : layers) x = l(tape, x, mode);
    return x;
  }
};

/// Five convolutions over a spectrogram, globally averaged to [N, c].
struct AudioEncoder {
  std::vector<ConvBnAct> layers;

  AudioEncoder() = default;
  AudioEncoder(const ModelConfig& cfg, ParamStore& ps, const std::string& name, Rng& rng) {
    std::size_t in = 1;
    for (std::size_t i = 0; i < 5; ++i) {
      const bool last = i == 4;
      const Conv2dOptions opt = last ? Conv2dOptions{1, 1, 0, 0} : Conv2dOptions{2, 2, 1, 2};
      const std::size_t k = last ? 2 : 4;
      layers.emplace_back(ps, name + "." + std::to_string(i), in, cfg.audio_channels[i], k, k, opt,
                          last ? Activation::Tanh : Activation::LeakyRelu, rng);
      in = cfg.audio_channels[i];
    }
  }

  /// clips [N, F, Tc] -> [N, c]
  Tensor operator()(Tape& tape, const Tensor& clips, NormMode mode) const {
    if (clips.rank() != 3) throw DimensionError("audio encoder expects [N,F,Tc], got " + shape_str(clips.shape()));
    auto x = ad::reshape(tape, clips, {clips.dim(0), 1, clips.dim(1), clips.dim(2)});
    for (const auto& l : layers) x = l(tape, x, mode);
    return ad::global_avg_pool(tape, x);
  }

  /// Encodes every clip of audio [B, T, F, Tc] in one pass -> [B, T, c].
  Tensor encode_all(Tape& tape, const Tensor& audio, NormMode mode) const {
    const std::size_t B = audio.dim(0), T = audio.dim(1);
    const auto flat = ad::reshape(tape, audio, {B * T, audio.dim(2), audio.dim(3)});
    const auto feats = (*this)(tape, flat, mode);
    return ad::reshape(tape, feats, {B, T, feats.dim(1)});
  }
};

/// Step t of a [B, T, c] feature sequence as [B, c], recorded on the tape.
inline Tensor time_slice(Tape& tape, const Tensor& seq, std::size_t t) {
  return ad::reshape(tape, ad::slice(tape, seq, 1, t, 1), {seq.dim(0), seq.dim(2)});
}

struct MotionDecoder {
  std::vector<Deconv2d> deconvs;
  std::vector<BatchNorm> norms;

  MotionDecoder() = default;
  MotionDecoder(const ModelConfig& cfg, ParamStore& ps, const std::string& name, Rng& rng) {
    std::size_t in = cfg.lstm_hidden;
    const auto up = Conv2dOptions::uniform(2, 1);
    for (std::size_t i = 0; i < cfg.decoder_channels.size(); ++i) {
      const auto n = name + "." + std::to_string(i);
      deconvs.emplace_back(ps, n + ".deconv", in, cfg.decoder_channels[i], 4, up, false, rng);
      norms.emplace_back(ps, n + ".bn", cfg.decoder_channels[i]);
      in = cfg.decoder_channels[i];
    }
    deconvs.emplace_back(ps, name + "." + std::to_string(cfg.decoder_channels.size()) + ".deconv", in, 2, 4, up,
                         true, rng);
  }

  Tensor operator()(Tape& tape, const Tensor& h, NormMode mode) const {
    auto x = h;
    for (std::size_t i = 0; i < norms.size(); ++i) x = ad::leaky_relu(tape, norms[i](tape, deconvs[i](tape, x), mode));
    return deconvs.back()(tape, x);
  }
};

/// Append-only store of per-clip audio features, each [B, c].
class MotionMemory {
 public:
  void append(const Tensor& x) {
    if (x.rank() != 2) throw DimensionError("memory entries are [B,c], got " + shape_str(x.shape()));
    if (!entries_.empty() && x.shape() != entries_.front().shape())
      throw DimensionError("memory entry " + shape_str(x.shape()) + " does not match " +
                           shape_str(entries_.front().shape()));
    entries_.push_back(x);
  }

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const Tensor& entry(std::size_t i) const { return entries_.at(i); }
  const Tensor& newest() const {
    if (entries_.empty()) throw DimensionError("motion memory is empty");
    return entries_.back();
  }

  /// All entries as [B, n, c] in temporal order.
  Tensor stacked(Tape& tape) const {
    if (entries_.empty()) throw DimensionError("motion memory is empty");
    std::vector<Tensor> rows;
    rows.reserve(entries_.size());
    for (const auto& e : entries_) rows.push_back(ad::reshape(tape, e, {e.dim(0), 1, e.dim(1)}));
    return ad::concat(tape, rows, 1);
  }

 private:
  std::vector<Tensor> entries_;
};

enum class MotionMode { Visual, VisualRecall, Full };

inline MotionMode motion_mode_from_string(const std::string& s) {
  if (s == "v" || s == "V") return MotionMode::Visual;
  if (s == "v+recall" || s == "V+Recall") return MotionMode::VisualRecall;
  if (s == "mme" || s == "MME") return MotionMode::Full;
  throw ConfigError("unknown motion mode '" + s + "' (expected v, v+recall or mme)");
}

inline std::string to_string(MotionMode m) {
  switch (m) {
    case MotionMode::Visual: return "V";
    case MotionMode::VisualRecall: return "V+Recall";
    case MotionMode::Full: return "MME";
  }
  return "?";
}

struct MmeState {
  LstmState lstm;
  MotionMemory memory;
};

/// Self-attention over the memory; only the last query row is kept and
/// added to the newest entry.
struct Condense {
  Linear q, k, v;

  Condense() = default;
  Condense(ParamStore& ps, const std::string& name, std::size_t c, Rng& rng)
      : q(ps, name + ".q", c, c, rng), k(ps, name + ".k", c, c, rng), v(ps, name + ".v", c, c, rng) {}

  /// memory [B, n, c] -> [B, c]
  Tensor operator()(Tape& tape, const Tensor& memory) const {
    const std::size_t B = memory.dim(0), n = memory.dim(1), c = memory.dim(2);
    const auto last = ad::slice(tape, memory, 1, n - 1, 1);
    const auto mixed = attend(tape, q(tape, last), k(tape, memory), v(tape, memory));
    return ad::reshape(tape, ad::add(tape, last, mixed), {B, c});
  }
};

/// Cross-attention from flattened visual features to audio keys, residual.
struct Recall {
  Conv2d q;
  Linear k, v;

  Recall() = default;
  Recall(ParamStore& ps, const std::string& name, std::size_t c, Rng& rng)
      : q(ps, name + ".q", c, c, 1, 1, Conv2dOptions{}, true, rng),
        k(ps, name + ".k", c, c, rng),
        v(ps, name + ".v", c, c, rng) {}

  /// xv [B, c, h, w], keys [B, m, c] -> [B, c, h, w]
  Tensor operator()(Tape& tape, const Tensor& xv, const Tensor& keys) const {
    const std::size_t B = xv.dim(0), c = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
    if (keys.rank() != 3 || keys.dim(2) != c || keys.dim(0) != B)
      throw DimensionError("recall: keys " + shape_str(keys.shape()) + " incompatible with visual " +
                           shape_str(xv.shape()));
    const auto query = ad::transpose(tape, ad::reshape(tape, q(tape, xv), {B, c, h * w}), 1, 2);
    const auto out = attend(tape, query, k(tape, keys), v(tape, keys));
    const auto back = ad::reshape(tape, ad::transpose(tape, out, 1, 2), {B, c, h, w});
    return ad::add(tape, xv, back);
  }
};

class MotionEstimator {
 public:
  MotionEstimator(const ModelConfig& cfg, ParamStore& ps, Rng& rng, const std::string& prefix = "mme")
      : cfg_(cfg) {
    cfg.validate();
    const std::size_t c = cfg.feature_dim();
    motion = MotionEncoder(cfg, ps, prefix + ".motion_enc", rng);
    audio = AudioEncoder(cfg, ps, prefix + ".audio_enc", rng);
    condense = Condense(ps, prefix + ".condense", c, rng);
    recall = Recall(ps, prefix + ".recall", c, rng);
    for (std::size_t i = 0; i < cfg.lstm_layers; ++i)
      lstm.emplace_back(ps, prefix + ".lstm." + std::to_string(i), i == 0 ? c : cfg.lstm_hidden, cfg.lstm_hidden,
                        rng);
    decoder = MotionDecoder(cfg, ps, prefix + ".decoder", rng);
  }

  const ModelConfig& config() const { return cfg_; }

  std::size_t feature_height() const { return cfg_.height >> cfg_.motion_channels.size(); }
  std::size_t feature_width() const { return cfg_.width >> cfg_.motion_channels.size(); }

  MmeState initial_state(std::size_t batch) const {
    MmeState s;
    for (std::size_t i = 0; i < cfg_.lstm_layers; ++i) {
      s.lstm.hidden.push_back(Tensor::zeros({batch, cfg_.lstm_hidden, feature_height(), feature_width()}));
      s.lstm.cell.push_back(Tensor::zeros({batch, cfg_.lstm_hidden, feature_height(), feature_width()}));
    }
    return s;
  }

  LstmState lstm_step(Tape& tape, const Tensor& x, const LstmState& state) const {
    if (state.hidden.size() != lstm.size() || state.cell.size() != lstm.size())
      throw DimensionError("convlstm: state has " + std::to_string(state.hidden.size()) + " layers, expected " +
                           std::to_string(lstm.size()));
    LstmState next;
    Tensor in = x;
    for (std::size_t i = 0; i < lstm.size(); ++i) {
      auto [h, c] = lstm[i](tape, in, state.hidden[i], state.cell[i]);
      next.hidden.push_back(h);
      next.cell.push_back(c);
      in = h;
    }
    return next;
  }

  /// One recurrent step: appends `audio_next` (x_a of the clip aligned with
  /// the predicted frame) to memory and returns the predicted backward flow.
  Tensor step(Tape& tape, const Tensor& frame, const Tensor& flow, const Tensor& audio_next, MmeState& state,
              MotionMode mode, NormMode norm) const {
    Tensor xv = motion(tape, frame, flow, norm);
    if (mode != MotionMode::Visual) {
      state.memory.append(audio_next);
      const auto mem = state.memory.stacked(tape);
      if (mode == MotionMode::Full) {
        const auto condensed = condense(tape, mem);
        xv = recall(tape, xv, ad::reshape(tape, condensed, {condensed.dim(0), 1, condensed.dim(1)}));
      } else {
        xv = recall(tape, xv, mem);
      }
    }
    state.lstm = lstm_step(tape, xv, state.lstm);
    return decoder(tape, state.lstm.hidden.back(), norm);
  }

  MotionEncoder motion;
  AudioEncoder audio;
  Condense condense;
  Recall recall;
  std::vector<ConvLstmCell> lstm;
  MotionDecoder decoder;

 private:
  ModelConfig cfg_;
};

struct MmeRollout {
  std::vector<Tensor> flows;   // predicted F̂ for frames K .. K+horizon-1, each [B,2,H,W]
  std::vector<Tensor> warped;  // MME's own unrefined frames for the same indices
  std::size_t memory_length = 0;
};

inline void check_horizon(const data::Batch& batch, std::size_t horizon) {
  if (batch.seen == 0 || batch.length() <= batch.seen)
    throw ConfigError("sequence of length " + std::to_string(batch.length()) + " has no frames after K=" +
                      std::to_string(batch.seen));
  if (horizon == 0 || batch.seen + horizon > batch.length())
    throw ConfigError("horizon " + std::to_string(horizon) + " exceeds the " +
                      std::to_string(batch.length() - batch.seen) + " frames available after K");
}

/// Teacher-forced warm-up over the K seen frames, then closed-loop
/// prediction in which each step consumes its own warped frame and flow.
/// Frame 0 primes memory with clip 0; step i appends clip i+1.
inline MmeRollout mme_rollout(Tape& tape, const MotionEstimator& mme, const data::Batch& batch, std::size_t horizon,
                              MotionMode mode, NormMode norm) {
  check_horizon(batch, horizon);
  const std::size_t K = batch.seen, last = K + horizon;
  MmeState state = mme.initial_state(batch.size());
  Tensor feats;
  if (mode != MotionMode::Visual) {
    const auto clips = ad::slice(tape, batch.audio, 1, 0, last);
    feats = mme.audio.encode_all(tape, clips, norm);
    state.memory.append(time_slice(tape, feats, 0));
  }
  MmeRollout out;
  Tensor frame, flow;
  for (std::size_t i = 0; i + 1 < last; ++i) {
    if (i < K) {
      frame = batch.frame(i);
      flow = batch.flow(i);
    }
    const Tensor a_next = mode == MotionMode::Visual ? Tensor() : time_slice(tape, feats, i + 1);
    const Tensor next_flow = mme.step(tape, frame, flow, a_next, state, mode, norm);
    if (i + 1 >= K) {
      const Tensor next_frame = warp(tape, frame, next_flow);
      out.flows.push_back(next_flow);
      out.warped.push_back(next_frame);
      frame = next_frame;
      flow = next_flow;
    }
  }
  out.memory_length = state.memory.size();
  return out;
}

}  // namespace avpred::model
