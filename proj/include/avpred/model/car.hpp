#pragma once

#include <string>
#include <vector>

#include "avpred/model/mme.hpp"

namespace avpred::model {

/// Two 3×3 conv-BN-ReLU layers.
struct DoubleConv {
  ConvBnAct a, b;

  DoubleConv() = default;
  DoubleConv(ParamStore& ps, const std::string& name, std::size_t in, std::size_t out, Rng& rng)
      : a(ps, name + ".0", in, out, 3, 3, Conv2dOptions::uniform(1, 1), Activation::Relu, rng),
        b(ps, name + ".1", out, out, 3, 3, Conv2dOptions::uniform(1, 1), Activation::Relu, rng) {}

  Tensor operator()(Tape& tape, const Tensor& x, NormMode mode) const { return b(tape, a(tape, x, mode), mode); }
};

/// Appearance pyramid of the last seen frame; level outputs are taken
/// before pooling.
struct ContextEncoder {
  std::vector<DoubleConv> blocks;

  ContextEncoder() = default;
  ContextEncoder(const ModelConfig& cfg, ParamStore& ps, const std::string& name, Rng& rng) {
    std::size_t in = cfg.channels;
    for (std::size_t i = 0; i < cfg.context_channels.size(); ++i) {
      blocks.emplace_back(ps, name + "." + std::to_string(i), in, cfg.context_channels[i], rng);
      in = cfg.context_channels[i];
    }
  }

  std::vector<Tensor> operator()(Tape& tape, const Tensor& frame, NormMode mode) const {
    std::vector<Tensor> z;
    Tensor x = frame;
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      if (i > 0) x = ad::max_pool2d(tape, x);
      x = blocks[i](tape, x, mode);
      z.push_back(x);
    }
    return z;
  }
};

/// 2c -> hidden -> c_i with a leaky ReLU between.
struct Mlp {
  Linear l1, l2;

  Mlp() = default;
  Mlp(ParamStore& ps, const std::string& name, std::size_t in, std::size_t hidden, std::size_t out, double bias0,
      Rng& rng)
      : l1(ps, name + ".0", in, hidden, rng), l2(ps, name + ".1", hidden, out, rng) {
    // Zero final weights so the initial output is the constant bias.
    std::fill(l2.weight.data_mut().begin(), l2.weight.data_mut().end(), 0.0);
    std::fill(l2.bias.data_mut().begin(), l2.bias.data_mut().end(), bias0);
  }

  Tensor operator()(Tape& tape, const Tensor& x) const { return l2(tape, ad::leaky_relu(tape, l1(tape, x))); }
};

/// z'[b,c,:,:] = gamma[b,c] * z[b,c,:,:] + beta[b,c]
inline Tensor film_apply(Tape& tape, const Tensor& z, const Tensor& gamma, const Tensor& beta) {
  const std::size_t B = z.dim(0), C = z.dim(1);
  if (gamma.shape() != ad::Shape{B, C} || beta.shape() != ad::Shape{B, C})
    throw DimensionError("film: gamma " + shape_str(gamma.shape()) + " / beta " + shape_str(beta.shape()) +
                         " do not match features " + shape_str(z.shape()));
  const auto g = ad::reshape(tape, gamma, {B, C, 1, 1});
  const auto b = ad::reshape(tape, beta, {B, C, 1, 1});
  return ad::add(tape, ad::mul(tape, z, g), b);
}

/// U-Net whose decoder level i concatenates [upsampled, skip, context_i].
struct UNet {
  std::vector<DoubleConv> down;
  DoubleConv bottleneck;
  std::vector<DoubleConv> up;  // up[i] produces level i
  Conv2d head;

  UNet() = default;
  UNet(const ModelConfig& cfg, ParamStore& ps, const std::string& name, Rng& rng) {
    const auto& ch = cfg.context_channels;
    const std::size_t L = ch.size();
    std::size_t in = cfg.channels;
    for (std::size_t i = 0; i < L; ++i) {
      down.emplace_back(ps, name + ".down." + std::to_string(i), in, ch[i], rng);
      in = ch[i];
    }
    bottleneck = DoubleConv(ps, name + ".bottleneck", ch[L - 1], ch[L - 1], rng);
    up.resize(L);
    for (std::size_t i = L; i-- > 0;) {
      const std::size_t from = i + 1 < L ? ch[i + 1] : ch[L - 1];
      up[i] = DoubleConv(ps, name + ".up." + std::to_string(i), from + 2 * ch[i], ch[i], rng);
    }
    head = Conv2d(ps, name + ".head", ch[0], cfg.channels, 1, 1, Conv2dOptions{}, true, rng);
  }

  Tensor operator()(Tape& tape, const Tensor& frame, const std::vector<Tensor>& context, NormMode mode) const {
    if (context.size() != down.size())
      throw DimensionError("unet: expected " + std::to_string(down.size()) + " context maps, got " +
                           std::to_string(context.size()));
    std::vector<Tensor> skips;
    Tensor x = frame;
    for (const auto& d : down) {
      x = d(tape, x, mode);
      skips.push_back(x);
      x = ad::max_pool2d(tape, x);
    }
    x = bottleneck(tape, x, mode);
    for (std::size_t i = down.size(); i-- > 0;) {
      x = ad::upsample2x(tape, x);
      const auto& s = skips[i];
      const auto& z = context[i];
      if (z.dim(2) != s.dim(2) || z.dim(3) != s.dim(3) || z.dim(0) != s.dim(0))
        throw DimensionError("unet: context " + shape_str(z.shape()) + " does not match decoder level " +
                             shape_str(s.shape()));
      x = up[i](tape, ad::concat(tape, {x, s, z}, 1), mode);
    }
    return ad::sigmoid(tape, head(tape, x));
  }
};

enum class RefineVariant { Full, NoAffine, UnetOnly };

inline RefineVariant refine_variant_from_string(const std::string& s) {
  if (s == "car" || s == "full") return RefineVariant::Full;
  if (s == "context") return RefineVariant::NoAffine;
  if (s == "unet") return RefineVariant::UnetOnly;
  throw ConfigError("unknown refine variant '" + s + "' (expected car, context or unet)");
}

inline std::string to_string(RefineVariant v) {
  switch (v) {
    case RefineVariant::Full: return "MME+CAR";
    case RefineVariant::NoAffine: return "MME+Unet+ContextEnc";
    case RefineVariant::UnetOnly: return "MME+Unet";
  }
  return "?";
}

class ContextRefiner {
 public:
  ContextRefiner(const ModelConfig& cfg, ParamStore& ps, Rng& rng, const std::string& prefix = "car")
      : cfg_(cfg) {
    cfg.validate();
    context = ContextEncoder(cfg, ps, prefix + ".context_enc", rng);
    motion = MotionEncoder(cfg, ps, prefix + ".motion_enc", rng);
    audio = AudioEncoder(cfg, ps, prefix + ".audio_enc", rng);
    const std::size_t m = 2 * cfg.feature_dim();
    for (std::size_t i = 0; i < cfg.context_channels.size(); ++i) {
      const auto n = prefix + ".film." + std::to_string(i);
      gamma.emplace_back(ps, n + ".gamma", m, cfg.film_hidden, cfg.context_channels[i], 1.0, rng);
      beta.emplace_back(ps, n + ".beta", m, cfg.film_hidden, cfg.context_channels[i], 0.0, rng);
    }
    unet = UNet(cfg, ps, prefix + ".unet", rng);
  }

  const ModelConfig& config() const { return cfg_; }
  std::size_t levels() const { return gamma.size(); }

  /// M = pooled E_m(frame, flow) || x_a, with x_a [B, c] already encoded.
  Tensor motion_feature(Tape& tape, const Tensor& frame, const Tensor& flow, const Tensor& audio_feat,
                        NormMode mode) const {
    const auto pooled = ad::global_avg_pool(tape, motion(tape, frame, flow, mode));
    return ad::concat(tape, {pooled, audio_feat}, 1);
  }

  std::pair<Tensor, Tensor> film_params(Tape& tape, const Tensor& m, std::size_t level) const {
    if (level >= gamma.size()) throw ConfigError("film level " + std::to_string(level) + " out of range");
    return {gamma[level](tape, m), beta[level](tape, m)};
  }

  /// Warp, adapt the context with the motion feature, refine.
  Tensor step(Tape& tape, const Tensor& frame, const Tensor& flow, const Tensor& audio_feat,
              const std::vector<Tensor>& ctx, RefineVariant variant, NormMode mode) const {
    const auto warped = warp(tape, frame, flow);
    std::vector<Tensor> adapted;
    if (variant == RefineVariant::Full) {
      const auto m = motion_feature(tape, frame, flow, audio_feat, mode);
      for (std::size_t i = 0; i < ctx.size(); ++i) {
        auto [g, b] = film_params(tape, m, i);
        adapted.push_back(film_apply(tape, ctx[i], g, b));
      }
    } else if (variant == RefineVariant::NoAffine) {
      adapted = ctx;
    } else {
      for (const auto& z : ctx) adapted.push_back(Tensor::zeros(z.shape()));
    }
    return unet(tape, warped, adapted, mode);
  }

  ContextEncoder context;
  MotionEncoder motion;
  AudioEncoder audio;
  std::vector<Mlp> gamma, beta;
  UNet unet;

 private:
  ModelConfig cfg_;
};

/// Refines T-K frames from precomputed MME flows (flows[j] predicts frame
/// K+j). Each step warps the previous refined output; the first warps the
/// last seen frame, which also feeds the context encoder.
inline std::vector<Tensor> car_rollout(Tape& tape, const ContextRefiner& car, const data::Batch& batch,
                                       const std::vector<Tensor>& flows, RefineVariant variant, NormMode mode) {
  const std::size_t horizon = flows.size();
  check_horizon(batch, horizon);
  const std::size_t K = batch.seen;
  const auto& cfg = car.config();
  Tensor feats;
  if (variant == RefineVariant::Full) {
    const std::size_t n = K + horizon - (cfg.car_audio_next ? 0 : 1);
    feats = car.audio.encode_all(tape, ad::slice(tape, batch.audio, 1, 0, n), mode);
  }
  Tensor frame = batch.frame(K - 1);
  const auto ctx = variant == RefineVariant::UnetOnly ? [&] {
    // Shapes only; the U-Net-only wiring never reads the values.
    std::vector<Tensor> z;
    std::size_t h = cfg.height, w = cfg.width;
    for (std::size_t i = 0; i < cfg.context_channels.size(); ++i, h /= 2, w /= 2)
      z.push_back(Tensor::zeros({batch.size(), cfg.context_channels[i], h, w}));
    return z;
  }()
                                                    : car.context(tape, frame, mode);
  std::vector<Tensor> out;
  for (std::size_t j = 0; j < horizon; ++j) {
    const std::size_t t = K + j;  // predicted frame index
    const Tensor a = variant == RefineVariant::Full ? time_slice(tape, feats, cfg.car_audio_next ? t : t - 1)
                                                    : Tensor();
    frame = car.step(tape, frame, flows[j], a, ctx, variant, mode);
    out.push_back(frame);
  }
  return out;
}

struct Prediction {
  std::vector<Tensor> frames;  // refined, frames K .. K+horizon-1
  MmeRollout motion;
};

/// Full system: MME closed loop on its own warped frames, then CAR on its
/// own refined outputs.
inline Prediction predict_rollout(Tape& tape, const MotionEstimator& mme, const ContextRefiner& car,
                                  const data::Batch& batch, std::size_t horizon, MotionMode mode,
                                  RefineVariant variant, NormMode norm) {
  Prediction p;
  p.motion = mme_rollout(tape, mme, batch, horizon, mode, norm);
  p.frames = car_rollout(tape, car, batch, p.motion.flows, variant, norm);
  return p;
}

}  // namespace avpred::model
