#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "avpred/core/autodiff.hpp"
#include "avpred/data/glyphs.hpp"

namespace avpred::data {

inline constexpr std::size_t kFreqBins = 32;
inline constexpr std::size_t kClipBins = 8;
inline constexpr std::size_t kBounceShift = 2;

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
  bool operator==(const Vec2&) const = default;
};

struct SpriteSpec {
  std::size_t glyph = 0;
  std::size_t size = kGlyphSize;
  Vec2 position;
  Vec2 velocity;
  std::size_t tone = 0;  // base frequency row
};

struct SceneSpec {
  std::size_t height = 48;
  std::size_t width = 48;
  std::size_t channels = 1;
  std::vector<SpriteSpec> sprites;
  std::size_t frames = 25;  // T
  std::size_t seen = 5;     // K
  std::uint64_t seed = 0;
  std::size_t freq_bins = kFreqBins;
  std::size_t clip_bins = kClipBins;

  void validate() const {
    if (height == 0 || width == 0 || channels == 0) throw ConfigError("canvas must be non-empty");
    if (seen < 1 || seen >= frames)
      throw ConfigError("need 1 <= K < T, got K=" + std::to_string(seen) + " T=" + std::to_string(frames));
    for (std::size_t i = 0; i < sprites.size(); ++i) {
      const auto& s = sprites[i];
      const auto tag = "sprite " + std::to_string(i) + ": ";
      if (s.glyph >= kGlyphCount) throw ConfigError(tag + "unknown glyph id " + std::to_string(s.glyph));
      if (s.size == 0 || s.size > std::min(height, width))
        throw ConfigError(tag + "size " + std::to_string(s.size) + " does not fit the canvas");
      if (s.tone + kBounceShift >= freq_bins)
        throw ConfigError(tag + "tone " + std::to_string(s.tone) + " plus bounce shift exceeds " +
                          std::to_string(freq_bins) + " bins");
      const double max_x = double(width - s.size), max_y = double(height - s.size);
      if (!(s.position.x >= 0 && s.position.x <= max_x && s.position.y >= 0 && s.position.y <= max_y))
        throw ConfigError(tag + "initial position outside the canvas");
    }
  }

  /// True when some sprite has zero velocity; its flow is identically zero.
  bool has_static_sprite() const {
    return std::any_of(sprites.begin(), sprites.end(),
                       [](const SpriteSpec& s) { return s.velocity.x == 0.0 && s.velocity.y == 0.0; });
  }
};

struct Trajectory {
  // Indexed [t][sprite].
  std::vector<std::vector<Vec2>> position;
  std::vector<std::vector<Vec2>> velocity;
  std::vector<std::vector<bool>> bounce;

  bool any_bounce(std::size_t t) const {
    return std::any_of(bounce[t].begin(), bounce[t].end(), [](bool b) { return b; });
  }
};

namespace detail {
// Specular reflection of one axis against [0, hi].
inline bool reflect_axis(double& p, double& v, double hi) {
  bool hit = false;
  if (p < 0.0) {
    p = -p;
    v = -v;
    hit = true;
  } else if (p > hi) {
    p = 2.0 * hi - p;
    v = -v;
    hit = true;
  }
  p = std::clamp(p, 0.0, hi);
  return hit;
}
}  // namespace detail

inline Trajectory simulate_trajectory(const SceneSpec& spec) {
  spec.validate();
  const std::size_t n = spec.sprites.size();
  Trajectory tr;
  tr.position.assign(spec.frames, std::vector<Vec2>(n));
  tr.velocity.assign(spec.frames, std::vector<Vec2>(n));
  tr.bounce.assign(spec.frames, std::vector<bool>(n, false));
  for (std::size_t s = 0; s < n; ++s) {
    const auto& sp = spec.sprites[s];
    Vec2 p = sp.position, v = sp.velocity;
    const double hx = double(spec.width - sp.size), hy = double(spec.height - sp.size);
    tr.position[0][s] = p;
    tr.velocity[0][s] = v;
    for (std::size_t t = 1; t < spec.frames; ++t) {
      p.x += v.x;
      p.y += v.y;
      const bool bx = detail::reflect_axis(p.x, v.x, hx);
      const bool by = detail::reflect_axis(p.y, v.y, hy);
      tr.position[t][s] = p;
      tr.velocity[t][s] = v;
      tr.bounce[t][s] = bx || by;
    }
  }
  return tr;
}

/// Per-sprite intensity layer [H*W] for frame t, bilinearly splatted and clipped.
inline std::vector<double> sprite_layer(const SceneSpec& spec, const SpriteSpec& sp, Vec2 pos) {
  const std::size_t H = spec.height, W = spec.width;
  std::vector<double> layer(H * W, 0.0);
  const double x0f = std::floor(pos.x), y0f = std::floor(pos.y);
  const double fx = pos.x - x0f, fy = pos.y - y0f;
  const long x0 = long(x0f), y0 = long(y0f);
  const double wts[4] = {(1 - fy) * (1 - fx), (1 - fy) * fx, fy * (1 - fx), fy * fx};
  for (std::size_t gy = 0; gy < sp.size; ++gy) {
    for (std::size_t gx = 0; gx < sp.size; ++gx) {
      const double v = glyph_pixel(sp.glyph, gy * kGlyphSize / sp.size, gx * kGlyphSize / sp.size);
      if (v == 0.0) continue;
      for (int k = 0; k < 4; ++k) {
        if (wts[k] == 0.0) continue;
        const long y = y0 + long(gy) + (k >> 1), x = x0 + long(gx) + (k & 1);
        if (y < 0 || x < 0 || y >= long(H) || x >= long(W)) continue;
        layer[std::size_t(y) * W + std::size_t(x)] += wts[k] * v;
      }
    }
  }
  for (auto& v : layer) v = std::min(v, 1.0);
  return layer;
}

/// Frames [T, C, H, W]: sprites composited with max over a black background.
inline ad::Tensor render_frames(const SceneSpec& spec, const Trajectory& tr) {
  spec.validate();
  const std::size_t T = spec.frames, C = spec.channels, HW = spec.height * spec.width;
  std::vector<double> out(T * C * HW, 0.0);
  for (std::size_t t = 0; t < T; ++t) {
    std::vector<double> frame(HW, 0.0);
    for (std::size_t s = 0; s < spec.sprites.size(); ++s) {
      const auto layer = sprite_layer(spec, spec.sprites[s], tr.position[t][s]);
      for (std::size_t i = 0; i < HW; ++i) frame[i] = std::max(frame[i], layer[i]);
    }
    for (std::size_t c = 0; c < C; ++c) std::copy(frame.begin(), frame.end(), out.begin() + (t * C + c) * HW);
  }
  return ad::Tensor({T, C, spec.height, spec.width}, std::move(out));
}

/// Backward flow [T, 2, H, W]; channel 0 is x. Sprites later in the list are on top.
inline ad::Tensor exact_backward_flow(const SceneSpec& spec, const Trajectory& tr) {
  const std::size_t T = spec.frames, HW = spec.height * spec.width;
  std::vector<double> out(T * 2 * HW, 0.0);
  for (std::size_t t = 1; t < T; ++t) {
    double* fx = out.data() + t * 2 * HW;
    double* fy = fx + HW;
    for (std::size_t s = 0; s < spec.sprites.size(); ++s) {
      const Vec2 cur = tr.position[t][s], prev = tr.position[t - 1][s];
      const auto layer = sprite_layer(spec, spec.sprites[s], cur);
      for (std::size_t i = 0; i < HW; ++i) {
        if (layer[i] > 0.0) {
          fx[i] = prev.x - cur.x;
          fy[i] = prev.y - cur.y;
        }
      }
    }
  }
  return ad::Tensor({T, 2, spec.height, spec.width}, std::move(out));
}

/// Tone amplitude for a sprite at distance d from the canvas origin.
inline double tone_amplitude(double d, double d0) { return 1.0 / (1.0 + d / d0); }

/// Audio clip A_t as [F, Tc].
inline ad::Tensor synth_spectrogram(const SceneSpec& spec, const Trajectory& tr, std::size_t t) {
  if (t >= spec.frames) throw DimensionError("frame index " + std::to_string(t) + " out of range");
  const std::size_t F = spec.freq_bins, Tc = spec.clip_bins;
  const double d0 = std::hypot(double(spec.height), double(spec.width)) / 4.0;
  std::vector<double> out(F * Tc, 0.0);
  for (std::size_t s = 0; s < spec.sprites.size(); ++s) {
    const Vec2 p = tr.position[t][s];
    const double a = tone_amplitude(std::hypot(p.x, p.y), d0);
    const std::size_t row = spec.sprites[s].tone + (tr.bounce[t][s] ? kBounceShift : 0);
    for (std::size_t c = 0; c < Tc; ++c) out[row * Tc + c] += a;
  }
  for (auto& v : out) v = std::clamp(v, 0.0, 1.0);
  return ad::Tensor({F, Tc}, std::move(out));
}

struct Sequence {
  SceneSpec spec;
  std::vector<bool> bounce;  // per frame, any sprite
  ad::Tensor frames;         // [T, C, H, W]
  ad::Tensor audio;          // [T, F, Tc]
  ad::Tensor flows;          // [T, 2, H, W]

  std::size_t length() const { return frames.dim(0); }
};

inline Sequence generate_sequence(const SceneSpec& spec) {
  spec.validate();
  const auto tr = simulate_trajectory(spec);
  Sequence seq;
  seq.spec = spec;
  seq.frames = render_frames(spec, tr);
  seq.flows = exact_backward_flow(spec, tr);
  std::vector<double> audio;
  audio.reserve(spec.frames * spec.freq_bins * spec.clip_bins);
  for (std::size_t t = 0; t < spec.frames; ++t) {
    const auto a = synth_spectrogram(spec, tr, t);
    audio.insert(audio.end(), a.data().begin(), a.data().end());
    seq.bounce.push_back(tr.any_bounce(t));
  }
  seq.audio = ad::Tensor({spec.frames, spec.freq_bins, spec.clip_bins}, std::move(audio));
  return seq;
}

struct Profile {
  std::string name;
  std::size_t size = 48;
  std::size_t frames = 25;
  std::size_t seen = 5;
};

inline Profile profile_by_name(const std::string& name) {
  if (name == "default") return {"default", 48, 25, 5};
  if (name == "small") return {"small", 32, 15, 5};
  throw ConfigError("unknown profile '" + name + "' (expected default or small)");
}

/// Tone row for a digit; spaced by 3 so a bounce shift never lands on another base row.
inline std::size_t tone_for_glyph(std::size_t glyph) { return 2 + 3 * glyph; }

/// Random scene with integer positions and velocities in {-3..3}\{0} per axis,
/// so every displacement is an exact pixel translation. Digits are distinct.
inline SceneSpec random_scene(const Profile& prof, std::size_t n_sprites, std::uint64_t seed) {
  if (n_sprites > kGlyphCount) throw ConfigError("too many sprites");
  SceneSpec spec;
  spec.height = spec.width = prof.size;
  spec.frames = prof.frames;
  spec.seen = prof.seen;
  spec.seed = seed;
  Rng rng(seed);
  std::vector<std::size_t> digits(kGlyphCount);
  for (std::size_t i = 0; i < kGlyphCount; ++i) digits[i] = i;
  for (std::size_t i = 0; i < n_sprites; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, kGlyphCount - 1);
    std::swap(digits[i], digits[pick(rng)]);
  }
  const long hi = long(prof.size - kGlyphSize);
  std::uniform_int_distribution<long> pos(0, hi);
  std::uniform_int_distribution<int> speed(1, 3), sign(0, 1);
  auto vel = [&] { return double(speed(rng) * (sign(rng) ? 1 : -1)); };
  for (std::size_t i = 0; i < n_sprites; ++i) {
    SpriteSpec sp;
    sp.glyph = digits[i];
    sp.tone = tone_for_glyph(sp.glyph);
    sp.position = {double(pos(rng)), double(pos(rng))};
    sp.velocity = {vel(), vel()};
    spec.sprites.push_back(sp);
  }
  spec.validate();
  return spec;
}

}  // namespace avpred::data
