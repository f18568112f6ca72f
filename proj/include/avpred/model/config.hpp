#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "avpred/core/error.hpp"

namespace avpred::model {

/// Architecture hyperparameters.
///
/// Presets: "paper" uses the published layer widths. "desk" divides every
/// width by four so that multi-seed ablations fit on one CPU core. "tiny"
/// is for finite-difference checks.
struct ModelConfig {
  std::size_t height = 48;
  std::size_t width = 48;
  std::size_t channels = 1;
  std::size_t freq_bins = 32;
  std::size_t clip_bins = 8;

  std::vector<std::size_t> motion_channels{64, 64, 128, 128};
  std::vector<std::size_t> audio_channels{64, 128, 256, 512, 128};
  std::size_t lstm_layers = 4;
  std::size_t lstm_hidden = 128;
  std::vector<std::size_t> decoder_channels{128, 64, 64};  // final 2-channel layer implied
  std::vector<std::size_t> context_channels{32, 64, 128, 256};
  std::size_t film_hidden = 128;
  bool car_audio_next = false;  // condition CAR on the clip of the predicted frame

  std::size_t feature_dim() const { return motion_channels.back(); }

  static ModelConfig preset(const std::string& name, std::size_t h, std::size_t w) {
    ModelConfig c;
    c.height = h;
    c.width = w;
    if (name == "paper") {
    } else if (name == "desk") {
      c.motion_channels = {16, 16, 32, 32};
      c.audio_channels = {16, 32, 64, 128, 32};
      c.lstm_hidden = 32;
      c.decoder_channels = {32, 16, 16};
      c.context_channels = {8, 16, 32, 64};
      c.film_hidden = 32;
    } else if (name == "tiny") {
      c.motion_channels = {4, 4, 6, 6};
      c.audio_channels = {4, 4, 6, 6, 6};
      c.lstm_layers = 1;
      c.lstm_hidden = 5;
      c.decoder_channels = {5, 4, 3};
      c.context_channels = {3, 4};
      c.film_hidden = 5;
    } else {
      throw ConfigError("unknown width preset '" + name + "' (expected paper, desk or tiny)");
    }
    c.validate();
    return c;
  }

  /// Output sizes of the audio stack along one axis, or 0 if it collapses.
  static std::size_t audio_extent(std::size_t n, std::size_t pad) {
    for (int i = 0; i < 4; ++i) {
      if (n + 2 * pad < 4) return 0;
      n = (n + 2 * pad - 4) / 2 + 1;
    }
    return n >= 2 ? n - 1 : 0;
  }

  void validate() const {
    auto fail = [](const std::string& m) { throw ConfigError(m); };
    if (motion_channels.empty() || decoder_channels.size() + 1 != motion_channels.size())
      fail("decoder must have one layer fewer than the motion encoder plus the flow head");
    const std::size_t down = std::size_t{1} << motion_channels.size();
    if (height % down != 0 || width % down != 0)
      fail("frame size " + std::to_string(height) + "x" + std::to_string(width) + " must be divisible by " +
           std::to_string(down));
    const std::size_t pool = std::size_t{1} << context_channels.size();
    if (context_channels.empty() || height % pool != 0 || width % pool != 0)
      fail("frame size must be divisible by 2^" + std::to_string(context_channels.size()) + " for the U-Net");
    if (audio_channels.size() != 5) fail("audio encoder has exactly five layers");
    if (audio_channels.back() != feature_dim())
      fail("audio and motion feature widths differ: " + std::to_string(audio_channels.back()) + " vs " +
           std::to_string(feature_dim()));
    if (audio_extent(freq_bins, 1) == 0 || audio_extent(clip_bins, 2) == 0)
      fail("spectrogram " + std::to_string(freq_bins) + "x" + std::to_string(clip_bins) +
           " is too small for the audio encoder");
    if (lstm_layers == 0 || lstm_hidden == 0 || film_hidden == 0) fail("layer sizes must be positive");
    if (channels == 0) fail("frames need at least one channel");
  }

  nlohmann::json to_json() const {
    return {{"height", height},
            {"width", width},
            {"channels", channels},
            {"freq_bins", freq_bins},
            {"clip_bins", clip_bins},
            {"motion_channels", motion_channels},
            {"audio_channels", audio_channels},
            {"lstm_layers", lstm_layers},
            {"lstm_hidden", lstm_hidden},
            {"decoder_channels", decoder_channels},
            {"context_channels", context_channels},
            {"film_hidden", film_hidden},
            {"car_audio_next", car_audio_next}};
  }

  static ModelConfig from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.height = j.at("height");
    c.width = j.at("width");
    c.channels = j.at("channels");
    c.freq_bins = j.at("freq_bins");
    c.clip_bins = j.at("clip_bins");
    c.motion_channels = j.at("motion_channels").get<std::vector<std::size_t>>();
    c.audio_channels = j.at("audio_channels").get<std::vector<std::size_t>>();
    c.lstm_layers = j.at("lstm_layers");
    c.lstm_hidden = j.at("lstm_hidden");
    c.decoder_channels = j.at("decoder_channels").get<std::vector<std::size_t>>();
    c.context_channels = j.at("context_channels").get<std::vector<std::size_t>>();
    c.film_hidden = j.at("film_hidden");
    c.car_audio_next = j.at("car_audio_next");
    c.validate();
    return c;
  }

  bool operator==(const ModelConfig&) const = default;
};

}  // namespace avpred::model
