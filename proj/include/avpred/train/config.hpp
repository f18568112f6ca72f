#pragma once

#include <cstdint>
#include <set>
#include <string>

#include <json.hpp>

#include "avpred/core/binio.hpp"
#include "avpred/core/error.hpp"
#include "avpred/data/scene.hpp"
#include "avpred/model/car.hpp"

namespace avpred::train {

using json = nlohmann::json;

struct TrainConfig {
  double lambda_smooth = 0.01;
  double lr_mme = 1e-4;
  double lr_car = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double grad_clip = 10.0;  // global norm; 0 disables
  std::size_t batch_size = 0;  // 0 picks 8, or 4 on the small profile
  std::size_t epochs_stage1 = 50;
  std::size_t epochs_stage2 = 50;
  std::size_t train_horizon = 15;  // predicted frames per training rollout, capped at T-K
  std::size_t val_count = 0;       // trailing samples held out for validation
  std::uint64_t seed = 0;
  std::string data;
  std::string profile = "small";
  std::string model = "paper";  // width preset
  std::string motion_mode = "mme";
  std::string refine_variant = "car";
  bool car_audio_next = false;

  std::size_t effective_batch() const {
    if (batch_size > 0) return batch_size;
    return profile == "small" ? 4 : 8;
  }

  void validate() const {
    if (!(lambda_smooth >= 0.0)) throw ConfigError("lambda_smooth must be >= 0");
    if (!(lr_mme > 0.0) || !(lr_car > 0.0)) throw ConfigError("learning rates must be > 0");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("Adam betas must be in [0,1)");
    if (!(adam_eps > 0.0)) throw ConfigError("adam_eps must be > 0");
    if (!(grad_clip >= 0.0)) throw ConfigError("grad_clip must be >= 0");
    if (train_horizon == 0) throw ConfigError("train_horizon must be positive");
    data::profile_by_name(profile);
    model::motion_mode_from_string(motion_mode);
    model::refine_variant_from_string(refine_variant);
    if (model != "paper" && model != "desk" && model != "tiny") throw ConfigError("unknown model preset '" + model + "'");
  }

  model::MotionMode mode() const { return model::motion_mode_from_string(motion_mode); }
  model::RefineVariant variant() const { return model::refine_variant_from_string(refine_variant); }

  model::ModelConfig model_config(std::size_t height, std::size_t width) const {
    auto c = model::ModelConfig::preset(model, height, width);
    c.car_audio_next = car_audio_next;
    return c;
  }

  json to_json() const {
    return {{"lambda_smooth", lambda_smooth}, {"lr_mme", lr_mme},
            {"lr_car", lr_car},               {"beta1", beta1},
            {"beta2", beta2},                 {"adam_eps", adam_eps},
            {"grad_clip", grad_clip},         {"batch_size", batch_size},
            {"epochs_stage1", epochs_stage1}, {"epochs_stage2", epochs_stage2},
            {"train_horizon", train_horizon}, {"val_count", val_count},
            {"seed", seed},                   {"data", data},
            {"profile", profile},             {"model", model},
            {"motion_mode", motion_mode},     {"refine_variant", refine_variant},
            {"car_audio_next", car_audio_next}};
  }

  /// Overlays the keys of `j` onto the defaults; unknown keys are errors.
  static TrainConfig from_json(const json& j) {
    if (!j.is_object()) throw ConfigError("training config must be a JSON object");
    TrainConfig c;
    const json defaults = c.to_json();
    for (const auto& [key, value] : j.items())
      if (!defaults.contains(key)) throw ConfigError("unknown config key '" + key + "'");
    json merged = defaults;
    merged.update(j);
    try {
      c.lambda_smooth = merged.at("lambda_smooth").get<double>();
      c.lr_mme = merged.at("lr_mme").get<double>();
      c.lr_car = merged.at("lr_car").get<double>();
      c.beta1 = merged.at("beta1").get<double>();
      c.beta2 = merged.at("beta2").get<double>();
      c.adam_eps = merged.at("adam_eps").get<double>();
      c.grad_clip = merged.at("grad_clip").get<double>();
      c.batch_size = merged.at("batch_size").get<std::size_t>();
      c.epochs_stage1 = merged.at("epochs_stage1").get<std::size_t>();
      c.epochs_stage2 = merged.at("epochs_stage2").get<std::size_t>();
      c.train_horizon = merged.at("train_horizon").get<std::size_t>();
      c.val_count = merged.at("val_count").get<std::size_t>();
      c.seed = merged.at("seed").get<std::uint64_t>();
      c.data = merged.at("data").get<std::string>();
      c.profile = merged.at("profile").get<std::string>();
      c.model = merged.at("model").get<std::string>();
      c.motion_mode = merged.at("motion_mode").get<std::string>();
      c.refine_variant = merged.at("refine_variant").get<std::string>();
      c.car_audio_next = merged.at("car_audio_next").get<bool>();
    } catch (const json::exception& e) {
      throw ConfigError(std::string("invalid config value: ") + e.what());
    }
    c.validate();
    return c;
  }

  static TrainConfig load(const std::filesystem::path& path) {
    try {
      return from_json(json::parse(io::read_text(path)));
    } catch (const json::parse_error& e) {
      throw ConfigError("cannot parse " + path.string() + ": " + e.what());
    }
  }
};

}  // namespace avpred::train
