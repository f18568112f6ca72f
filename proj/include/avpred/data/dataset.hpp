#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "avpred/core/binio.hpp"
#include "avpred/data/scene.hpp"

namespace avpred::data {

using json = nlohmann::json;
namespace fs = std::filesystem;

inline constexpr int kDatasetVersion = 1;

struct Dataset {
  std::string split;
  json distribution;  // generator parameters, free-form
  std::vector<Sequence> samples;
};

inline json spec_to_json(const SceneSpec& s) {
  json sprites = json::array();
  for (const auto& sp : s.sprites)
    sprites.push_back({{"glyph", sp.glyph},
                       {"size", sp.size},
                       {"position", {sp.position.x, sp.position.y}},
                       {"velocity", {sp.velocity.x, sp.velocity.y}},
                       {"tone", sp.tone}});
  return {{"height", s.height}, {"width", s.width},  {"channels", s.channels},
          {"frames", s.frames}, {"seen", s.seen},    {"seed", s.seed},
          {"freq_bins", s.freq_bins}, {"clip_bins", s.clip_bins}, {"sprites", sprites}};
}

inline SceneSpec spec_from_json(const json& j) {
  SceneSpec s;
  s.height = j.at("height");
  s.width = j.at("width");
  s.channels = j.at("channels");
  s.frames = j.at("frames");
  s.seen = j.at("seen");
  s.seed = j.at("seed");
  s.freq_bins = j.at("freq_bins");
  s.clip_bins = j.at("clip_bins");
  for (const auto& js : j.at("sprites")) {
    SpriteSpec sp;
    sp.glyph = js.at("glyph");
    sp.size = js.at("size");
    sp.position = {js.at("position").at(0), js.at("position").at(1)};
    sp.velocity = {js.at("velocity").at(0), js.at("velocity").at(1)};
    sp.tone = js.at("tone");
    s.sprites.push_back(sp);
  }
  return s;
}

inline json write_dataset(const Dataset& ds, const fs::path& dir) {
  fs::create_directories(dir);
  json samples = json::array();
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    const auto& seq = ds.samples[i];
    const std::string name = "sample_" + std::to_string(i);
    fs::create_directories(dir / name);
    json files = json::object();
    auto put = [&](const char* key, const ad::Tensor& t) {
      const std::string file = std::string(key) + ".bin";
      io::write_raw<float>(dir / name / file, t.data());
      files[key] = {{"file", file}, {"shape", t.shape()}};
    };
    put("frames", seq.frames);
    put("audio", seq.audio);
    put("flow", seq.flows);
    json bounces = json::array();
    for (std::size_t t = 0; t < seq.bounce.size(); ++t)
      if (seq.bounce[t]) bounces.push_back(t);
    samples.push_back({{"dir", name},
                       {"files", files},
                       {"spec", spec_to_json(seq.spec)},
                       {"bounce_frames", bounces},
                       {"static_sprite", seq.spec.has_static_sprite()}});
  }
  json manifest = {{"format", "avpred-dataset"},
                   {"version", kDatasetVersion},
                   {"split", ds.split},
                   {"count", ds.samples.size()},
                   {"dtype", "float32"},
                   {"byte_order", "little"},
                   {"distribution", ds.distribution},
                   {"samples", samples}};
  io::write_text(dir / "manifest.json", manifest.dump(2) + "\n");
  return manifest;
}

inline Dataset read_dataset(const fs::path& dir) {
  json m;
  try {
    m = json::parse(io::read_text(dir / "manifest.json"));
  } catch (const json::parse_error& e) {
    throw FormatError("malformed manifest in " + dir.string() + ": " + e.what());
  }
  try {
    if (m.at("version").get<int>() != kDatasetVersion)
      throw FormatError("unknown dataset format version " + m.at("version").dump());
    if (m.at("dtype") != "float32" || m.at("byte_order") != "little")
      throw FormatError("unsupported dtype/byte order in " + dir.string());
    Dataset ds;
    ds.split = m.value("split", "");
    ds.distribution = m.value("distribution", json::object());
    const auto& samples = m.at("samples");
    if (samples.size() != m.at("count").get<std::size_t>())
      throw FormatError("manifest count does not match sample list");
    for (const auto& js : samples) {
      Sequence seq;
      seq.spec = spec_from_json(js.at("spec"));
      const fs::path sdir = dir / js.at("dir").get<std::string>();
      auto load = [&](const char* key) {
        const auto& f = js.at("files").at(key);
        ad::Shape shape = f.at("shape").get<ad::Shape>();
        auto values = io::read_raw<float>(sdir / f.at("file").get<std::string>(), ad::numel_of(shape));
        return ad::Tensor(std::move(shape), std::move(values));
      };
      seq.frames = load("frames");
      seq.audio = load("audio");
      seq.flows = load("flow");
      const std::size_t T = seq.frames.dim(0);
      if (seq.audio.dim(0) != T || seq.flows.dim(0) != T || seq.flows.dim(1) != 2)
        throw FormatError("inconsistent array shapes in " + sdir.string());
      seq.bounce.assign(T, false);
      for (const auto& b : js.at("bounce_frames")) seq.bounce.at(b.get<std::size_t>()) = true;
      ds.samples.push_back(std::move(seq));
    }
    return ds;
  } catch (const json::exception& e) {
    throw FormatError("invalid manifest in " + dir.string() + ": " + e.what());
  }
}

/// Generates `count` sequences; sample i uses seed `seed + i`.
inline Dataset generate_dataset(const Profile& prof, std::size_t count, std::size_t sprites, std::uint64_t seed,
                                std::string split = "train") {
  Dataset ds;
  ds.split = std::move(split);
  ds.distribution = {{"profile", prof.name},  {"size", prof.size},     {"frames", prof.frames},
                     {"seen", prof.seen},     {"sprites", sprites},    {"seed", seed},
                     {"speed_range", {1, 3}}, {"freq_bins", kFreqBins}, {"clip_bins", kClipBins}};
  for (std::size_t i = 0; i < count; ++i) ds.samples.push_back(generate_sequence(random_scene(prof, sprites, seed + i)));
  return ds;
}

}  // namespace avpred::data
