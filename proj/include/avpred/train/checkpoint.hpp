#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "avpred/core/binio.hpp"
#include "avpred/model/params.hpp"

namespace avpred::train {

using json = nlohmann::json;
namespace fs = std::filesystem;

inline constexpr int kCheckpointVersion = 1;

struct StepLog {
  std::size_t epoch = 0;
  std::size_t step = 0;
  double loss = 0.0;
  double primary = 0.0;  // L_flow in stage 1, L_v in stage 2
  double smooth = 0.0;   // L_smooth in stage 1
  double grad_norm = 0.0;
};

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double train_primary = 0.0;
  double train_smooth = 0.0;
  std::optional<double> val_loss;
};

struct History {
  std::vector<StepLog> steps;
  std::vector<EpochLog> epochs;

  bool operator==(const History& o) const {
    auto same_step = [](const StepLog& a, const StepLog& b) {
      return a.epoch == b.epoch && a.step == b.step && a.loss == b.loss && a.primary == b.primary &&
             a.smooth == b.smooth && a.grad_norm == b.grad_norm;
    };
    if (steps.size() != o.steps.size() || epochs.size() != o.epochs.size()) return false;
    for (std::size_t i = 0; i < steps.size(); ++i)
      if (!same_step(steps[i], o.steps[i])) return false;
    for (std::size_t i = 0; i < epochs.size(); ++i) {
      const auto &a = epochs[i], &b = o.epochs[i];
      if (a.epoch != b.epoch || a.train_loss != b.train_loss || a.train_primary != b.train_primary ||
          a.train_smooth != b.train_smooth || a.val_loss != b.val_loss)
        return false;
    }
    return true;
  }

  json to_json() const {
    json s = json::array(), e = json::array();
    for (const auto& x : steps)
      s.push_back({x.epoch, x.step, x.loss, x.primary, x.smooth, x.grad_norm});
    for (const auto& x : epochs)
      e.push_back({{"epoch", x.epoch},
                   {"train_loss", x.train_loss},
                   {"train_primary", x.train_primary},
                   {"train_smooth", x.train_smooth},
                   {"val_loss", x.val_loss ? json(*x.val_loss) : json(nullptr)}});
    return {{"steps", s}, {"epochs", e}};
  }

  static History from_json(const json& j) {
    History h;
    for (const auto& x : j.at("steps"))
      h.steps.push_back({x.at(0), x.at(1), x.at(2), x.at(3), x.at(4), x.at(5)});
    for (const auto& x : j.at("epochs")) {
      EpochLog e{x.at("epoch"), x.at("train_loss"), x.at("train_primary"), x.at("train_smooth"), std::nullopt};
      if (!x.at("val_loss").is_null()) e.val_loss = x.at("val_loss").get<double>();
      h.epochs.push_back(e);
    }
    return h;
  }
};

/// On-disk training snapshot: a manifest plus one float64 little-endian
/// file per named array (parameters, buffers, optimizer moments).
struct Checkpoint {
  int stage = 1;
  json train_config;
  json model_config;
  std::size_t epoch = 0;
  std::size_t adam_steps = 0;
  std::string rng_state;
  History history;
  std::vector<std::pair<std::string, ad::Tensor>> arrays;  // sorted by name

  const ad::Tensor* find(const std::string& name) const {
    for (const auto& [n, t] : arrays)
      if (n == name) return &t;
    return nullptr;
  }
};

inline void save_checkpoint(const Checkpoint& ck, const fs::path& dir) {
  fs::create_directories(dir / "arrays");
  json arrays = json::array();
  for (const auto& [name, t] : ck.arrays) {
    const std::string file = "arrays/" + name + ".bin";
    io::write_raw<double>(dir / file, t.data());
    arrays.push_back({{"name", name}, {"file", file}, {"shape", t.shape()}});
  }
  const json manifest = {{"format", "avpred-checkpoint"},
                         {"version", kCheckpointVersion},
                         {"stage", ck.stage},
                         {"epoch", ck.epoch},
                         {"adam_steps", ck.adam_steps},
                         {"dtype", "float64"},
                         {"byte_order", "little"},
                         {"rng_state", ck.rng_state},
                         {"train_config", ck.train_config},
                         {"model_config", ck.model_config},
                         {"history", ck.history.to_json()},
                         {"arrays", arrays}};
  io::write_text(dir / "manifest.json", manifest.dump(1) + "\n");
}

inline Checkpoint load_checkpoint(const fs::path& dir) {
  json m;
  try {
    m = json::parse(io::read_text(dir / "manifest.json"));
  } catch (const json::parse_error& e) {
    throw FormatError("malformed checkpoint manifest in " + dir.string() + ": " + e.what());
  }
  try {
    if (m.at("format") != "avpred-checkpoint") throw FormatError(dir.string() + " is not a checkpoint");
    if (m.at("version").get<int>() != kCheckpointVersion)
      throw FormatError("unknown checkpoint version " + m.at("version").dump());
    Checkpoint ck;
    ck.stage = m.at("stage");
    ck.epoch = m.at("epoch");
    ck.adam_steps = m.at("adam_steps");
    ck.rng_state = m.at("rng_state");
    ck.train_config = m.at("train_config");
    ck.model_config = m.at("model_config");
    ck.history = History::from_json(m.at("history"));
    for (const auto& a : m.at("arrays")) {
      ad::Shape shape = a.at("shape").get<ad::Shape>();
      auto values = io::read_raw<double>(dir / a.at("file").get<std::string>(), ad::numel_of(shape));
      ck.arrays.emplace_back(a.at("name").get<std::string>(), ad::Tensor(std::move(shape), std::move(values)));
    }
    return ck;
  } catch (const json::exception& e) {
    throw FormatError("invalid checkpoint manifest in " + dir.string() + ": " + e.what());
  }
}

/// Copies checkpoint arrays into the store's parameters and buffers in
/// place. Entries whose names start with `optional_prefix` may be absent.
inline void load_into(const Checkpoint& ck, const model::ParamStore& store, const std::string& optional_prefix = "") {
  for (const auto* group : {&store.params(), &store.buffers()}) {
    for (const auto& [name, t] : *group) {
      const auto* src = ck.find(name);
      if (!src) {
        if (!optional_prefix.empty() && name.rfind(optional_prefix, 0) == 0) continue;
        throw FormatError("checkpoint lacks array '" + name + "'");
      }
      if (src->shape() != t.shape())
        throw FormatError("checkpoint array '" + name + "' has shape " + shape_str(src->shape()) + ", model expects " +
                          shape_str(t.shape()));
      std::copy(src->data().begin(), src->data().end(), t.data_mut().begin());
    }
  }
}

}  // namespace avpred::train
