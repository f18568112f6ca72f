// Command-line front end: dataset generation, two-stage training,
// prediction, evaluation, gradient checks and flow visualisation.

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include "avpred/eval/evaluate.hpp"
#include "avpred/eval/gradsuite.hpp"
#include "avpred/eval/image.hpp"

using namespace avpred;
using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr int kUsage = 1;
constexpr int kRuntime = 2;

struct GenArgs {
  std::string out, profile = "small";
  std::size_t count = 64, sprites = 2;
  std::uint64_t seed = 0;
  std::string split = "train";
};

struct TrainArgs {
  int stage = 1;
  std::string data, config, out, resume, mme;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> epochs;
};

struct PredictArgs {
  std::string ckpt, data, out;
  std::size_t sample = 0, horizon = 0;
};

struct EvalArgs {
  std::string ckpt, data, json;
  std::size_t horizon = 0, chunk = 8;
};

struct GradArgs {
  std::string profile = "small";
};

struct VizArgs {
  std::string data, out;
  std::size_t sample = 0, frame = 1;
  std::optional<double> fmax;
};

int gen_data(const GenArgs& a) {
  const auto prof = data::profile_by_name(a.profile);
  const auto ds = data::generate_dataset(prof, a.count, a.sprites, a.seed, a.split);
  data::write_dataset(ds, a.out);
  std::printf("wrote %zu %s sequences (%zux%zu, T=%zu, K=%zu) to %s\n", a.count, a.split.c_str(), prof.size,
              prof.size, prof.frames, prof.seen, a.out.c_str());
  return 0;
}

int train_cmd(const TrainArgs& a) {
  if (a.stage != 1 && a.stage != 2) throw ConfigError("--stage must be 1 or 2");
  const auto ds = data::read_dataset(a.data);
  auto print_epoch = [&](const train::EpochLog& e) {
    std::printf("stage %d epoch %3zu  loss %.6e  primary %.6e  smooth %.6e", a.stage, e.epoch + 1, e.train_loss,
                e.train_primary, e.train_smooth);
    if (e.val_loss) std::printf("  val %.6e", *e.val_loss);
    std::printf("\n");
    std::fflush(stdout);
  };

  std::unique_ptr<train::Trainer> trainer;
  if (!a.resume.empty()) {
    trainer = std::make_unique<train::Trainer>(train::load_checkpoint(a.resume));
    if (trainer->stage() != a.stage)
      throw ConfigError("--resume checkpoint is stage " + std::to_string(trainer->stage()) + ", not " +
                        std::to_string(a.stage));
  } else {
    json cj = json::object();
    if (!a.config.empty()) {
      try {
        cj = json::parse(io::read_text(a.config));
      } catch (const json::parse_error& err) {
        throw ConfigError("cannot parse " + a.config + ": " + err.what());
      }
    }
    if (!cj.contains("profile") && ds.distribution.contains("profile")) cj["profile"] = ds.distribution["profile"];
    if (a.seed) cj["seed"] = *a.seed;
    cj["data"] = a.data;
    const auto cfg = train::TrainConfig::from_json(cj);
    if (a.stage == 1) {
      const auto& f = ds.samples.front().frames;
      trainer = std::make_unique<train::Trainer>(cfg, f.dim(2), f.dim(3));
    } else {
      if (a.mme.empty()) throw ConfigError("--stage 2 requires --mme <stage-1 checkpoint>");
      trainer = std::make_unique<train::Trainer>(cfg, train::load_checkpoint(a.mme));
    }
  }
  const auto& cfg = trainer->config();
  const std::size_t total = a.epochs ? *a.epochs : (a.stage == 1 ? cfg.epochs_stage1 : cfg.epochs_stage2);
  trainer->train(ds, total, fs::path(a.out), print_epoch);
  train::save_checkpoint(trainer->checkpoint(), a.out);
  std::printf("checkpoint: %s (stage %d, %zu epochs)\n", a.out.c_str(), trainer->stage(), trainer->epoch());
  return 0;
}

int predict_cmd(const PredictArgs& a) {
  const auto model = eval::load_model(train::load_checkpoint(a.ckpt), a.ckpt);
  const auto ds = data::read_dataset(a.data);
  if (a.sample >= ds.samples.size())
    throw ConfigError("--sample " + std::to_string(a.sample) + " out of range (dataset has " +
                      std::to_string(ds.samples.size()) + ")");
  const auto& seq = ds.samples[a.sample];
  const std::size_t K = seq.spec.seen, horizon = a.horizon ? a.horizon : seq.length() - K;
  const auto batch = data::make_batch(seq);
  ad::Tape quiet(false);
  const auto motion = model::mme_rollout(quiet, *model.system->mme, batch, horizon, model.mode, ad::NormMode::Inference);
  std::vector<ad::Tensor> frames = motion.warped;
  if (model.variant)
    frames = model::car_rollout(quiet, *model.system->car, batch, motion.flows, *model.variant, ad::NormMode::Inference);

  const fs::path out(a.out);
  fs::create_directories(out);
  char name[64];
  for (std::size_t j = 0; j < horizon; ++j) {
    const std::size_t t = K + j + 1;  // 1-based frame number
    std::snprintf(name, sizeof name, "pred_%03zu.png", t);
    eval::write_frame_png(out / name, frames[j]);
    std::snprintf(name, sizeof name, "warp_%03zu.png", t);
    eval::write_frame_png(out / name, motion.warped[j]);
    std::snprintf(name, sizeof name, "flow_%03zu.png", t);
    eval::write_png(out / name, eval::flow_to_color(motion.flows[j]));
    std::snprintf(name, sizeof name, "gt_%03zu.png", t);
    eval::write_frame_png(out / name, seq.frames.slice0(K + j));
  }
  ad::Tape q2(false);
  const auto pf = ad::concat(q2, frames, 0), pw = ad::concat(q2, motion.warped, 0), pl = ad::concat(q2, motion.flows, 0);
  io::write_raw<float>(out / "frames.bin", pf.data());
  io::write_raw<float>(out / "warped.bin", pw.data());
  io::write_raw<float>(out / "flows.bin", pl.data());
  const json manifest = {{"format", "avpred-prediction"},
                         {"checkpoint", a.ckpt},
                         {"sample", a.sample},
                         {"first_frame", K + 1},
                         {"horizon", horizon},
                         {"dtype", "float32"},
                         {"byte_order", "little"},
                         {"files",
                          {{"frames", {{"file", "frames.bin"}, {"shape", pf.shape()}}},
                           {"warped", {{"file", "warped.bin"}, {"shape", pw.shape()}}},
                           {"flows", {{"file", "flows.bin"}, {"shape", pl.shape()}}}}}};
  io::write_text(out / "manifest.json", manifest.dump(1) + "\n");
  std::printf("wrote %zu predicted frames (%zu..%zu) to %s\n", horizon, K + 1, K + horizon, a.out.c_str());
  return 0;
}

int eval_cmd(const EvalArgs& a) {
  const auto model = eval::load_model(train::load_checkpoint(a.ckpt), a.ckpt);
  const auto ds = data::read_dataset(a.data);
  const auto report = eval::evaluate(model, ds, {a.horizon, a.chunk});
  std::printf("%s", report.table().c_str());
  if (!a.json.empty()) io::write_text(a.json, report.to_json().dump(2) + "\n");
  return 0;
}

int gradcheck_cmd(const GradArgs& a) {
  const auto prof = data::profile_by_name(a.profile);
  bool ok = true;
  eval::run_gradient_suite(prof.size, [&](const eval::GradResult& r) {
    ok &= r.passed();
    std::printf("%-4s %-18s %-9s max rel err %.3e (tol %.0e)  %zu coords, %zu skipped  %.2fs\n",
                r.passed() ? "ok" : "FAIL", r.name.c_str(), r.composite ? "composite" : "primitive",
                r.report.max_rel_error, r.tolerance, r.report.coords_checked, r.report.coords_skipped, r.seconds);
    if (!r.passed()) std::printf("     worst %s\n", r.report.worst.c_str());
    std::fflush(stdout);
  });
  std::printf("%s\n", ok ? "all gradient checks passed" : "gradient checks FAILED");
  return ok ? 0 : kRuntime;
}

int viz_cmd(const VizArgs& a) {
  const auto ds = data::read_dataset(a.data);
  if (a.sample >= ds.samples.size()) throw ConfigError("--sample out of range");
  const auto& seq = ds.samples[a.sample];
  if (a.frame >= seq.length()) throw ConfigError("--frame out of range");
  eval::write_png(a.out, eval::flow_to_color(seq.flows.slice0(a.frame), a.fmax));
  std::printf("wrote %s\n", a.out.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Audio-visual video prediction: synthetic data, training and evaluation"};
  app.require_subcommand(1);

  GenArgs gen;
  auto* g = app.add_subcommand("gen-data", "Generate a synthetic bouncing-digit dataset");
  g->add_option("--out", gen.out, "Output directory")->required();
  g->add_option("--count", gen.count, "Number of sequences");
  g->add_option("--seed", gen.seed, "Base seed; sample i uses seed+i")->envname("AVPRED_SEED");
  g->add_option("--profile", gen.profile, "Size profile")->check(CLI::IsMember({"default", "small"}));
  g->add_option("--sprites", gen.sprites, "Digits per scene")->check(CLI::IsMember({1, 2}));
  g->add_option("--split", gen.split, "Split name recorded in the manifest");

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Train MME (stage 1) or CAR (stage 2)");
  t->add_option("--stage", tr.stage, "Training stage")->required()->check(CLI::IsMember({1, 2}));
  t->add_option("--data", tr.data, "Dataset directory")->required();
  t->add_option("--config", tr.config, "JSON training config");
  t->add_option("--out", tr.out, "Checkpoint directory (rewritten every epoch)")->required();
  t->add_option("--resume", tr.resume, "Resume from this checkpoint");
  t->add_option("--mme", tr.mme, "Stage-1 checkpoint (stage 2 only)");
  t->add_option("--seed", tr.seed, "Override the config seed")->envname("AVPRED_SEED");
  t->add_option("--epochs", tr.epochs, "Override the epoch budget for this stage");

  PredictArgs pr;
  auto* p = app.add_subcommand("predict", "Roll out one sample and write PNGs and raw arrays");
  p->add_option("--ckpt", pr.ckpt, "Checkpoint directory")->required();
  p->add_option("--data", pr.data, "Dataset directory")->required();
  p->add_option("--out", pr.out, "Output directory")->required();
  p->add_option("--sample", pr.sample, "Sample index");
  p->add_option("--horizon", pr.horizon, "Predicted frames (default: all after K)");

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
  e->add_option("--ckpt", ev.ckpt, "Checkpoint directory")->required();
  e->add_option("--data", ev.data, "Dataset directory")->required();
  e->add_option("--json", ev.json, "Write the report as JSON to this file");
  e->add_option("--horizon", ev.horizon, "Predicted frames (default: all after K)");
  e->add_option("--chunk", ev.chunk, "Samples per inference batch");

  GradArgs gr;
  auto* gc = app.add_subcommand("gradcheck", "Run the finite-difference gradient suite");
  gc->add_option("--profile", gr.profile, "Frame size for end-to-end cases")->check(CLI::IsMember({"default", "small"}));

  VizArgs vz;
  auto* v = app.add_subcommand("viz-flow", "Colour-code a ground-truth flow field");
  v->add_option("--data", vz.data, "Dataset directory")->required();
  v->add_option("--out", vz.out, "Output PNG")->required();
  v->add_option("--sample", vz.sample, "Sample index");
  v->add_option("--frame", vz.frame, "Frame index (0-based)");
  v->add_option("--fmax", vz.fmax, "Magnitude at full saturation (default: 99th percentile)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? 0 : kUsage;
  }

  try {
    if (*g) return gen_data(gen);
    if (*t) return train_cmd(tr);
    if (*p) return predict_cmd(pr);
    if (*e) return eval_cmd(ev);
    if (*gc) return gradcheck_cmd(gr);
    if (*v) return viz_cmd(vz);
  } catch (const ConfigError& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kUsage;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kRuntime;
  }
  return kUsage;
}
