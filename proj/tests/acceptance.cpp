// Acceptance run: one PASS/FAIL line per criterion. Criteria 6-8 train real
// models and dominate the runtime; `--only` selects a subset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "avpred/eval/evaluate.hpp"
#include "avpred/eval/gradsuite.hpp"

using namespace avpred;
using ad::Tape;
using ad::Tensor;
using model::MotionMode;
using model::RefineVariant;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Tensor random_tensor(ad::Shape s, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  Rng rng(seed);
  return uniform_tensor(std::move(s), lo, hi, rng);
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return INFINITY;
  double m = 0;
  for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

bool bitwise_equal(const Tensor& a, const Tensor& b) { return a.shape() == b.shape() && a.vec() == b.vec(); }

// ---------------------------------------------------------------------------

Outcome gradient_suite() {
  const auto t0 = std::chrono::steady_clock::now();
  const std::size_t size = data::profile_by_name("small").size;
  std::size_t failed = 0, composites = 0;
  double worst_prim = 0, worst_comp = 0;
  std::string names;
  for (const auto& r : eval::run_gradient_suite(size)) {
    if (r.composite) {
      ++composites;
      worst_comp = std::max(worst_comp, r.report.max_rel_error);
    } else {
      worst_prim = std::max(worst_prim, r.report.max_rel_error);
    }
    if (!r.passed()) {
      ++failed;
      names += " " + r.name;
    }
  }
  const double secs = seconds_since(t0);
  return {failed == 0 && secs < 300,
          fmt("%zu failures%s; worst primitive %.1e (tol 1e-6), worst composite %.1e over %zu composites (tol 1e-3); "
              "%.1f s",
              failed, names.c_str(), worst_prim, worst_comp, composites, secs)};
}

Outcome warp_properties() {
  Tape tape(false);
  // Zero flow.
  bool identity = true;
  for (std::uint64_t s = 0; s < 10; ++s) {
    const auto f = random_tensor({2, 3, 12, 16}, s, 0, 1);
    identity &= bitwise_equal(model::warp(tape, f, Tensor::zeros({2, 2, 12, 16})), f);
  }
  // Integer translation against a plain array shift.
  bool shift = true;
  const std::size_t H = 12, W = 16;
  const auto frame = random_tensor({1, 1, H, W}, 99, 0, 1);
  for (int dy = -3; dy <= 3; ++dy)
    for (int dx = -3; dx <= 3; ++dx) {
      std::vector<double> fl(2 * H * W);
      std::fill(fl.begin(), fl.begin() + long(H * W), double(dx));
      std::fill(fl.begin() + long(H * W), fl.end(), double(dy));
      const auto out = model::warp(tape, frame, Tensor({1, 2, H, W}, fl));
      for (int y = 0; y < int(H); ++y)
        for (int x = 0; x < int(W); ++x) {
          const int sy = y + dy, sx = x + dx;
          if (sy < 0 || sx < 0 || sy >= int(H) || sx >= int(W)) continue;
          shift &= out[std::size_t(y) * W + std::size_t(x)] == frame[std::size_t(sy) * W + std::size_t(sx)];
        }
    }
  // Generated sequences: warping t-1 by the exact flow reproduces t on
  // pixels covered by exactly one sprite whose source is not shared.
  double err_sum = 0, err_max = 0;
  std::size_t count = 0;
  for (std::uint64_t n = 0; n < 100; ++n) {
    const std::size_t sprites = 1 + n % 2;
    const auto spec = data::random_scene(data::profile_by_name("small"), sprites, 7000 + n);
    const auto seq = data::generate_sequence(spec);
    const auto tr = data::simulate_trajectory(spec);
    const std::size_t h = spec.height, w = spec.width, hw = h * w;
    for (std::size_t t = 1; t < spec.frames; ++t) {
      const auto prev = ad::slice(tape, seq.frames, 0, t - 1, 1);
      const auto warped = model::warp(tape, prev, ad::slice(tape, seq.flows, 0, t, 1));
      std::vector<std::vector<double>> cur(sprites), old(sprites);
      for (std::size_t s = 0; s < sprites; ++s) {
        cur[s] = data::sprite_layer(spec, spec.sprites[s], tr.position[t][s]);
        old[s] = data::sprite_layer(spec, spec.sprites[s], tr.position[t - 1][s]);
      }
      for (std::size_t i = 0; i < hw; ++i) {
        std::size_t owner = sprites, k = 0;
        for (std::size_t s = 0; s < sprites; ++s)
          if (cur[s][i] > 0) owner = s, ++k;
        if (k != 1) continue;
        const long sx = long(i % w) + std::lround(seq.flows[t * 2 * hw + i]);
        const long sy = long(i / w) + std::lround(seq.flows[t * 2 * hw + hw + i]);
        if (sx < 0 || sy < 0 || sx >= long(w) || sy >= long(h)) continue;
        const std::size_t j = std::size_t(sy) * w + std::size_t(sx);
        bool shared = false;
        for (std::size_t s = 0; s < sprites; ++s)
          if (s != owner && old[s][j] > 0) shared = true;
        if (shared) continue;
        const double e = std::abs(warped[i] - seq.frames[t * hw + i]);
        err_sum += e;
        err_max = std::max(err_max, e);
        ++count;
      }
    }
  }
  const double mean = count ? err_sum / double(count) : INFINITY;
  return {identity && shift && count > 0 && mean < 1e-5,
          fmt("zero-flow identity %s; 49 integer shifts %s; consistency over 100 sequences: mean %.2e, max %.2e on %zu "
              "interior pixels",
              identity ? "bitwise" : "BROKEN", shift ? "exact" : "MISMATCH", mean, err_max, count)};
}

// Direct softmax attention row in long double.
std::vector<double> attention_row(const std::vector<double>& q, const std::vector<std::vector<double>>& keys,
                                  const std::vector<std::vector<double>>& vals) {
  std::vector<long double> s(keys.size());
  long double mx = -1e300L, z = 0;
  for (std::size_t j = 0; j < keys.size(); ++j) {
    s[j] = 0;
    for (std::size_t k = 0; k < q.size(); ++k) s[j] += (long double)q[k] * keys[j][k];
    mx = std::max(mx, s[j]);
  }
  for (auto& v : s) z += (v = std::exp(v - mx));
  std::vector<double> out(vals[0].size());
  for (std::size_t c = 0; c < out.size(); ++c) {
    long double acc = 0;
    for (std::size_t j = 0; j < keys.size(); ++j) acc += s[j] / z * vals[j][c];
    out[c] = double(acc);
  }
  return out;
}

// y = W x + b with W stored [out, in] (a 1x1 conv kernel has the same layout).
std::vector<double> affine(const Tensor& weight, const Tensor& bias, const std::vector<double>& x) {
  std::vector<double> y(bias.numel());
  for (std::size_t o = 0; o < y.size(); ++o) {
    long double acc = bias[o];
    for (std::size_t i = 0; i < x.size(); ++i) acc += (long double)weight[o * x.size() + i] * x[i];
    y[o] = double(acc);
  }
  return y;
}

Outcome attention_algebra() {
  Tape tape(false);
  double single = 0, invariance = 0, oracle = 0;
  std::size_t cases = 0;
  Rng pick(4242);
  auto draw = [&](std::size_t lo, std::size_t hi) { return std::uniform_int_distribution<std::size_t>(lo, hi)(pick); };
  for (std::uint64_t s = 0; s < 20; ++s) {
    const std::size_t c = draw(1, 8);
    model::ParamStore ps;
    Rng rng(100 + s);
    model::Condense cond(ps, "c", c, rng);
    model::Recall rec(ps, "r", c, rng);
    // One-entry memory: residual plus value projection.
    const auto e = random_tensor({2, c}, 200 + s);
    single = std::max(single, max_abs_diff(cond(tape, ad::reshape(tape, e, {2, 1, c})),
                                           ad::add(tape, e, cond.v(tape, e))));
    // One key: recall output cannot depend on the query projection.
    const auto xv = random_tensor({2, c, 2, 3}, 300 + s);
    const auto key = random_tensor({2, 1, c}, 400 + s);
    const auto before = rec(tape, xv, key);
    Rng noise(500 + s);
    for (auto& w : rec.q.weight.data_mut()) w += std::uniform_real_distribution<double>(-3, 3)(noise);
    for (auto& b : rec.q.bias.data_mut()) b += std::uniform_real_distribution<double>(-3, 3)(noise);
    invariance = std::max(invariance, max_abs_diff(rec(tape, xv, key), before));
  }
  // Brute-force oracles over random sizes l = h*w <= 8, c <= 8, memory <= 8.
  for (std::uint64_t s = 0; s < 200; ++s) {
    const std::size_t c = draw(1, 8), m = draw(1, 8), h = draw(1, 8);
    const std::size_t w = draw(1, 8 / h);
    model::ParamStore ps;
    Rng rng(1000 + s);
    model::Condense cond(ps, "c", c, rng);
    model::Recall rec(ps, "r", c, rng);
    const auto mem = random_tensor({1, m, c}, 2000 + s);
    const auto xv = random_tensor({1, c, h, w}, 3000 + s);
    std::vector<std::vector<double>> rows(m, std::vector<double>(c));
    for (std::size_t j = 0; j < m; ++j)
      for (std::size_t k = 0; k < c; ++k) rows[j][k] = mem[j * c + k];

    std::vector<std::vector<double>> ck(m), cv(m), rk(m), rv(m);
    for (std::size_t j = 0; j < m; ++j) {
      ck[j] = affine(cond.k.weight, cond.k.bias, rows[j]);
      cv[j] = affine(cond.v.weight, cond.v.bias, rows[j]);
      rk[j] = affine(rec.k.weight, rec.k.bias, rows[j]);
      rv[j] = affine(rec.v.weight, rec.v.bias, rows[j]);
    }
    const auto cout = cond(tape, mem);
    const auto mix = attention_row(affine(cond.q.weight, cond.q.bias, rows[m - 1]), ck, cv);
    for (std::size_t k = 0; k < c; ++k) oracle = std::max(oracle, std::abs(cout[k] - (rows[m - 1][k] + mix[k])));

    const auto rout = rec(tape, xv, mem);
    for (std::size_t p = 0; p < h * w; ++p) {
      std::vector<double> x(c);
      for (std::size_t k = 0; k < c; ++k) x[k] = xv[k * h * w + p];
      const auto a = attention_row(affine(rec.q.weight, rec.q.bias, x), rk, rv);
      for (std::size_t k = 0; k < c; ++k) oracle = std::max(oracle, std::abs(rout[k * h * w + p] - (x[k] + a[k])));
    }
    ++cases;
  }
  return {single <= 1e-12 && invariance <= 1e-12 && oracle <= 1e-12,
          fmt("single-entry condense %.1e; recall query invariance %.1e; dense oracle over %zu random cases %.1e "
              "(all tol 1e-12)",
              single, invariance, cases, oracle)};
}

data::Batch random_batch(const model::ModelConfig& cfg, std::size_t B, std::size_t T, std::size_t K,
                         std::uint64_t seed) {
  data::Batch b;
  b.frames = random_tensor({B, T, cfg.channels, cfg.height, cfg.width}, seed, 0.0, 1.0);
  b.audio = random_tensor({B, T, cfg.freq_bins, cfg.clip_bins}, seed + 1, 0.0, 1.0);
  b.flows = random_tensor({B, T, 2, cfg.height, cfg.width}, seed + 2, -1.3, 1.3);
  b.seen = K;
  return b;
}

Outcome film_identity() {
  Tape tape(false);
  bool identity = true;
  for (std::uint64_t s = 0; s < 10; ++s) {
    const auto z = random_tensor({2, 5, 4, 6}, s);
    identity &= bitwise_equal(model::film_apply(tape, z, Tensor::ones({2, 5}), Tensor::zeros({2, 5})), z);
  }
  const std::size_t size = data::profile_by_name("small").size;
  const auto cfg = model::ModelConfig::preset("paper", size, size);
  model::ParamStore ps;
  Rng rng(31);
  model::ContextRefiner car(cfg, ps, rng);
  const auto batch = random_batch(cfg, 2, 5, 2, 32);
  std::vector<Tensor> flows;
  for (std::uint64_t j = 0; j < 3; ++j) flows.push_back(random_tensor({2, 2, size, size}, 40 + j, -2, 2));
  const auto full = model::car_rollout(tape, car, batch, flows, RefineVariant::Full, ad::NormMode::Inference);
  const auto noaff = model::car_rollout(tape, car, batch, flows, RefineVariant::NoAffine, ad::NormMode::Inference);
  double diff = 0;
  for (std::size_t j = 0; j < full.size(); ++j) diff = std::max(diff, max_abs_diff(full[j], noaff[j]));
  return {identity && diff <= 1e-12,
          fmt("gamma=1, beta=0 %s; paper-width CAR vs no-affine ablation at init: max diff %.1e over %zu frames",
              identity ? "bitwise identity" : "NOT identity", diff, full.size())};
}

Outcome loss_identities() {
  train::TrainConfig cfg;
  cfg.model = "tiny";
  cfg.batch_size = 2;
  cfg.lr_mme = 1e-3;
  cfg.seed = 5;
  const auto ds = data::generate_dataset({"small", 16, 8, 3}, 6, 2, 50);
  train::Trainer tr(cfg, 16, 16);
  tr.train(ds, 3);
  std::size_t exact = 0;
  for (const auto& s : tr.history().steps) exact += s.loss == s.primary + 0.01 * s.smooth;
  const std::size_t steps = tr.history().steps.size();

  double worst = 0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    Rng rng(60 + s);
    const double u = std::uniform_real_distribution<double>(-5, 5)(rng);
    const double v = std::uniform_real_distribution<double>(-5, 5)(rng);
    std::vector<double> fl(2 * 9 * 7);
    std::fill(fl.begin(), fl.begin() + 63, u);
    std::fill(fl.begin() + 63, fl.end(), v);
    Tape tape(false);
    const auto l = train::loss_smooth(tape, {Tensor({1, 2, 9, 7}, fl)}, {random_tensor({1, 1, 9, 7}, 80 + s, 0, 1)});
    worst = std::max(worst, std::abs(l.item()));
  }
  return {cfg.lambda_smooth == 0.01 && steps > 0 && exact == steps && worst == 0.0,
          fmt("L_MME = L_flow + 0.01 L_smooth exactly on %zu/%zu logged steps; L_smooth of 20 constant flows: max %.1e",
              exact, steps, worst)};
}

Outcome overfit() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto prof = data::profile_by_name("small");
  const auto ds = data::generate_dataset(prof, 1, 2, 7);
  train::TrainConfig cfg;
  cfg.model = "paper";
  cfg.batch_size = 1;
  cfg.seed = 0;
  train::Trainer s1(cfg, prof.size, prof.size);
  s1.train(ds, 200);
  const auto& e1 = s1.history().epochs;
  double best1 = INFINITY;
  for (const auto& e : e1) best1 = std::min(best1, e.train_primary);
  const double r1 = best1 / e1.front().train_primary;

  train::Trainer s2(cfg, s1.checkpoint());
  s2.train(ds, 200);
  const auto& e2 = s2.history().epochs;
  double best2 = INFINITY;
  for (const auto& e : e2) best2 = std::min(best2, e.train_primary);
  const double r2 = best2 / e2.front().train_primary;
  const double secs = seconds_since(t0);
  return {r1 < 0.1 && r2 < 0.1 && secs < 1800,
          fmt("one 32x32 sequence, paper width, 200 epochs each: L_flow %.4f -> %.4f (%.1f%%), L_v %.4f -> %.4f "
              "(%.1f%%); %.0f s on one core",
              e1.front().train_primary, best1, 100 * r1, e2.front().train_primary, best2, 100 * r2, secs)};
}

// Shared by the ablation criteria.
struct AblationData {
  data::Dataset train, test;
  std::map<std::string, std::vector<double>> aepe;  // per motion mode, one per seed
  std::optional<train::Checkpoint> mme;              // median-seed MME checkpoint
};

// Desk-scale budget. At the paper's 1e-4 the desk MME stays near the
// zero-flow predictor for this many epochs, so the ablation uses 1e-3.
constexpr std::size_t kAblationEpochs1 = 60;
constexpr std::size_t kAblationEpochs2 = 60;
constexpr double kAblationLr = 1e-3;
const std::uint64_t kSeeds[] = {1, 2, 3};

AblationData& ablation_data() {
  static AblationData d = [] {
    AblationData a;
    const auto prof = data::profile_by_name("small");
    // One digit per scene: every tone shift then marks that digit's bounce.
    a.train = data::generate_dataset(prof, 256, 1, 100000);
    a.test = data::generate_dataset(prof, 64, 1, 900000, "test");
    return a;
  }();
  return d;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[v.size() / 2];
}

train::TrainConfig desk_config(const std::string& mode, std::uint64_t seed) {
  train::TrainConfig cfg;
  cfg.model = "desk";
  cfg.motion_mode = mode;
  cfg.lr_mme = kAblationLr;
  cfg.seed = seed;
  return cfg;
}

Outcome motion_ablation() {
  const auto t0 = std::chrono::steady_clock::now();
  auto& d = ablation_data();
  const std::size_t size = d.train.samples.front().spec.width;
  std::vector<std::pair<double, train::Checkpoint>> mme_runs;
  for (const std::string mode : {"mme", "v+recall", "v"}) {
    for (auto seed : kSeeds) {
      train::Trainer tr(desk_config(mode, seed), size, size);
      tr.train(d.train, kAblationEpochs1);
      const auto r = eval::evaluate(tr.system(), model::motion_mode_from_string(mode), std::nullopt, d.test);
      const double a = eval::EvalReport::mean(r.aepe);
      d.aepe[mode].push_back(a);
      std::printf("  [7] %-8s seed %llu  AEPE %.5f  (%.0f s)\n", mode.c_str(), (unsigned long long)seed, a,
                  seconds_since(t0));
      std::fflush(stdout);
      if (mode == "mme") mme_runs.emplace_back(a, tr.checkpoint());
    }
  }
  std::sort(mme_runs.begin(), mme_runs.end(), [](const auto& x, const auto& y) { return x.first < y.first; });
  d.mme = mme_runs[mme_runs.size() / 2].second;
  const double m = median(d.aepe["mme"]), r = median(d.aepe["v+recall"]), v = median(d.aepe["v"]);
  const bool order = m <= r && r <= v, margin = m < 0.95 * v;
  return {order && margin,
          fmt("median test AEPE over 3 seeds: MME %.5f, V+Recall %.5f, V %.5f; MME vs V %.1f%% lower (need >= 5%%); "
              "%.0f s",
              m, r, v, 100 * (1 - m / v), seconds_since(t0))};
}

Outcome refinement_ablation() {
  const auto t0 = std::chrono::steady_clock::now();
  auto& d = ablation_data();
  if (!d.mme) {
    const std::size_t size = d.train.samples.front().spec.width;
    train::Trainer tr(desk_config("mme", kSeeds[1]), size, size);
    tr.train(d.train, kAblationEpochs1);
    d.mme = tr.checkpoint();
  }
  std::map<std::string, double> tail;
  double warp = 0;
  for (const std::string variant : {"car", "unet"}) {
    auto cfg = desk_config("mme", kSeeds[1]);
    cfg.refine_variant = variant;
    train::Trainer tr(cfg, *d.mme);
    tr.train(d.train, kAblationEpochs2);
    const auto r = eval::evaluate(tr.system(), MotionMode::Full, model::refine_variant_from_string(variant), d.test);
    tail[variant] = eval::EvalReport::tail_mean(r.ssim, 5);
    warp = eval::EvalReport::tail_mean(r.warp_ssim, 5);
    std::printf("  [8] %-5s SSIM(last 5) %.4f  raw warp %.4f  (%.0f s)\n", variant.c_str(), tail[variant], warp,
                seconds_since(t0));
    std::fflush(stdout);
  }
  const double car = tail["car"], unet = tail["unet"];
  return {car >= unet && unet >= warp && car - warp >= 0.02,
          fmt("mean SSIM over the last 5 predicted frames: CAR %.4f, U-Net only %.4f, raw warp %.4f; CAR - warp = "
              "%+.4f (need >= 0.02); %.0f s",
              car, unet, warp, car - warp, seconds_since(t0))};
}

// Scalar-loop references written from the textbook definitions.
double loop_ssim(const Tensor& a, const Tensor& b) {
  const std::size_t H = a.dim(a.rank() - 2), W = a.dim(a.rank() - 1), C = a.numel() / (H * W);
  double w[11][11], z = 0;
  for (int i = 0; i < 11; ++i)
    for (int j = 0; j < 11; ++j) z += w[i][j] = std::exp(-((i - 5) * (i - 5) + (j - 5) * (j - 5)) / 4.5);
  double total = 0;
  std::size_t n = 0;
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t y = 0; y + 11 <= H; ++y)
      for (std::size_t x = 0; x + 11 <= W; ++x) {
        double mx = 0, my = 0, vx = 0, vy = 0, cv = 0;
        auto px = [&](const Tensor& t, int i, int j) { return t[c * H * W + (y + i) * W + x + j]; };
        for (int i = 0; i < 11; ++i)
          for (int j = 0; j < 11; ++j) mx += w[i][j] / z * px(a, i, j), my += w[i][j] / z * px(b, i, j);
        for (int i = 0; i < 11; ++i)
          for (int j = 0; j < 11; ++j) {
            const double da = px(a, i, j) - mx, db = px(b, i, j) - my;
            vx += w[i][j] / z * da * da;
            vy += w[i][j] / z * db * db;
            cv += w[i][j] / z * da * db;
          }
        total += (2 * mx * my + 1e-4) * (2 * cv + 9e-4) / ((mx * mx + my * my + 1e-4) * (vx + vy + 9e-4));
        ++n;
      }
  return total / double(n);
}

Outcome metric_oracles() {
  double ds = 0, dp = 0, da = 0;
  for (std::uint64_t s = 0; s < 5; ++s) {
    const auto a = random_tensor({1, 16, 16}, 10 + s, 0, 1);
    auto b = random_tensor({1, 16, 16}, 20 + s, 0, 1);
    for (std::size_t i = 0; i < b.numel(); ++i) b.data_mut()[i] = 0.7 * a[i] + 0.3 * b[i];
    ds = std::max(ds, std::abs(eval::ssim(a, b) - loop_ssim(a, b)));
    double m = 0;
    for (std::size_t i = 0; i < a.numel(); ++i) m += (a[i] - b[i]) * (a[i] - b[i]);
    dp = std::max(dp, std::abs(eval::psnr(a, b) - 10 * std::log10(256.0 / m)));
    const auto f = random_tensor({2, 16, 16}, 30 + s, -3, 3), g = random_tensor({2, 16, 16}, 40 + s, -3, 3);
    double e = 0;
    for (std::size_t p = 0; p < 256; ++p) e += std::hypot(f[p] - g[p], f[256 + p] - g[256 + p]);
    da = std::max(da, std::abs(eval::aepe(f, g) - e / 256));
  }
  auto one = Tensor::zeros({1, 10, 10});
  one.data_mut()[42] = 1.0;
  const double p20 = eval::psnr(one, Tensor::zeros({1, 10, 10}));
  return {ds <= 1e-10 && dp <= 1e-10 && da <= 1e-10 && p20 == 20.0,
          fmt("16x16 pairs vs scalar loops: SSIM %.1e, PSNR %.1e, AEPE %.1e (tol 1e-10); PSNR at MSE 0.01 = %.17g dB",
              ds, dp, da, p20)};
}

Outcome determinism() {
  train::TrainConfig cfg;
  cfg.model = "tiny";
  cfg.batch_size = 2;
  cfg.lr_mme = 1e-3;
  cfg.seed = 17;
  const auto ds = data::generate_dataset({"small", 16, 8, 3}, 2, 2, 70);
  const auto test = data::generate_dataset({"small", 16, 8, 3}, 3, 2, 900, "test");

  train::Trainer a(cfg, 16, 16), b(cfg, 16, 16);
  a.train(ds, 3);
  b.train(ds, 3);
  const bool hist = a.history() == b.history();
  const auto ra = eval::evaluate(a.system(), MotionMode::Full, std::nullopt, test);
  const auto rb = eval::evaluate(b.system(), MotionMode::Full, std::nullopt, test);
  const bool report = ra.to_json().dump() == rb.to_json().dump();

  // Two samples at batch 2: each epoch is one optimizer step.
  const auto dir = std::filesystem::temp_directory_path() / "avpred_acceptance_resume";
  std::filesystem::remove_all(dir);
  {
    train::Trainer first(cfg, 16, 16);
    first.train(ds, 2, dir);
  }
  train::Trainer resumed(train::load_checkpoint(dir));
  resumed.train(ds, 3);
  bool params = resumed.history() == a.history();
  const auto pa = a.system().store.params(), pr = resumed.system().store.params();
  for (std::size_t i = 0; i < pa.size(); ++i) params &= bitwise_equal(pa[i].second, pr[i].second);
  const auto ba = a.system().store.buffers(), br = resumed.system().store.buffers();
  for (std::size_t i = 0; i < ba.size(); ++i) params &= bitwise_equal(ba[i].second, br[i].second);
  std::filesystem::remove_all(dir);
  return {hist && report && params,
          fmt("same-seed loss histories %s; EvalReports %s; save/load/one-step vs uninterrupted: %s",
              hist ? "bit-identical" : "DIFFER", report ? "identical" : "DIFFER",
              params ? "bit-identical params, buffers and history" : "DIFFER")};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::vector<int> only;
  app.add_option("--only", only, "Criteria to run (default all)")->check(CLI::Range(1, 10))->delimiter(',');
  CLI11_PARSE(app, argc, argv);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"gradient suite", gradient_suite},
      {"warp identity and translation", warp_properties},
      {"attention algebra", attention_algebra},
      {"FiLM identity", film_identity},
      {"loss identities", loss_identities},
      {"overfit oracle", overfit},
      {"motion ablation direction", motion_ablation},
      {"refinement ablation direction", refinement_ablation},
      {"metric oracles", metric_oracles},
      {"determinism and persistence", determinism},
  };
  const std::set<int> wanted(only.begin(), only.end());
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = int(i) + 1;
    if (!wanted.empty() && !wanted.count(id)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%s %2d %s: %s\n", o.pass ? "PASS" : "FAIL", id, criteria[i].first.c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
