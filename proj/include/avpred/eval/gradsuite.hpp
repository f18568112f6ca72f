#pragma once

#include <chrono>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "avpred/core/gradcheck.hpp"
#include "avpred/model/car.hpp"
#include "avpred/train/losses.hpp"

namespace avpred::eval {

using ad::Tape;
using ad::Tensor;

inline constexpr double kPrimitiveTol = 1e-6;
inline constexpr double kCompositeTol = 1e-3;
// BN and softmax make some composite gradients exactly zero; the floor keeps
// those coordinates from comparing float noise against noise.
inline constexpr double kCompositeFloor = 1e-5;

struct GradCase {
  std::string name;
  bool composite = false;
  std::function<ad::GradCheckReport()> run;
};

struct GradResult {
  std::string name;
  bool composite = false;
  double tolerance = 0.0;
  ad::GradCheckReport report;
  double seconds = 0.0;
  bool passed() const { return report.max_rel_error < tolerance; }
};

namespace gs {

inline Tensor rand(ad::Shape s, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  Rng rng(seed);
  return uniform_tensor(std::move(s), lo, hi, rng);
}

/// Values with |x| in [lo, hi] and random sign, so kinked ops stay smooth.
inline Tensor off_zero(ad::Shape s, std::uint64_t seed, double lo = 0.2, double hi = 1.0) {
  auto t = rand(std::move(s), seed, lo, hi);
  Rng rng(seed + 1);
  std::bernoulli_distribution flip(0.5);
  for (auto& v : t.data_mut())
    if (flip(rng)) v = -v;
  return t;
}

/// Fixed random projection to a scalar.
inline Tensor project(Tape& tape, const Tensor& y, std::uint64_t seed) {
  Rng rng(seed ^ 0x5851f42d4c957f2dULL);
  return ad::sum(tape, ad::mul(tape, y, uniform_tensor(y.shape(), -1.0, 1.0, rng)));
}

/// Sub-pixel coordinates kept away from cell boundaries.
inline Tensor fractional(Tensor t) {
  for (auto& v : t.data_mut()) {
    const double f = v - std::floor(v);
    if (f < 0.05 || f > 0.95) v += 0.3;
  }
  return t;
}

using Leaves = std::vector<std::pair<std::string, Tensor>>;

inline Leaves join(Leaves a, const Leaves& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

inline data::Batch random_batch(const model::ModelConfig& cfg, std::size_t B, std::size_t T, std::size_t K,
                                std::uint64_t seed) {
  data::Batch b;
  b.frames = rand({B, T, cfg.channels, cfg.height, cfg.width}, seed, 0.0, 1.0);
  b.audio = rand({B, T, cfg.freq_bins, cfg.clip_bins}, seed + 1, 0.0, 1.0);
  b.flows = fractional(rand({B, T, 2, cfg.height, cfg.width}, seed + 2, -1.3, 1.3));
  b.seen = K;
  return b;
}

inline ad::GradCheckReport unary(const std::function<Tensor(Tape&, const Tensor&)>& op, Tensor x, std::uint64_t s) {
  return ad::gradient_check_leaves([&](Tape& t) { return project(t, op(t, x), s); }, {{"x", x}});
}

}  // namespace gs

/// Every autodiff primitive plus the model composites. `size` is the frame
/// side used by the end-to-end MME and CAR cases (multiple of 16).
inline std::vector<GradCase> gradient_suite(std::size_t size = 16) {
  using namespace gs;
  using ad::NormMode;
  std::vector<GradCase> cases;
  auto prim = [&](std::string name, std::function<ad::GradCheckReport()> f) {
    cases.push_back({std::move(name), false, std::move(f)});
  };
  auto comp = [&](std::string name, std::function<ad::GradCheckReport()> f) {
    cases.push_back({std::move(name), true, std::move(f)});
  };

  // Elementwise and broadcasting.
  prim("add", [] {
    auto a = rand({2, 3, 4}, 1), b = rand({3, 1}, 2);
    return ad::gradient_check_leaves([&](Tape& t) { return project(t, ad::add(t, a, b), 3); }, {{"a", a}, {"b", b}});
  });
  prim("sub", [] {
    auto a = rand({2, 3}, 4), b = rand({2, 3}, 5);
    return ad::gradient_check_leaves([&](Tape& t) { return project(t, ad::sub(t, a, b), 6); }, {{"a", a}, {"b", b}});
  });
  prim("mul", [] {
    auto a = rand({2, 3, 2, 2}, 7), b = rand({2, 3, 1, 1}, 8);
    return ad::gradient_check_leaves([&](Tape& t) { return project(t, ad::mul(t, a, b), 9); }, {{"a", a}, {"b", b}});
  });
  prim("scale", [] { return unary([](Tape& t, const Tensor& x) { return ad::scale(t, x, -2.5); }, rand({5}, 10), 11); });
  prim("add_scalar",
       [] { return unary([](Tape& t, const Tensor& x) { return ad::add_scalar(t, x, 0.7); }, rand({5}, 12), 13); });
  prim("abs", [] { return unary([](Tape& t, const Tensor& x) { return ad::abs(t, x); }, off_zero({6}, 14), 15); });
  prim("exp", [] { return unary([](Tape& t, const Tensor& x) { return ad::exp(t, x); }, rand({6}, 16), 17); });
  prim("square", [] { return unary([](Tape& t, const Tensor& x) { return ad::square(t, x); }, rand({6}, 18), 19); });
  prim("relu", [] { return unary([](Tape& t, const Tensor& x) { return ad::relu(t, x); }, off_zero({8}, 20), 21); });
  prim("leaky_relu",
       [] { return unary([](Tape& t, const Tensor& x) { return ad::leaky_relu(t, x); }, off_zero({8}, 22), 23); });
  prim("tanh", [] { return unary([](Tape& t, const Tensor& x) { return ad::tanh(t, x); }, rand({8}, 24, -2, 2), 25); });
  prim("sigmoid",
       [] { return unary([](Tape& t, const Tensor& x) { return ad::sigmoid(t, x); }, rand({8}, 26, -3, 3), 27); });

  // Reductions and losses.
  prim("sum", [] { return unary([](Tape& t, const Tensor& x) { return ad::sum(t, x); }, rand({3, 4}, 28), 29); });
  prim("mean", [] { return unary([](Tape& t, const Tensor& x) { return ad::mean(t, x); }, rand({3, 4}, 30), 31); });
  prim("mse", [] {
    auto a = rand({2, 5}, 32), b = rand({2, 5}, 33);
    return ad::gradient_check_leaves([&](Tape& t) { return ad::mse(t, a, b); }, {{"a", a}, {"b", b}});
  });

  // Shape manipulation.
  prim("reshape", [] {
    return unary([](Tape& t, const Tensor& x) { return ad::reshape(t, x, {4, 3}); }, rand({2, 6}, 34), 35);
  });
  prim("transpose", [] {
    return unary([](Tape& t, const Tensor& x) { return ad::transpose(t, x, 0, 2); }, rand({2, 3, 4}, 36), 37);
  });
  prim("concat", [] {
    auto a = rand({2, 1, 3}, 38), b = rand({2, 2, 3}, 39);
    return ad::gradient_check_leaves([&](Tape& t) { return project(t, ad::concat(t, {a, b}, 1), 40); },
                                     {{"a", a}, {"b", b}});
  });
  prim("slice", [] {
    return unary([](Tape& t, const Tensor& x) { return ad::slice(t, x, 1, 1, 2); }, rand({2, 4, 3}, 41), 42);
  });
  prim("split", [] {
    return unary(
        [](Tape& t, const Tensor& x) {
          const auto p = ad::split(t, x, 1, 2);
          return ad::mul(t, p[0], p[1]);
        },
        rand({2, 4, 3}, 43), 44);
  });

  // Linear algebra.
  prim("matmul", [] {
    auto a = rand({3, 4}, 45), b = rand({4, 2}, 46);
    return ad::gradient_check_leaves([&](Tape& t) { return project(t, ad::matmul(t, a, b), 47); }, {{"a", a}, {"b", b}});
  });
  prim("matmul_batched", [] {
    auto a = rand({2, 3, 4}, 48), b = rand({2, 4, 5}, 49);
    return ad::gradient_check_leaves([&](Tape& t) { return project(t, ad::matmul(t, a, b), 50); }, {{"a", a}, {"b", b}});
  });
  prim("softmax", [] {
    return unary([](Tape& t, const Tensor& x) { return ad::softmax(t, x, 1); }, rand({2, 5, 3}, 51, -2, 2), 52);
  });
  prim("linear", [] {
    auto x = rand({3, 4}, 53), w = rand({5, 4}, 54), b = rand({5}, 55);
    return ad::gradient_check_leaves([&](Tape& t) { return project(t, ad::linear(t, x, w, b), 56); },
                                     {{"x", x}, {"w", w}, {"b", b}});
  });

  // Convolution family.
  prim("conv2d", [] {
    auto x = rand({2, 2, 6, 5}, 57), w = rand({3, 2, 3, 3}, 58), b = rand({3}, 59);
    return ad::gradient_check_leaves(
        [&](Tape& t) { return project(t, ad::conv2d(t, x, w, b, ad::Conv2dOptions{2, 1, 1, 2}), 60); },
        {{"x", x}, {"w", w}, {"b", b}});
  });
  prim("deconv2d", [] {
    auto x = rand({2, 3, 3, 3}, 61), w = rand({3, 2, 4, 4}, 62), b = rand({2}, 63);
    return ad::gradient_check_leaves(
        [&](Tape& t) { return project(t, ad::deconv2d(t, x, w, b, ad::Conv2dOptions::uniform(2, 1)), 64); },
        {{"x", x}, {"w", w}, {"b", b}});
  });
  prim("max_pool2d",
       [] { return unary([](Tape& t, const Tensor& x) { return ad::max_pool2d(t, x); }, rand({2, 2, 4, 6}, 65), 66); });
  prim("upsample2x",
       [] { return unary([](Tape& t, const Tensor& x) { return ad::upsample2x(t, x); }, rand({1, 2, 3, 2}, 67), 68); });
  prim("global_avg_pool", [] {
    return unary([](Tape& t, const Tensor& x) { return ad::global_avg_pool(t, x); }, rand({2, 3, 4, 4}, 69), 70);
  });
  prim("batch_norm_train", [] {
    auto x = rand({3, 2, 2, 3}, 71, -2, 2), g = rand({2}, 72, 0.5, 1.5), b = rand({2}, 73);
    auto rm = Tensor::zeros({2}), rv = Tensor::ones({2});
    return ad::gradient_check_leaves(
        [&](Tape& t) { return project(t, ad::batch_norm(t, x, g, b, rm, rv, NormMode::Training), 74); },
        {{"x", x}, {"gamma", g}, {"beta", b}});
  });
  prim("batch_norm_infer", [] {
    auto x = rand({2, 2, 2, 3}, 75, -2, 2), g = rand({2}, 76, 0.5, 1.5), b = rand({2}, 77);
    auto rm = rand({2}, 78), rv = rand({2}, 79, 0.5, 2);
    return ad::gradient_check_leaves(
        [&](Tape& t) { return project(t, ad::batch_norm(t, x, g, b, rm, rv, NormMode::Inference), 80); },
        {{"x", x}, {"gamma", g}, {"beta", b}});
  });

  // Sampling and spatial differences.
  prim("bilinear_sample", [] {
    auto src = rand({1, 2, 5, 5}, 81), coords = fractional(rand({1, 2, 4, 4}, 82, 0.3, 3.7));
    return ad::gradient_check_leaves([&](Tape& t) { return project(t, ad::bilinear_sample(t, src, coords), 83); },
                                     {{"src", src}, {"coords", coords}});
  });
  prim("warp", [] {
    auto frame = rand({2, 1, 6, 6}, 84, 0, 1), flow = fractional(rand({2, 2, 6, 6}, 85, -1.5, 1.5));
    return ad::gradient_check_leaves([&](Tape& t) { return project(t, model::warp(t, frame, flow), 86); },
                                     {{"frame", frame}, {"flow", flow}});
  });
  prim("diff_x", [] { return unary([](Tape& t, const Tensor& x) { return ad::diff_x(t, x); }, rand({1, 2, 3, 4}, 87), 88); });
  prim("diff_y", [] { return unary([](Tape& t, const Tensor& x) { return ad::diff_y(t, x); }, rand({1, 2, 3, 4}, 89), 90); });

  // Training losses.
  prim("loss_flow", [] {
    auto p0 = rand({1, 2, 4, 4}, 91), p1 = rand({1, 2, 4, 4}, 92);
    const auto g0 = rand({1, 2, 4, 4}, 93), g1 = rand({1, 2, 4, 4}, 94);
    return ad::gradient_check_leaves([&](Tape& t) { return train::loss_flow(t, {p0, p1}, {g0, g1}); },
                                     {{"p0", p0}, {"p1", p1}});
  });
  prim("loss_image", [] {
    auto p = rand({2, 1, 4, 4}, 95, 0, 1);
    const auto g = rand({2, 1, 4, 4}, 96, 0, 1);
    return ad::gradient_check_leaves([&](Tape& t) { return train::loss_image(t, {p}, {g}); }, {{"p", p}});
  });
  prim("loss_smooth", [] {
    // Ramp plus noise keeps every forward difference away from zero.
    auto f = rand({1, 2, 5, 5}, 97, -0.05, 0.05);
    for (std::size_t i = 0; i < f.numel(); ++i) f.data_mut()[i] += 0.3 * double(i % 5) + 0.2 * double(i / 5 % 5);
    const auto v = rand({1, 1, 5, 5}, 98, 0, 1);
    return ad::gradient_check_leaves([&](Tape& t) { return train::loss_smooth(t, {f}, {v}); }, {{"flow", f}});
  });

  // Model composites on the tiny preset.
  const auto tiny16 = model::ModelConfig::preset("tiny", 16, 16);
  comp("attention", [] {
    auto q = rand({2, 4, 3}, 101), k = rand({2, 5, 3}, 102), v = rand({2, 5, 3}, 103);
    return ad::gradient_check_leaves([&](Tape& t) { return project(t, model::attend(t, q, k, v), 104); },
                                     {{"q", q}, {"k", k}, {"v", v}}, 1e-5, 0, 0, kCompositeFloor, kCompositeTol);
  });
  comp("condense", [] {
    model::ParamStore ps;
    Rng rng(105);
    model::Condense cond(ps, "c", 4, rng);
    auto mem = rand({2, 3, 4}, 106);
    return ad::gradient_check_leaves([&](Tape& t) { return project(t, cond(t, mem), 107); },
                                     join(ps.params(), {{"memory", mem}}), 1e-5, 0, 0, kCompositeFloor, kCompositeTol);
  });
  comp("recall", [] {
    model::ParamStore ps;
    Rng rng(108);
    model::Recall rec(ps, "r", 4, rng);
    auto xv = rand({2, 4, 2, 2}, 109), keys = rand({2, 3, 4}, 110);
    return ad::gradient_check_leaves([&](Tape& t) { return project(t, rec(t, xv, keys), 111); },
                                     join(ps.params(), {{"xv", xv}, {"keys", keys}}), 1e-5, 0, 0, kCompositeFloor, kCompositeTol);
  });
  comp("convlstm_step", [] {
    model::ParamStore ps;
    Rng rng(112);
    model::ConvLstmCell cell(ps, "l", 3, 4, rng);
    auto x0 = rand({2, 3, 3, 3}, 113), x1 = rand({2, 3, 3, 3}, 114);
    auto f = [&](Tape& t) {
      const auto z = Tensor::zeros({2, 4, 3, 3});
      auto [h1, c1] = cell(t, x0, z, z);
      auto [h2, c2] = cell(t, x1, h1, c1);
      return ad::add(t, project(t, h2, 115), project(t, c2, 116));
    };
    return ad::gradient_check_leaves(f, join(ps.params(), {{"x0", x0}, {"x1", x1}}), 1e-5, 30, 1, kCompositeFloor, kCompositeTol);
  });
  comp("motion_encoder", [tiny16] {
    model::ParamStore ps;
    Rng rng(117);
    model::MotionEncoder enc(tiny16, ps, "m", rng);
    auto frame = rand({2, 1, 16, 16}, 118, 0, 1), flow = rand({2, 2, 16, 16}, 119);
    return ad::gradient_check_leaves([&](Tape& t) { return project(t, enc(t, frame, flow, NormMode::Training), 120); },
                                     join(ps.params(), {{"frame", frame}, {"flow", flow}}), 1e-5, 12, 2,
                                     kCompositeFloor, kCompositeTol);
  });
  comp("audio_encoder", [tiny16] {
    model::ParamStore ps;
    Rng rng(121);
    model::AudioEncoder enc(tiny16, ps, "a", rng);
    auto clips = rand({3, tiny16.freq_bins, tiny16.clip_bins}, 122, 0, 1);
    return ad::gradient_check_leaves([&](Tape& t) { return project(t, enc(t, clips, NormMode::Training), 123); },
                                     join(ps.params(), {{"clips", clips}}), 1e-5, 12, 3, kCompositeFloor, kCompositeTol);
  });
  comp("motion_decoder", [tiny16] {
    model::ParamStore ps;
    Rng rng(124);
    model::MotionDecoder dec(tiny16, ps, "d", rng);
    auto h = rand({2, tiny16.lstm_hidden, 1, 1}, 125);
    return ad::gradient_check_leaves([&](Tape& t) { return project(t, dec(t, h, NormMode::Training), 126); },
                                     join(ps.params(), {{"h", h}}), 1e-5, 12, 4, kCompositeFloor, kCompositeTol);
  });
  comp("film_mlp", [] {
    model::ParamStore ps;
    Rng rng(127);
    model::Mlp mlp(ps, "f", 6, 5, 4, 1.0, rng);
    Rng r2(128);
    for (auto& w : mlp.l2.weight.data_mut()) w = std::uniform_real_distribution<double>(-0.5, 0.5)(r2);
    auto m = rand({3, 6}, 129);
    auto z = rand({3, 4, 2, 2}, 130);
    auto f = [&](Tape& t) {
      const auto g = mlp(t, m);
      return project(t, model::film_apply(t, z, g, g), 131);
    };
    return ad::gradient_check_leaves(f, join(ps.params(), {{"m", m}, {"z", z}}), 1e-5, 0, 0, kCompositeFloor, kCompositeTol);
  });
  comp("context_encoder", [] {
    auto cfg = model::ModelConfig::preset("tiny", 16, 16);
    cfg.height = cfg.width = 8;
    model::ParamStore ps;
    Rng rng(132);
    model::ContextEncoder enc(cfg, ps, "ctx", rng);
    auto frame = rand({2, 1, 8, 8}, 133, 0, 1);
    auto f = [&](Tape& t) {
      const auto z = enc(t, frame, NormMode::Training);
      return ad::add(t, project(t, z[0], 134), project(t, z[1], 135));
    };
    return ad::gradient_check_leaves(f, join(ps.params(), {{"frame", frame}}), 1e-6, 12, 5, kCompositeFloor, kCompositeTol);
  });
  comp("unet_miniature", [] {
    auto cfg = model::ModelConfig::preset("tiny", 16, 16);
    cfg.height = cfg.width = 8;
    model::ParamStore ps;
    Rng rng(136);
    model::UNet unet(cfg, ps, "u", rng);
    auto frame = rand({2, 1, 8, 8}, 137, 0, 1);
    std::vector<Tensor> ctx{rand({2, cfg.context_channels[0], 8, 8}, 138), rand({2, cfg.context_channels[1], 4, 4}, 139)};
    auto f = [&](Tape& t) { return project(t, unet(t, frame, ctx, NormMode::Training), 140); };
    return ad::gradient_check_leaves(f, join(ps.params(), {{"frame", frame}, {"z0", ctx[0]}, {"z1", ctx[1]}}), 1e-6,
                                     8, 6, kCompositeFloor, kCompositeTol);
  });
  comp("mme_rollout", [size] {
    const auto cfg = model::ModelConfig::preset("tiny", size, size);
    model::ParamStore ps;
    Rng rng(141);
    model::MotionEstimator mme(cfg, ps, rng);
    const auto batch = random_batch(cfg, 2, 4, 2, 142);
    auto f = [&](Tape& t) {
      const auto r = model::mme_rollout(t, mme, batch, 2, model::MotionMode::Full, NormMode::Training);
      return ad::add(t, project(t, r.flows[0], 143), project(t, r.flows[1], 144));
    };
    return ad::gradient_check_leaves(f, ps.params(), 1e-5, 6, 7, kCompositeFloor, kCompositeTol);
  });
  comp("car_rollout", [size] {
    const auto cfg = model::ModelConfig::preset("tiny", size, size);
    model::ParamStore ps;
    Rng rng(145);
    model::ContextRefiner car(cfg, ps, rng);
    Rng r2(146);
    for (const auto& [n, t] : ps.params())
      if (n.find(".film.") != std::string::npos && n.find(".1.weight") != std::string::npos)
        for (auto& w : t.data_mut()) w = std::uniform_real_distribution<double>(-0.3, 0.3)(r2);
    const auto batch = random_batch(cfg, 2, 4, 2, 147);
    const std::vector<Tensor> flows{fractional(rand({2, 2, size, size}, 148)), fractional(rand({2, 2, size, size}, 149))};
    auto f = [&](Tape& t) {
      const auto out = model::car_rollout(t, car, batch, flows, model::RefineVariant::Full, NormMode::Training);
      return ad::add(t, project(t, out[0], 150), project(t, out[1], 151));
    };
    return ad::gradient_check_leaves(f, ps.params(), 1e-6, 4, 8, kCompositeFloor, kCompositeTol);
  });
  return cases;
}

/// Runs every case; `on_result` sees each result as it completes.
inline std::vector<GradResult> run_gradient_suite(std::size_t size = 16,
                                                  const std::function<void(const GradResult&)>& on_result = {}) {
  std::vector<GradResult> out;
  for (const auto& c : gradient_suite(size)) {
    const auto t0 = std::chrono::steady_clock::now();
    GradResult r{c.name, c.composite, c.composite ? kCompositeTol : kPrimitiveTol, c.run(), 0.0};
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (on_result) on_result(r);
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace avpred::eval
