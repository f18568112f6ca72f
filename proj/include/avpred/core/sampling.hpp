#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "avpred/core/conv.hpp"

namespace avpred::ad {

/// Absolute pixel grid [B,2,H,W]: channel 0 holds x (column), channel 1 y (row).
inline Tensor identity_grid(std::size_t batch, std::size_t height, std::size_t width) {
  std::vector<double> g(batch * 2 * height * width);
  const std::size_t plane = height * width;
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t i = 0; i < height; ++i)
      for (std::size_t j = 0; j < width; ++j) {
        g[(b * 2 + 0) * plane + i * width + j] = static_cast<double>(j);
        g[(b * 2 + 1) * plane + i * width + j] = static_cast<double>(i);
      }
  return Tensor({batch, 2, height, width}, std::move(g));
}

/// Bilinear sampling of src[B,C,H,W] at absolute coords[B,2,Ho,Wo].
///
/// Coordinates outside the image are clamped to the border, so the
/// result is always a convex combination of source pixels. The gradient
/// w.r.t. a clamped coordinate component is zero.
inline Tensor bilinear_sample(Tape& tape, const Tensor& src, const Tensor& coords) {
  detail::require_rank4(src, "bilinear_sample");
  detail::require_rank4(coords, "bilinear_sample");
  if (coords.dim(0) != src.dim(0) || coords.dim(1) != 2) {
    throw DimensionError("bilinear_sample: coords " + shape_str(coords.shape()) + " incompatible with source " +
                         shape_str(src.shape()));
  }
  const std::size_t B = src.dim(0), C = src.dim(1), H = src.dim(2), W = src.dim(3);
  const std::size_t Ho = coords.dim(2), Wo = coords.dim(3), P = Ho * Wo;
  const auto S = src.data();
  const auto G = coords.data();
  std::vector<double> out(B * C * P);
  const double xmax = static_cast<double>(W - 1), ymax = static_cast<double>(H - 1);
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t p = 0; p < P; ++p) {
      const double x = std::clamp(G[(b * 2) * P + p], 0.0, xmax);
      const double y = std::clamp(G[(b * 2 + 1) * P + p], 0.0, ymax);
      const auto x0 = static_cast<std::size_t>(std::floor(x)), y0 = static_cast<std::size_t>(std::floor(y));
      const std::size_t x1 = std::min(x0 + 1, W - 1), y1 = std::min(y0 + 1, H - 1);
      const double fx = x - static_cast<double>(x0), fy = y - static_cast<double>(y0);
      for (std::size_t c = 0; c < C; ++c) {
        const double* img = S.data() + (b * C + c) * H * W;
        out[(b * C + c) * P + p] = (1 - fy) * ((1 - fx) * img[y0 * W + x0] + fx * img[y0 * W + x1]) +
                                   fy * ((1 - fx) * img[y1 * W + x0] + fx * img[y1 * W + x1]);
      }
    }
  }
  return detail::finish(
      tape, Tensor({B, C, Ho, Wo}, std::move(out)), "bilinear_sample", detail::any_requires_grad({&src, &coords}),
      [src, coords, B, C, H, W, P](Tensor o) {
        return [src, coords, B, C, H, W, P, o]() mutable {
          if (!o.has_grad()) return;
          const auto g = o.grad();
          const auto S = src.data();
          const auto Gc = coords.data();
          const double xmax = static_cast<double>(W - 1), ymax = static_cast<double>(H - 1);
          std::span<double> GS, GC;
          if (src.requires_grad()) GS = src.grad_mut();
          if (coords.requires_grad()) GC = coords.grad_mut();
          for (std::size_t b = 0; b < B; ++b) {
            for (std::size_t p = 0; p < P; ++p) {
              const double rx = Gc[(b * 2) * P + p], ry = Gc[(b * 2 + 1) * P + p];
              const double x = std::clamp(rx, 0.0, xmax), y = std::clamp(ry, 0.0, ymax);
              const auto x0 = static_cast<std::size_t>(std::floor(x)), y0 = static_cast<std::size_t>(std::floor(y));
              const std::size_t x1 = std::min(x0 + 1, W - 1), y1 = std::min(y0 + 1, H - 1);
              const double fx = x - static_cast<double>(x0), fy = y - static_cast<double>(y0);
              const bool x_free = rx > 0.0 && rx < xmax, y_free = ry > 0.0 && ry < ymax;
              double dx = 0.0, dy = 0.0;
              for (std::size_t c = 0; c < C; ++c) {
                const std::size_t base = (b * C + c) * H * W;
                const double gv = g[(b * C + c) * P + p];
                const double v00 = S[base + y0 * W + x0], v01 = S[base + y0 * W + x1];
                const double v10 = S[base + y1 * W + x0], v11 = S[base + y1 * W + x1];
                if (!GS.empty()) {
                  GS[base + y0 * W + x0] += gv * (1 - fy) * (1 - fx);
                  GS[base + y0 * W + x1] += gv * (1 - fy) * fx;
                  GS[base + y1 * W + x0] += gv * fy * (1 - fx);
                  GS[base + y1 * W + x1] += gv * fy * fx;
                }
                dx += gv * ((1 - fy) * (v01 - v00) + fy * (v11 - v10));
                dy += gv * ((1 - fx) * (v10 - v00) + fx * (v11 - v01));
              }
              if (!GC.empty()) {
                if (x_free) GC[(b * 2) * P + p] += dx;
                if (y_free) GC[(b * 2 + 1) * P + p] += dy;
              }
            }
          }
        };
      });
}

namespace detail {

/// Forward difference along the last (axis_w) or second-to-last axis with
/// a zero difference at the far edge (replicate padding).
inline Tensor forward_diff(Tape& tape, const Tensor& x, bool along_width) {
  require_rank4(x, along_width ? "diff_x" : "diff_y");
  const std::size_t planes = x.dim(0) * x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t step = along_width ? 1 : W;
  const auto X = x.data();
  std::vector<double> out(X.size(), 0.0);
  for (std::size_t p = 0; p < planes; ++p)
    for (std::size_t i = 0; i < H; ++i)
      for (std::size_t j = 0; j < W; ++j) {
        const bool edge = along_width ? (j + 1 == W) : (i + 1 == H);
        if (edge) continue;
        const std::size_t q = (p * H + i) * W + j;
        out[q] = X[q + step] - X[q];
      }
  return finish(tape, Tensor(x.shape(), std::move(out)), along_width ? "diff_x" : "diff_y", x.requires_grad(),
                [x, planes, H, W, step, along_width](Tensor o) {
                  return [x, planes, H, W, step, along_width, o]() mutable {
                    if (!o.has_grad()) return;
                    const auto g = o.grad();
                    auto G = x.grad_mut();
                    for (std::size_t p = 0; p < planes; ++p)
                      for (std::size_t i = 0; i < H; ++i)
                        for (std::size_t j = 0; j < W; ++j) {
                          const bool edge = along_width ? (j + 1 == W) : (i + 1 == H);
                          if (edge) continue;
                          const std::size_t q = (p * H + i) * W + j;
                          G[q + step] += g[q];
                          G[q] -= g[q];
                        }
                  };
                });
}

}  // namespace detail

inline Tensor diff_x(Tape& tape, const Tensor& x) { return detail::forward_diff(tape, x, true); }
inline Tensor diff_y(Tape& tape, const Tensor& x) { return detail::forward_diff(tape, x, false); }

}  // namespace avpred::ad
