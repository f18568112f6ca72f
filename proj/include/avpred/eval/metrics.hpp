#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "avpred/core/tensor.hpp"

namespace avpred::eval {

inline constexpr std::size_t kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;
inline constexpr double kSsimC1 = 0.01 * 0.01;
inline constexpr double kSsimC2 = 0.03 * 0.03;
inline constexpr double kPsnrCap = 100.0;

namespace detail {
inline void same_shape(const ad::Tensor& a, const ad::Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw DimensionError(std::string(op) + ": shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
}

inline std::vector<double> gaussian_taps() {
  std::vector<double> g(kSsimWindow);
  const double c = double(kSsimWindow / 2);
  double z = 0.0;
  for (std::size_t i = 0; i < kSsimWindow; ++i) z += g[i] = std::exp(-(i - c) * (i - c) / (2 * kSsimSigma * kSsimSigma));
  for (auto& v : g) v /= z;
  return g;
}

/// Separable Gaussian filter over the valid region of one H x W plane.
inline std::vector<double> blur_valid(const double* x, std::size_t H, std::size_t W) {
  static const auto g = gaussian_taps();
  const std::size_t k = kSsimWindow, oh = H - k + 1, ow = W - k + 1;
  std::vector<double> rows(H * ow, 0.0), out(oh * ow, 0.0);
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x0 = 0; x0 < ow; ++x0) {
      double s = 0.0;
      for (std::size_t i = 0; i < k; ++i) s += g[i] * x[y * W + x0 + i];
      rows[y * ow + x0] = s;
    }
  for (std::size_t y0 = 0; y0 < oh; ++y0)
    for (std::size_t x0 = 0; x0 < ow; ++x0) {
      double s = 0.0;
      for (std::size_t i = 0; i < k; ++i) s += g[i] * rows[(y0 + i) * ow + x0];
      out[y0 * ow + x0] = s;
    }
  return out;
}
}  // namespace detail

/// Single-scale SSIM over the last two axes, averaged over valid window
/// positions and over all leading (channel/batch) planes.
inline double ssim(const ad::Tensor& a, const ad::Tensor& b) {
  detail::same_shape(a, b, "ssim");
  if (a.rank() < 2) throw DimensionError("ssim: need at least 2 dimensions");
  const std::size_t H = a.dim(a.rank() - 2), W = a.dim(a.rank() - 1);
  if (H < kSsimWindow || W < kSsimWindow)
    throw DimensionError("ssim: frame " + std::to_string(H) + "x" + std::to_string(W) + " is smaller than the " +
                         std::to_string(kSsimWindow) + "x" + std::to_string(kSsimWindow) + " window");
  const std::size_t P = H * W, planes = a.numel() / P;
  double total = 0.0;
  std::size_t count = 0;
  std::vector<double> xx(P), yy(P), xy(P);
  for (std::size_t c = 0; c < planes; ++c) {
    const double* x = a.data().data() + c * P;
    const double* y = b.data().data() + c * P;
    for (std::size_t i = 0; i < P; ++i) {
      xx[i] = x[i] * x[i];
      yy[i] = y[i] * y[i];
      xy[i] = x[i] * y[i];
    }
    const auto mx = detail::blur_valid(x, H, W), my = detail::blur_valid(y, H, W);
    const auto sxx = detail::blur_valid(xx.data(), H, W), syy = detail::blur_valid(yy.data(), H, W),
               sxy = detail::blur_valid(xy.data(), H, W);
    for (std::size_t i = 0; i < mx.size(); ++i) {
      const double vx = sxx[i] - mx[i] * mx[i], vy = syy[i] - my[i] * my[i], cov = sxy[i] - mx[i] * my[i];
      total += ((2 * mx[i] * my[i] + kSsimC1) * (2 * cov + kSsimC2)) /
               ((mx[i] * mx[i] + my[i] * my[i] + kSsimC1) * (vx + vy + kSsimC2));
    }
    count += mx.size();
  }
  return total / double(count);
}

inline double mse(const ad::Tensor& a, const ad::Tensor& b) {
  detail::same_shape(a, b, "mse");
  double s = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s / double(a.numel());
}

/// 10 log10(1 / MSE) for unit dynamic range, capped so identical frames stay finite.
inline double psnr(const ad::Tensor& a, const ad::Tensor& b) {
  const double m = mse(a, b);
  if (m <= 0.0) return kPsnrCap;
  return std::min(kPsnrCap, -10.0 * std::log10(m));
}

/// Mean endpoint error over pixels; accepts [2,H,W] or [B,2,H,W].
inline double aepe(const ad::Tensor& pred, const ad::Tensor& gt) {
  detail::same_shape(pred, gt, "aepe");
  const std::size_t r = pred.rank();
  if (r < 3 || pred.dim(r - 3) != 2) throw DimensionError("aepe: expected flow fields of shape [...,2,H,W], got " + shape_str(pred.shape()));
  const std::size_t P = pred.dim(r - 2) * pred.dim(r - 1), fields = pred.numel() / (2 * P);
  double s = 0.0;
  for (std::size_t f = 0; f < fields; ++f)
    for (std::size_t p = 0; p < P; ++p) {
      const double du = pred[(2 * f) * P + p] - gt[(2 * f) * P + p];
      const double dv = pred[(2 * f + 1) * P + p] - gt[(2 * f + 1) * P + p];
      s += std::sqrt(du * du + dv * dv);
    }
  return s / double(fields * P);
}

}  // namespace avpred::eval
