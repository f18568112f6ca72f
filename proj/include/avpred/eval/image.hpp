#pragma once

#include <png.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numbers>
#include <optional>
#include <vector>

#include "avpred/core/error.hpp"
#include "avpred/core/tensor.hpp"

namespace avpred::eval {

/// H x W x 3 colour image, channel-interleaved, values in [0,1].
struct FlowImage {
  std::size_t height = 0, width = 0;
  std::vector<double> rgb;

  std::array<double, 3> pixel(std::size_t y, std::size_t x) const {
    const auto* p = &rgb[(y * width + x) * 3];
    return {p[0], p[1], p[2]};
  }
};

struct Hsv {
  double h, s, v;  // hue in degrees [0,360)
};

inline std::array<double, 3> hsv_to_rgb(Hsv c) {
  const double h = c.h / 60.0;
  const int sector = int(std::floor(h)) % 6;
  const double f = h - std::floor(h);
  const double p = c.v * (1 - c.s), q = c.v * (1 - c.s * f), t = c.v * (1 - c.s * (1 - f));
  switch (sector) {
    case 0: return {c.v, t, p};
    case 1: return {q, c.v, p};
    case 2: return {p, c.v, t};
    case 3: return {p, q, c.v};
    case 4: return {t, p, c.v};
    default: return {c.v, p, q};
  }
}

/// 99th-percentile flow magnitude of a [2,H,W] (or [1,2,H,W]) field.
inline double flow_scale(const ad::Tensor& flow) {
  const std::size_t P = flow.numel() / 2;
  std::vector<double> mag(P);
  for (std::size_t p = 0; p < P; ++p) mag[p] = std::hypot(flow[p], flow[P + p]);
  std::sort(mag.begin(), mag.end());
  return mag[std::min(P - 1, std::size_t(std::ceil(0.99 * double(P))) - 1)];
}

inline Hsv flow_hsv(double fx, double fy, double f_max) {
  double hue = std::atan2(fy, fx) * 180.0 / std::numbers::pi;
  if (hue < 0) hue += 360.0;
  const double sat = f_max > 0 ? std::min(std::hypot(fx, fy) / f_max, 1.0) : 0.0;
  return {hue, sat, 1.0};
}

/// HSV wheel colour coding: hue is direction, saturation is magnitude
/// relative to f_max (default: 99th percentile), value is 1. Zero flow is white.
inline FlowImage flow_to_color(const ad::Tensor& flow, std::optional<double> f_max = std::nullopt) {
  const std::size_t r = flow.rank();
  if (r < 3 || flow.dim(r - 3) != 2 || flow.numel() != 2 * flow.dim(r - 2) * flow.dim(r - 1))
    throw DimensionError("flow_to_color: expected one [2,H,W] field, got " + shape_str(flow.shape()));
  FlowImage img{flow.dim(r - 2), flow.dim(r - 1), {}};
  const std::size_t P = img.height * img.width;
  const double scale = f_max ? *f_max : flow_scale(flow);
  img.rgb.resize(P * 3);
  for (std::size_t p = 0; p < P; ++p) {
    const auto c = hsv_to_rgb(flow_hsv(flow[p], flow[P + p], scale));
    std::copy(c.begin(), c.end(), img.rgb.begin() + 3 * p);
  }
  return img;
}

inline std::uint8_t to_byte(double v) { return std::uint8_t(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)); }

/// Writes 8-bit grey (channels 1) or RGB (channels 3) from interleaved [0,1] values.
inline void write_png(const std::filesystem::path& path, std::size_t height, std::size_t width, int channels,
                      const std::vector<double>& interleaved) {
  if (channels != 1 && channels != 3) throw ConfigError("write_png: channels must be 1 or 3");
  if (interleaved.size() != height * width * std::size_t(channels)) throw DimensionError("write_png: size mismatch");
  FILE* fp = std::fopen(path.c_str(), "wb");
  if (!fp) throw IoError("cannot open " + path.string() + " for writing");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    throw IoError("libpng failed writing " + path.string());
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, png_uint_32(width), png_uint_32(height), 8,
               channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<std::uint8_t> row(width * std::size_t(channels));
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t i = 0; i < row.size(); ++i) row[i] = to_byte(interleaved[y * row.size() + i]);
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(fp);
}

inline void write_png(const std::filesystem::path& path, const FlowImage& img) {
  write_png(path, img.height, img.width, 3, img.rgb);
}

/// Writes a [C,H,W] or [1,C,H,W] frame with C in {1,3}.
inline void write_frame_png(const std::filesystem::path& path, const ad::Tensor& frame) {
  const std::size_t r = frame.rank(), H = frame.dim(r - 2), W = frame.dim(r - 1), C = frame.numel() / (H * W);
  std::vector<double> inter(frame.numel());
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t p = 0; p < H * W; ++p) inter[p * C + c] = frame[c * H * W + p];
  write_png(path, H, W, int(C), inter);
}

}  // namespace avpred::eval
