#pragma once

// Spatial primitives on B×C×H×W tensors: convolution, transposed
// convolution, pooling, upsampling and batch normalization.

#include <cmath>
#include <string>
#include <vector>

#include "avpred/core/ops.hpp"

namespace avpred::ad {

struct Conv2dOptions {
  std::size_t stride_h = 1, stride_w = 1;
  std::size_t pad_h = 0, pad_w = 0;

  static Conv2dOptions uniform(std::size_t stride, std::size_t pad) { return {stride, stride, pad, pad}; }
};

namespace detail {

struct ConvGeometry {
  std::size_t channels, in_h, in_w, kh, kw, out_h, out_w;
  Conv2dOptions opt;
  std::size_t patch() const { return channels * kh * kw; }
  std::size_t positions() const { return out_h * out_w; }
};

inline std::size_t conv_out_dim(std::size_t in, std::size_t k, std::size_t stride, std::size_t pad,
                                const char* op) {
  if (stride == 0) throw DimensionError(std::string(op) + ": stride must be >= 1");
  if (k > in + 2 * pad) {
    throw DimensionError(std::string(op) + ": kernel " + std::to_string(k) + " larger than padded input " +
                         std::to_string(in + 2 * pad));
  }
  return (in + 2 * pad - k) / stride + 1;
}

/// Unfolds one image [C, H, W] into columns [C*kh*kw, out_h*out_w].
inline void im2col(const double* img, const ConvGeometry& g, double* col) {
  const std::size_t P = g.positions();
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t ki = 0; ki < g.kh; ++ki) {
      for (std::size_t kj = 0; kj < g.kw; ++kj) {
        double* row = col + ((c * g.kh + ki) * g.kw + kj) * P;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const long iy = static_cast<long>(oy * g.opt.stride_h + ki) - static_cast<long>(g.opt.pad_h);
          double* dst = row + oy * g.out_w;
          if (iy < 0 || iy >= static_cast<long>(g.in_h)) {
            std::fill_n(dst, g.out_w, 0.0);
            continue;
          }
          const double* src = img + (c * g.in_h + static_cast<std::size_t>(iy)) * g.in_w;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const long ix = static_cast<long>(ox * g.opt.stride_w + kj) - static_cast<long>(g.opt.pad_w);
            dst[ox] = (ix < 0 || ix >= static_cast<long>(g.in_w)) ? 0.0 : src[ix];
          }
        }
      }
    }
  }
}

/// Adjoint of im2col: scatters-and-adds columns back into [C, H, W].
inline void col2im(const double* col, const ConvGeometry& g, double* img) {
  const std::size_t P = g.positions();
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t ki = 0; ki < g.kh; ++ki) {
      for (std::size_t kj = 0; kj < g.kw; ++kj) {
        const double* row = col + ((c * g.kh + ki) * g.kw + kj) * P;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const long iy = static_cast<long>(oy * g.opt.stride_h + ki) - static_cast<long>(g.opt.pad_h);
          if (iy < 0 || iy >= static_cast<long>(g.in_h)) continue;
          double* dst = img + (c * g.in_h + static_cast<std::size_t>(iy)) * g.in_w;
          const double* src = row + oy * g.out_w;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const long ix = static_cast<long>(ox * g.opt.stride_w + kj) - static_cast<long>(g.opt.pad_w);
            if (ix >= 0 && ix < static_cast<long>(g.in_w)) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

inline void require_rank4(const Tensor& x, const char* op) {
  if (x.rank() != 4) throw DimensionError(std::string(op) + ": expected B×C×H×W, got " + shape_str(x.shape()));
}

}  // namespace detail

/// Cross-correlation. x[B,Cin,H,W], w[Cout,Cin,kh,kw], bias[Cout] (optional).
inline Tensor conv2d(Tape& tape, const Tensor& x, const Tensor& w, const Tensor& bias, Conv2dOptions opt = {}) {
  detail::require_rank4(x, "conv2d");
  if (w.rank() != 4 || w.dim(1) != x.dim(1) || (bias.defined() && bias.numel() != w.dim(0))) {
    throw DimensionError("conv2d: weight " + shape_str(w.shape()) + " incompatible with input " +
                         shape_str(x.shape()));
  }
  const std::size_t B = x.dim(0), cin = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t cout = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  detail::ConvGeometry g{cin, H, W, kh, kw, detail::conv_out_dim(H, kh, opt.stride_h, opt.pad_h, "conv2d"),
                         detail::conv_out_dim(W, kw, opt.stride_w, opt.pad_w, "conv2d"), opt};
  const std::size_t K = g.patch(), P = g.positions();
  std::vector<double> out(B * cout * P);
  std::vector<double> col(K * P);
  auto Wm = detail::cmap(w.data().data(), cout, K);
  for (std::size_t b = 0; b < B; ++b) {
    detail::im2col(x.data().data() + b * cin * H * W, g, col.data());
    auto Y = detail::mmap(out.data() + b * cout * P, cout, P);
    Y.noalias() = Wm * detail::cmap(col.data(), K, P);
    if (bias.defined()) {
      const auto bv = bias.data();
      for (std::size_t c = 0; c < cout; ++c) Y.row(static_cast<Eigen::Index>(c)).array() += bv[c];
    }
  }
  return detail::finish(
      tape, Tensor({B, cout, g.out_h, g.out_w}, std::move(out)), "conv2d",
      detail::any_requires_grad({&x, &w, &bias}), [x, w, bias, g, B, cout](Tensor o) {
        return [x, w, bias, g, B, cout, o]() mutable {
          if (!o.has_grad()) return;
          const std::size_t K = g.patch(), P = g.positions(), in_sz = g.channels * g.in_h * g.in_w;
          std::vector<double> col(K * P);
          const double* G = o.grad().data();
          auto Wm = detail::cmap(w.data().data(), cout, K);
          for (std::size_t b = 0; b < B; ++b) {
            auto Gb = detail::cmap(G + b * cout * P, cout, P);
            if (w.requires_grad()) {
              detail::im2col(x.data().data() + b * in_sz, g, col.data());
              detail::mmap(w.grad_mut().data(), cout, K).noalias() += Gb * detail::cmap(col.data(), K, P).transpose();
            }
            if (x.requires_grad()) {
              detail::mmap(col.data(), K, P).noalias() = Wm.transpose() * Gb;
              detail::col2im(col.data(), g, x.grad_mut().data() + b * in_sz);
            }
            if (bias.defined() && bias.requires_grad()) {
              auto gb = bias.grad_mut();
              // Plain loop: Eigen's vectorized sum peels by address, so its rounding would vary run to run.
              for (std::size_t c = 0; c < cout; ++c) {
                const double* row = G + (b * cout + c) * P;
                double s = 0.0;
                for (std::size_t p = 0; p < P; ++p) s += row[p];
                gb[c] += s;
              }
            }
          }
        };
      });
}

/// Transposed convolution. x[B,Cin,H,W], w[Cin,Cout,kh,kw], bias[Cout].
/// Output spatial size (H-1)*stride - 2*pad + kh. Forward equals the
/// input-gradient pass of conv2d with the same kernel.
inline Tensor deconv2d(Tape& tape, const Tensor& x, const Tensor& w, const Tensor& bias, Conv2dOptions opt = {}) {
  detail::require_rank4(x, "deconv2d");
  if (w.rank() != 4 || w.dim(0) != x.dim(1) || (bias.defined() && bias.numel() != w.dim(1))) {
    throw DimensionError("deconv2d: weight " + shape_str(w.shape()) + " incompatible with input " +
                         shape_str(x.shape()));
  }
  if (opt.stride_h == 0 || opt.stride_w == 0) throw DimensionError("deconv2d: stride must be >= 1");
  const std::size_t B = x.dim(0), cin = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t cout = w.dim(1), kh = w.dim(2), kw = w.dim(3);
  const long oh = static_cast<long>((H - 1) * opt.stride_h + kh) - 2 * static_cast<long>(opt.pad_h);
  const long ow = static_cast<long>((W - 1) * opt.stride_w + kw) - 2 * static_cast<long>(opt.pad_w);
  if (oh <= 0 || ow <= 0) throw DimensionError("deconv2d: padding leaves empty output");
  // Geometry of the adjoint convolution: its input is our output.
  detail::ConvGeometry g{cout, static_cast<std::size_t>(oh), static_cast<std::size_t>(ow), kh, kw, H, W, opt};
  if (detail::conv_out_dim(g.in_h, kh, opt.stride_h, opt.pad_h, "deconv2d") != H ||
      detail::conv_out_dim(g.in_w, kw, opt.stride_w, opt.pad_w, "deconv2d") != W) {
    throw DimensionError("deconv2d: inconsistent geometry");
  }
  const std::size_t K = g.patch(), P = H * W, out_sz = cout * g.in_h * g.in_w;
  std::vector<double> out(B * out_sz, 0.0);
  std::vector<double> col(K * P);
  auto Wm = detail::cmap(w.data().data(), cin, K);
  for (std::size_t b = 0; b < B; ++b) {
    detail::mmap(col.data(), K, P).noalias() = Wm.transpose() * detail::cmap(x.data().data() + b * cin * P, cin, P);
    double* ob = out.data() + b * out_sz;
    detail::col2im(col.data(), g, ob);
    if (bias.defined()) {
      const auto bv = bias.data();
      const std::size_t plane = g.in_h * g.in_w;
      for (std::size_t c = 0; c < cout; ++c)
        for (std::size_t i = 0; i < plane; ++i) ob[c * plane + i] += bv[c];
    }
  }
  return detail::finish(
      tape, Tensor({B, cout, g.in_h, g.in_w}, std::move(out)), "deconv2d",
      detail::any_requires_grad({&x, &w, &bias}), [x, w, bias, g, B, cin](Tensor o) {
        return [x, w, bias, g, B, cin, o]() mutable {
          if (!o.has_grad()) return;
          const std::size_t K = g.patch(), P = g.out_h * g.out_w, out_sz = g.channels * g.in_h * g.in_w;
          std::vector<double> col(K * P);
          const double* G = o.grad().data();
          auto Wm = detail::cmap(w.data().data(), cin, K);
          for (std::size_t b = 0; b < B; ++b) {
            detail::im2col(G + b * out_sz, g, col.data());
            auto C = detail::cmap(col.data(), K, P);
            if (x.requires_grad()) detail::mmap(x.grad_mut().data() + b * cin * P, cin, P).noalias() += Wm * C;
            if (w.requires_grad())
              detail::mmap(w.grad_mut().data(), cin, K).noalias() +=
                  detail::cmap(x.data().data() + b * cin * P, cin, P) * C.transpose();
            if (bias.defined() && bias.requires_grad()) {
              auto gb = bias.grad_mut();
              const std::size_t plane = g.in_h * g.in_w;
              for (std::size_t c = 0; c < g.channels; ++c) {
                double s = 0.0;
                for (std::size_t i = 0; i < plane; ++i) s += G[b * out_sz + c * plane + i];
                gb[c] += s;
              }
            }
          }
        };
      });
}

/// 2×2 max pooling with stride 2. Ties route the gradient to the first
/// element of the window in row-major order.
inline Tensor max_pool2d(Tape& tape, const Tensor& x) {
  detail::require_rank4(x, "max_pool2d");
  const std::size_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (H % 2 || W % 2) throw DimensionError("max_pool2d: spatial dims must be even, got " + shape_str(x.shape()));
  const std::size_t oh = H / 2, ow = W / 2;
  std::vector<double> out(B * C * oh * ow);
  std::vector<std::size_t> arg(out.size());
  const auto X = x.data();
  for (std::size_t p = 0; p < B * C; ++p) {
    for (std::size_t i = 0; i < oh; ++i) {
      for (std::size_t j = 0; j < ow; ++j) {
        std::size_t best = p * H * W + (2 * i) * W + 2 * j;
        for (std::size_t di = 0; di < 2; ++di)
          for (std::size_t dj = 0; dj < 2; ++dj) {
            const std::size_t q = p * H * W + (2 * i + di) * W + 2 * j + dj;
            if (X[q] > X[best]) best = q;
          }
        const std::size_t o = (p * oh + i) * ow + j;
        out[o] = X[best];
        arg[o] = best;
      }
    }
  }
  return detail::finish(tape, Tensor({B, C, oh, ow}, std::move(out)), "max_pool2d", x.requires_grad(),
                        [x, arg = std::move(arg)](Tensor o) {
                          return [x, arg, o]() mutable {
                            if (!o.has_grad()) return;
                            const auto g = o.grad();
                            auto G = x.grad_mut();
                            for (std::size_t i = 0; i < g.size(); ++i) G[arg[i]] += g[i];
                          };
                        });
}

/// Nearest-neighbour 2× upsampling.
inline Tensor upsample2x(Tape& tape, const Tensor& x) {
  detail::require_rank4(x, "upsample2x");
  const std::size_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  std::vector<double> out(B * C * 4 * H * W);
  const auto X = x.data();
  for (std::size_t p = 0; p < B * C; ++p)
    for (std::size_t i = 0; i < 2 * H; ++i)
      for (std::size_t j = 0; j < 2 * W; ++j) out[(p * 2 * H + i) * 2 * W + j] = X[(p * H + i / 2) * W + j / 2];
  return detail::finish(tape, Tensor({B, C, 2 * H, 2 * W}, std::move(out)), "upsample2x", x.requires_grad(),
                        [x, B, C, H, W](Tensor o) {
                          return [x, B, C, H, W, o]() mutable {
                            if (!o.has_grad()) return;
                            const auto g = o.grad();
                            auto G = x.grad_mut();
                            for (std::size_t p = 0; p < B * C; ++p)
                              for (std::size_t i = 0; i < 2 * H; ++i)
                                for (std::size_t j = 0; j < 2 * W; ++j)
                                  G[(p * H + i / 2) * W + j / 2] += g[(p * 2 * H + i) * 2 * W + j];
                          };
                        });
}

/// Mean over the spatial dims: [B,C,H,W] -> [B,C].
inline Tensor global_avg_pool(Tape& tape, const Tensor& x) {
  detail::require_rank4(x, "global_avg_pool");
  const std::size_t B = x.dim(0), C = x.dim(1), S = x.dim(2) * x.dim(3);
  std::vector<double> out(B * C);
  const auto X = x.data();
  for (std::size_t p = 0; p < B * C; ++p) {
    double s = 0.0;
    for (std::size_t i = 0; i < S; ++i) s += X[p * S + i];
    out[p] = s / static_cast<double>(S);
  }
  return detail::finish(tape, Tensor({B, C}, std::move(out)), "global_avg_pool", x.requires_grad(),
                        [x, B, C, S](Tensor o) {
                          return [x, B, C, S, o]() mutable {
                            if (!o.has_grad()) return;
                            const auto g = o.grad();
                            auto G = x.grad_mut();
                            const double inv = 1.0 / static_cast<double>(S);
                            for (std::size_t p = 0; p < B * C; ++p)
                              for (std::size_t i = 0; i < S; ++i) G[p * S + i] += g[p] * inv;
                          };
                        });
}

inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;

enum class NormMode { Training, Inference };

/// Per-channel batch normalization over (batch, spatial...) of x[B,C,...].
///
/// Training mode normalizes with batch statistics and folds them into the
/// running buffers (momentum 0.1, unbiased variance); inference mode uses
/// the running buffers and leaves them untouched.
inline Tensor batch_norm(Tape& tape, const Tensor& x, const Tensor& gamma, const Tensor& beta,
                         Tensor running_mean, Tensor running_var, NormMode mode) {
  if (x.rank() < 2) throw DimensionError("batch_norm: expected B×C×..., got " + shape_str(x.shape()));
  const std::size_t B = x.dim(0), C = x.dim(1), S = x.numel() / (B * C);
  if (gamma.numel() != C || beta.numel() != C || running_mean.numel() != C || running_var.numel() != C) {
    throw DimensionError("batch_norm: parameter width does not match " + std::to_string(C) + " channels");
  }
  const std::size_t N = B * S;
  const auto X = x.data();
  std::vector<double> mu(C), inv_std(C);
  if (mode == NormMode::Training) {
    if (N < 2) {
      throw DimensionError("batch_norm: degenerate statistics, only one element per channel in training mode");
    }
    auto rm = running_mean.data_mut();
    auto rv = running_var.data_mut();
    for (std::size_t c = 0; c < C; ++c) {
      double s = 0.0;
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t i = 0; i < S; ++i) s += X[(b * C + c) * S + i];
      const double m = s / static_cast<double>(N);
      double v = 0.0;
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t i = 0; i < S; ++i) {
          const double d = X[(b * C + c) * S + i] - m;
          v += d * d;
        }
      v /= static_cast<double>(N);
      mu[c] = m;
      inv_std[c] = 1.0 / std::sqrt(v + kBatchNormEps);
      rm[c] = (1.0 - kBatchNormMomentum) * rm[c] + kBatchNormMomentum * m;
      rv[c] = (1.0 - kBatchNormMomentum) * rv[c] +
              kBatchNormMomentum * v * static_cast<double>(N) / static_cast<double>(N - 1);
    }
  } else {
    const auto rm = running_mean.data();
    const auto rv = running_var.data();
    for (std::size_t c = 0; c < C; ++c) {
      mu[c] = rm[c];
      inv_std[c] = 1.0 / std::sqrt(rv[c] + kBatchNormEps);
    }
  }
  std::vector<double> xhat(X.size()), out(X.size());
  const auto Gm = gamma.data(), Bt = beta.data();
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t i = 0; i < S; ++i) {
        const std::size_t q = (b * C + c) * S + i;
        xhat[q] = (X[q] - mu[c]) * inv_std[c];
        out[q] = Gm[c] * xhat[q] + Bt[c];
      }
  const bool training = mode == NormMode::Training;
  return detail::finish(
      tape, Tensor(x.shape(), std::move(out)), "batch_norm", detail::any_requires_grad({&x, &gamma, &beta}),
      [x, gamma, beta, B, C, S, N, training, inv_std = std::move(inv_std), xhat = std::move(xhat)](Tensor o) {
        return [x, gamma, beta, B, C, S, N, training, inv_std, xhat, o]() mutable {
          if (!o.has_grad()) return;
          const auto g = o.grad();
          const auto Gm = gamma.data();
          std::vector<double> sum_g(C, 0.0), sum_gx(C, 0.0);
          for (std::size_t b = 0; b < B; ++b)
            for (std::size_t c = 0; c < C; ++c)
              for (std::size_t i = 0; i < S; ++i) {
                const std::size_t q = (b * C + c) * S + i;
                sum_g[c] += g[q];
                sum_gx[c] += g[q] * xhat[q];
              }
          if (gamma.requires_grad()) {
            auto G = gamma.grad_mut();
            for (std::size_t c = 0; c < C; ++c) G[c] += sum_gx[c];
          }
          if (beta.requires_grad()) {
            auto G = beta.grad_mut();
            for (std::size_t c = 0; c < C; ++c) G[c] += sum_g[c];
          }
          if (!x.requires_grad()) return;
          auto GX = x.grad_mut();
          const double n = static_cast<double>(N);
          for (std::size_t b = 0; b < B; ++b)
            for (std::size_t c = 0; c < C; ++c) {
              const double k = Gm[c] * inv_std[c];
              for (std::size_t i = 0; i < S; ++i) {
                const std::size_t q = (b * C + c) * S + i;
                if (training) {
                  GX[q] += k * (g[q] - sum_g[c] / n - xhat[q] * sum_gx[c] / n);
                } else {
                  GX[q] += k * g[q];
                }
              }
            }
        };
      });
}

}  // namespace avpred::ad
