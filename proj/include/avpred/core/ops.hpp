#pragma once

// Elementwise, shape, reduction and dense-algebra primitives.
//
// Every op takes the Tape first. When the tape is recording and any input
// requires a gradient, the op pushes its backward rule; otherwise it is a
// plain forward computation.

#include <Eigen/Core>

#include <array>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "avpred/core/tensor.hpp"

namespace avpred::ad {

namespace detail {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

inline ConstMap cmap(const double* p, std::size_t rows, std::size_t cols) {
  return ConstMap(p, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}
inline MutMap mmap(double* p, std::size_t rows, std::size_t cols) {
  return MutMap(p, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

struct BroadcastPlan {
  Shape out;
  std::vector<std::size_t> stride_a, stride_b;  // per output dim, 0 when broadcast
  bool same = false;
};

inline std::vector<std::size_t> contiguous_strides(const Shape& s) {
  std::vector<std::size_t> st(s.size(), 1);
  for (std::size_t i = s.size(); i-- > 1;) st[i - 1] = st[i] * s[i];
  return st;
}

inline BroadcastPlan plan_broadcast(const Shape& a, const Shape& b, const char* op) {
  BroadcastPlan p;
  if (a == b) {
    p.out = a;
    p.same = true;
    return p;
  }
  const std::size_t r = std::max(a.size(), b.size());
  Shape pa(r, 1), pb(r, 1);
  std::copy(a.begin(), a.end(), pa.begin() + static_cast<std::ptrdiff_t>(r - a.size()));
  std::copy(b.begin(), b.end(), pb.begin() + static_cast<std::ptrdiff_t>(r - b.size()));
  p.out.resize(r);
  for (std::size_t i = 0; i < r; ++i) {
    if (pa[i] != pb[i] && pa[i] != 1 && pb[i] != 1) {
      throw DimensionError(std::string(op) + ": cannot broadcast " + shape_str(a) + " with " +
                           shape_str(b));
    }
    p.out[i] = std::max(pa[i], pb[i]);
  }
  auto sa = contiguous_strides(pa), sb = contiguous_strides(pb);
  p.stride_a.resize(r);
  p.stride_b.resize(r);
  for (std::size_t i = 0; i < r; ++i) {
    p.stride_a[i] = pa[i] == 1 ? 0 : sa[i];
    p.stride_b[i] = pb[i] == 1 ? 0 : sb[i];
  }
  return p;
}

/// Calls fn(out_index, a_index, b_index) for every output element.
template <class Fn>
void for_each_broadcast(const BroadcastPlan& p, Fn&& fn) {
  const std::size_t n = numel_of(p.out);
  if (p.same) {
    for (std::size_t i = 0; i < n; ++i) fn(i, i, i);
    return;
  }
  const std::size_t r = p.out.size();
  std::vector<std::size_t> idx(r, 0);
  std::size_t ia = 0, ib = 0;
  for (std::size_t i = 0; i < n; ++i) {
    fn(i, ia, ib);
    for (std::size_t d = r; d-- > 0;) {
      ++idx[d];
      ia += p.stride_a[d];
      ib += p.stride_b[d];
      if (idx[d] < p.out[d]) break;
      ia -= p.stride_a[d] * p.out[d];
      ib -= p.stride_b[d] * p.out[d];
      idx[d] = 0;
    }
  }
}

template <class Fwd, class DA, class DB>
Tensor binary(Tape& tape, const Tensor& a, const Tensor& b, const char* op, Fwd fwd, DA da,
              DB db) {
  auto plan = plan_broadcast(a.shape(), b.shape(), op);
  std::vector<double> out(numel_of(plan.out));
  const auto A = a.data();
  const auto B = b.data();
  for_each_broadcast(plan, [&](std::size_t i, std::size_t ia, std::size_t ib) {
    out[i] = fwd(A[ia], B[ib]);
  });
  return finish(tape, Tensor(plan.out, std::move(out)), op, any_requires_grad({&a, &b}),
                [a, b, plan, da, db](Tensor o) {
                  return [a, b, plan, da, db, o]() mutable {
                    if (!o.has_grad()) return;
                    const auto g = o.grad();
                    const auto A = a.data();
                    const auto B = b.data();
                    const bool ga = a.requires_grad(), gb = b.requires_grad();
                    std::span<double> GA, GB;
                    if (ga) GA = a.grad_mut();
                    if (gb) GB = b.grad_mut();
                    for_each_broadcast(plan, [&](std::size_t i, std::size_t ia, std::size_t ib) {
                      if (ga) GA[ia] += g[i] * da(A[ia], B[ib]);
                      if (gb) GB[ib] += g[i] * db(A[ia], B[ib]);
                    });
                  };
                });
}

template <class Fwd, class Deriv>
Tensor unary(Tape& tape, const Tensor& x, const char* op, Fwd fwd, Deriv deriv) {
  const auto X = x.data();
  std::vector<double> out(X.size());
  for (std::size_t i = 0; i < X.size(); ++i) out[i] = fwd(X[i]);
  return finish(tape, Tensor(x.shape(), std::move(out)), op, x.requires_grad(),
                [x, deriv](Tensor o) {
                  return [x, deriv, o]() mutable {
                    if (!o.has_grad()) return;
                    const auto g = o.grad();
                    const auto X = x.data();
                    const auto Y = o.data();
                    auto G = x.grad_mut();
                    for (std::size_t i = 0; i < X.size(); ++i) G[i] += g[i] * deriv(X[i], Y[i]);
                  };
                });
}

inline std::size_t normalize_axis(long axis, std::size_t rank, const char* op) {
  const long r = static_cast<long>(rank);
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) {
    throw DimensionError(std::string(op) + ": axis " + std::to_string(axis) + " out of range for rank " +
                         std::to_string(rank));
  }
  return static_cast<std::size_t>(axis);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise

inline Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
  return detail::binary(
      tape, a, b, "add", [](double x, double y) { return x + y; },
      [](double, double) { return 1.0; }, [](double, double) { return 1.0; });
}

inline Tensor sub(Tape& tape, const Tensor& a, const Tensor& b) {
  return detail::binary(
      tape, a, b, "sub", [](double x, double y) { return x - y; },
      [](double, double) { return 1.0; }, [](double, double) { return -1.0; });
}

inline Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) {
  return detail::binary(
      tape, a, b, "mul", [](double x, double y) { return x * y; },
      [](double, double y) { return y; }, [](double x, double) { return x; });
}

inline Tensor scale(Tape& tape, const Tensor& x, double s) {
  return detail::unary(
      tape, x, "scale", [s](double v) { return v * s; }, [s](double, double) { return s; });
}

inline Tensor add_scalar(Tape& tape, const Tensor& x, double s) {
  return detail::unary(
      tape, x, "add_scalar", [s](double v) { return v + s; }, [](double, double) { return 1.0; });
}

inline Tensor abs(Tape& tape, const Tensor& x) {
  return detail::unary(
      tape, x, "abs", [](double v) { return std::fabs(v); },
      [](double v, double) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); });
}

inline Tensor exp(Tape& tape, const Tensor& x) {
  return detail::unary(
      tape, x, "exp", [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

inline Tensor square(Tape& tape, const Tensor& x) {
  return detail::unary(
      tape, x, "square", [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

// ---------------------------------------------------------------------------
// Activations

inline constexpr double kLeakySlope = 0.2;

enum class Activation { Relu, LeakyRelu, Tanh, Sigmoid };

inline Tensor relu(Tape& tape, const Tensor& x) {
  return detail::unary(
      tape, x, "relu", [](double v) { return v > 0 ? v : 0.0; },
      [](double v, double) { return v > 0 ? 1.0 : 0.0; });
}

inline Tensor leaky_relu(Tape& tape, const Tensor& x, double slope = kLeakySlope) {
  return detail::unary(
      tape, x, "leaky_relu", [slope](double v) { return v > 0 ? v : slope * v; },
      [slope](double v, double) { return v > 0 ? 1.0 : slope; });
}

inline Tensor tanh(Tape& tape, const Tensor& x) {
  return detail::unary(
      tape, x, "tanh", [](double v) { return std::tanh(v); },
      [](double, double y) { return 1.0 - y * y; });
}

inline Tensor sigmoid(Tape& tape, const Tensor& x) {
  return detail::unary(
      tape, x, "sigmoid",
      [](double v) {
        if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

inline Tensor activation(Tape& tape, const Tensor& x, Activation kind) {
  switch (kind) {
    case Activation::Relu: return relu(tape, x);
    case Activation::LeakyRelu: return leaky_relu(tape, x);
    case Activation::Tanh: return tanh(tape, x);
    case Activation::Sigmoid: return sigmoid(tape, x);
  }
  return x;
}

// ---------------------------------------------------------------------------
// Reductions

inline Tensor sum(Tape& tape, const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  return detail::finish(tape, Tensor::scalar(s), "sum", x.requires_grad(), [x](Tensor o) {
    return [x, o]() mutable {
      if (!o.has_grad()) return;
      const double g = o.grad()[0];
      for (double& gx : x.grad_mut()) gx += g;
    };
  });
}

inline Tensor mean(Tape& tape, const Tensor& x) {
  return scale(tape, sum(tape, x), 1.0 / static_cast<double>(x.numel()));
}

/// Mean of squared differences over all elements.
inline Tensor mse(Tape& tape, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError("mse: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  const auto A = a.data(), B = b.data();
  const double n = static_cast<double>(A.size());
  double s = 0.0;
  for (std::size_t i = 0; i < A.size(); ++i) {
    const double d = A[i] - B[i];
    s += d * d;
  }
  return detail::finish(tape, Tensor::scalar(s / n), "mse", detail::any_requires_grad({&a, &b}),
                        [a, b, n](Tensor o) {
                          return [a, b, n, o]() mutable {
                            if (!o.has_grad()) return;
                            const double g = o.grad()[0] * 2.0 / n;
                            const auto A = a.data(), B = b.data();
                            if (a.requires_grad()) {
                              auto G = a.grad_mut();
                              for (std::size_t i = 0; i < A.size(); ++i) G[i] += g * (A[i] - B[i]);
                            }
                            if (b.requires_grad()) {
                              auto G = b.grad_mut();
                              for (std::size_t i = 0; i < A.size(); ++i) G[i] -= g * (A[i] - B[i]);
                            }
                          };
                        });
}

// ---------------------------------------------------------------------------
// Shape manipulation

inline Tensor reshape(Tape& tape, const Tensor& x, Shape shape) {
  if (numel_of(shape) != x.numel()) {
    throw DimensionError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  }
  return detail::finish(tape, Tensor(std::move(shape), x.vec()), "reshape", x.requires_grad(),
                        [x](Tensor o) {
                          return [x, o]() mutable {
                            if (!o.has_grad()) return;
                            const auto g = o.grad();
                            auto G = x.grad_mut();
                            for (std::size_t i = 0; i < g.size(); ++i) G[i] += g[i];
                          };
                        });
}

/// Swaps two axes (materialized copy).
inline Tensor transpose(Tape& tape, const Tensor& x, long axis0, long axis1) {
  const std::size_t r = x.rank();
  const auto d0 = detail::normalize_axis(axis0, r, "transpose");
  const auto d1 = detail::normalize_axis(axis1, r, "transpose");
  Shape out_shape = x.shape();
  std::swap(out_shape[d0], out_shape[d1]);
  auto in_strides = detail::contiguous_strides(x.shape());
  std::swap(in_strides[d0], in_strides[d1]);
  // Gather plan: output element i reads input offset src[i].
  std::vector<std::size_t> src(x.numel());
  {
    std::vector<std::size_t> idx(r, 0);
    std::size_t off = 0;
    for (std::size_t i = 0; i < src.size(); ++i) {
      src[i] = off;
      for (std::size_t d = r; d-- > 0;) {
        ++idx[d];
        off += in_strides[d];
        if (idx[d] < out_shape[d]) break;
        off -= in_strides[d] * out_shape[d];
        idx[d] = 0;
      }
    }
  }
  std::vector<double> out(x.numel());
  const auto X = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = X[src[i]];
  return detail::finish(tape, Tensor(out_shape, std::move(out)), "transpose", x.requires_grad(),
                        [x, src = std::move(src)](Tensor o) {
                          return [x, src, o]() mutable {
                            if (!o.has_grad()) return;
                            const auto g = o.grad();
                            auto G = x.grad_mut();
                            for (std::size_t i = 0; i < g.size(); ++i) G[src[i]] += g[i];
                          };
                        });
}

/// Concatenates along `axis`; all other dims must agree.
inline Tensor concat(Tape& tape, const std::vector<Tensor>& xs, long axis) {
  if (xs.empty()) throw DimensionError("concat: empty input list");
  const std::size_t r = xs.front().rank();
  const auto ax = detail::normalize_axis(axis, r, "concat");
  Shape out_shape = xs.front().shape();
  out_shape[ax] = 0;
  bool needs = false;
  for (const auto& t : xs) {
    if (t.rank() != r) throw DimensionError("concat: rank mismatch");
    for (std::size_t d = 0; d < r; ++d) {
      if (d != ax && t.dim(d) != xs.front().dim(d)) {
        throw DimensionError("concat: off-axis mismatch " + shape_str(xs.front().shape()) + " vs " +
                             shape_str(t.shape()));
      }
    }
    out_shape[ax] += t.dim(ax);
    needs = needs || t.requires_grad();
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < ax; ++d) outer *= out_shape[d];
  for (std::size_t d = ax + 1; d < r; ++d) inner *= out_shape[d];
  const std::size_t out_row = out_shape[ax] * inner;
  std::vector<double> out(numel_of(out_shape));
  std::size_t col = 0;
  for (const auto& t : xs) {
    const std::size_t w = t.dim(ax) * inner;
    const auto X = t.data();
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(X.begin() + static_cast<std::ptrdiff_t>(o * w), w,
                  out.begin() + static_cast<std::ptrdiff_t>(o * out_row + col));
    }
    col += w;
  }
  return detail::finish(tape, Tensor(out_shape, std::move(out)), "concat", needs,
                        [xs, outer, inner, ax, out_row](Tensor o) {
                          return [xs, outer, inner, ax, out_row, o]() mutable {
                            if (!o.has_grad()) return;
                            const auto g = o.grad();
                            std::size_t col = 0;
                            for (auto t : xs) {
                              const std::size_t w = t.dim(ax) * inner;
                              if (t.requires_grad()) {
                                auto G = t.grad_mut();
                                for (std::size_t k = 0; k < outer; ++k) {
                                  for (std::size_t j = 0; j < w; ++j) G[k * w + j] += g[k * out_row + col + j];
                                }
                              }
                              col += w;
                            }
                          };
                        });
}

/// Contiguous sub-range [start, start+length) along `axis`.
inline Tensor slice(Tape& tape, const Tensor& x, long axis, std::size_t start, std::size_t length) {
  const std::size_t r = x.rank();
  const auto ax = detail::normalize_axis(axis, r, "slice");
  if (length == 0 || start + length > x.dim(ax)) {
    throw DimensionError("slice: range [" + std::to_string(start) + ", " + std::to_string(start + length) +
                         ") outside axis of size " + std::to_string(x.dim(ax)));
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < ax; ++d) outer *= x.dim(d);
  for (std::size_t d = ax + 1; d < r; ++d) inner *= x.dim(d);
  Shape out_shape = x.shape();
  out_shape[ax] = length;
  const std::size_t in_row = x.dim(ax) * inner, w = length * inner, off = start * inner;
  std::vector<double> out(outer * w);
  const auto X = x.data();
  for (std::size_t o = 0; o < outer; ++o) {
    std::copy_n(X.begin() + static_cast<std::ptrdiff_t>(o * in_row + off), w,
                out.begin() + static_cast<std::ptrdiff_t>(o * w));
  }
  return detail::finish(tape, Tensor(out_shape, std::move(out)), "slice", x.requires_grad(),
                        [x, outer, in_row, w, off](Tensor o) {
                          return [x, outer, in_row, w, off, o]() mutable {
                            if (!o.has_grad()) return;
                            const auto g = o.grad();
                            auto G = x.grad_mut();
                            for (std::size_t k = 0; k < outer; ++k) {
                              for (std::size_t j = 0; j < w; ++j) G[k * in_row + off + j] += g[k * w + j];
                            }
                          };
                        });
}

/// Splits into equal chunks along `axis`.
inline std::vector<Tensor> split(Tape& tape, const Tensor& x, long axis, std::size_t chunks) {
  const auto ax = detail::normalize_axis(axis, x.rank(), "split");
  if (chunks == 0 || x.dim(ax) % chunks != 0) {
    throw DimensionError("split: axis of size " + std::to_string(x.dim(ax)) + " not divisible into " +
                         std::to_string(chunks));
  }
  const std::size_t len = x.dim(ax) / chunks;
  std::vector<Tensor> parts;
  for (std::size_t i = 0; i < chunks; ++i) parts.push_back(slice(tape, x, axis, i * len, len));
  return parts;
}

// ---------------------------------------------------------------------------
// Dense algebra

/// a[m,k]·b[k,n], or batched a[B,m,k]·b[B,k,n] / a[B,m,k]·b[k,n].
inline Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b) {
  const bool batched = a.rank() == 3;
  const bool shared_b = b.rank() == 2;
  if (!((a.rank() == 2 && b.rank() == 2) || (batched && (b.rank() == 3 || shared_b)))) {
    throw DimensionError("matmul: unsupported ranks " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  const std::size_t nb = batched ? a.dim(0) : 1;
  const std::size_t m = a.dim(a.rank() - 2), k = a.dim(a.rank() - 1);
  const std::size_t kb = b.dim(b.rank() - 2), n = b.dim(b.rank() - 1);
  if (k != kb || (batched && !shared_b && b.dim(0) != nb)) {
    throw DimensionError("matmul: inner dimensions disagree for " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
  }
  Shape out_shape = batched ? Shape{nb, m, n} : Shape{m, n};
  std::vector<double> out(nb * m * n);
  const double* A = a.data().data();
  const double* Bp = b.data().data();
  for (std::size_t i = 0; i < nb; ++i) {
    const double* bi = shared_b ? Bp : Bp + i * k * n;
    detail::mmap(out.data() + i * m * n, m, n).noalias() =
        detail::cmap(A + i * m * k, m, k) * detail::cmap(bi, k, n);
  }
  return detail::finish(
      tape, Tensor(out_shape, std::move(out)), "matmul", detail::any_requires_grad({&a, &b}),
      [a, b, nb, m, k, n, shared_b](Tensor o) {
        return [a, b, nb, m, k, n, shared_b, o]() mutable {
          if (!o.has_grad()) return;
          const double* G = o.grad().data();
          const double* A = a.data().data();
          const double* Bp = b.data().data();
          double* GA = a.requires_grad() ? a.grad_mut().data() : nullptr;
          double* GB = b.requires_grad() ? b.grad_mut().data() : nullptr;
          for (std::size_t i = 0; i < nb; ++i) {
            const double* bi = shared_b ? Bp : Bp + i * k * n;
            auto g = detail::cmap(G + i * m * n, m, n);
            if (GA) detail::mmap(GA + i * m * k, m, k).noalias() += g * detail::cmap(bi, k, n).transpose();
            if (GB) {
              double* gbi = shared_b ? GB : GB + i * k * n;
              detail::mmap(gbi, k, n).noalias() += detail::cmap(A + i * m * k, m, k).transpose() * g;
            }
          }
        };
      });
}

/// Numerically stable softmax along `axis`.
inline Tensor softmax(Tape& tape, const Tensor& x, long axis = -1) {
  const auto ax = detail::normalize_axis(axis, x.rank(), "softmax");
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < ax; ++d) outer *= x.dim(d);
  for (std::size_t d = ax + 1; d < x.rank(); ++d) inner *= x.dim(d);
  const std::size_t n = x.dim(ax);
  const auto X = x.data();
  std::vector<double> out(X.size());
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * n * inner + in;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < n; ++j) mx = std::max(mx, X[base + j * inner]);
      double z = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        const double e = std::exp(X[base + j * inner] - mx);
        out[base + j * inner] = e;
        z += e;
      }
      for (std::size_t j = 0; j < n; ++j) out[base + j * inner] /= z;
    }
  }
  return detail::finish(tape, Tensor(x.shape(), std::move(out)), "softmax", x.requires_grad(),
                        [x, outer, inner, n](Tensor o) {
                          return [x, outer, inner, n, o]() mutable {
                            if (!o.has_grad()) return;
                            const auto g = o.grad();
                            const auto Y = o.data();
                            auto G = x.grad_mut();
                            for (std::size_t k = 0; k < outer; ++k) {
                              for (std::size_t in = 0; in < inner; ++in) {
                                const std::size_t base = k * n * inner + in;
                                double dot = 0.0;
                                for (std::size_t j = 0; j < n; ++j) dot += g[base + j * inner] * Y[base + j * inner];
                                for (std::size_t j = 0; j < n; ++j) {
                                  const std::size_t q = base + j * inner;
                                  G[q] += Y[q] * (g[q] - dot);
                                }
                              }
                            }
                          };
                        });
}

/// x[..., n]·wᵀ + b with w[m, n], b[m]. `bias` may be undefined.
inline Tensor linear(Tape& tape, const Tensor& x, const Tensor& w, const Tensor& bias) {
  if (x.rank() < 1 || w.rank() != 2 || x.dim(x.rank() - 1) != w.dim(1) ||
      (bias.defined() && (bias.rank() != 1 || bias.dim(0) != w.dim(0)))) {
    throw DimensionError("linear: incompatible shapes x" + shape_str(x.shape()) + " w" + shape_str(w.shape()) +
                         (bias.defined() ? " b" + shape_str(bias.shape()) : std::string()));
  }
  const std::size_t n = w.dim(1), m = w.dim(0), rows = x.numel() / n;
  Shape out_shape = x.shape();
  out_shape.back() = m;
  std::vector<double> out(rows * m);
  auto Y = detail::mmap(out.data(), rows, m);
  Y.noalias() = detail::cmap(x.data().data(), rows, n) * detail::cmap(w.data().data(), m, n).transpose();
  if (bias.defined()) {
    const auto bv = bias.data();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < m; ++j) out[r * m + j] += bv[j];
  }
  return detail::finish(
      tape, Tensor(out_shape, std::move(out)), "linear", detail::any_requires_grad({&x, &w, &bias}),
      [x, w, bias, n, m, rows](Tensor o) {
        return [x, w, bias, n, m, rows, o]() mutable {
          if (!o.has_grad()) return;
          auto g = detail::cmap(o.grad().data(), rows, m);
          if (x.requires_grad())
            detail::mmap(x.grad_mut().data(), rows, n).noalias() += g * detail::cmap(w.data().data(), m, n);
          if (w.requires_grad())
            detail::mmap(w.grad_mut().data(), m, n).noalias() +=
                g.transpose() * detail::cmap(x.data().data(), rows, n);
          if (bias.defined() && bias.requires_grad()) {
            auto gb = bias.grad_mut();
            const auto gr = o.grad();
            for (std::size_t r = 0; r < rows; ++r)
              for (std::size_t j = 0; j < m; ++j) gb[j] += gr[r * m + j];
          }
        };
      });
}

}  // namespace avpred::ad
