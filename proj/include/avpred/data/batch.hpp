#pragma once

#include <vector>

#include "avpred/data/scene.hpp"

namespace avpred::data {

/// B sequences stacked along a leading batch axis.
struct Batch {
  ad::Tensor frames;  // [B, T, C, H, W]
  ad::Tensor audio;   // [B, T, F, Tc]
  ad::Tensor flows;   // [B, T, 2, H, W]
  std::size_t seen = 0;

  std::size_t size() const { return frames.dim(0); }
  std::size_t length() const { return frames.dim(1); }

  /// Time step t of a [B, T, ...] array as a constant [B, ...] tensor.
  static ad::Tensor at(const ad::Tensor& x, std::size_t t) {
    const std::size_t B = x.dim(0), T = x.dim(1), inner = x.numel() / (B * T);
    if (t >= T) throw DimensionError("time index " + std::to_string(t) + " out of range");
    std::vector<double> out(B * inner);
    const auto src = x.data();
    for (std::size_t b = 0; b < B; ++b)
      std::copy_n(src.begin() + (b * T + t) * inner, inner, out.begin() + b * inner);
    ad::Shape shape{B};
    shape.insert(shape.end(), x.shape().begin() + 2, x.shape().end());
    return ad::Tensor(std::move(shape), std::move(out));
  }

  ad::Tensor frame(std::size_t t) const { return at(frames, t); }
  ad::Tensor flow(std::size_t t) const { return at(flows, t); }
  ad::Tensor clip(std::size_t t) const { return at(audio, t); }
};

inline ad::Tensor stack(const std::vector<ad::Tensor>& xs) {
  ad::Shape shape{xs.size()};
  shape.insert(shape.end(), xs.front().shape().begin(), xs.front().shape().end());
  std::vector<double> out;
  out.reserve(ad::numel_of(shape));
  for (const auto& x : xs) {
    if (x.shape() != xs.front().shape()) throw DimensionError("cannot batch sequences of different shapes");
    out.insert(out.end(), x.data().begin(), x.data().end());
  }
  return ad::Tensor(std::move(shape), std::move(out));
}

inline Batch make_batch(const std::vector<const Sequence*>& seqs, std::size_t seen) {
  if (seqs.empty()) throw DimensionError("empty batch");
  std::vector<ad::Tensor> f, a, fl;
  for (const auto* s : seqs) {
    f.push_back(s->frames);
    a.push_back(s->audio);
    fl.push_back(s->flows);
  }
  return {stack(f), stack(a), stack(fl), seen};
}

inline Batch make_batch(const Sequence& seq) { return make_batch({&seq}, seq.spec.seen); }

}  // namespace avpred::data
