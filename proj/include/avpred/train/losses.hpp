#pragma once

#include <vector>

#include "avpred/core/autodiff.hpp"

namespace avpred::train {

using ad::Tape;
using ad::Tensor;

namespace detail {
inline void check_lengths(const std::vector<Tensor>& a, const std::vector<Tensor>& b, const char* op) {
  if (a.empty() || a.size() != b.size())
    throw DimensionError(std::string(op) + ": " + std::to_string(a.size()) + " predictions vs " +
                         std::to_string(b.size()) + " targets");
}

inline Tensor mean_mse(Tape& tape, const std::vector<Tensor>& pred, const std::vector<Tensor>& target,
                       const char* op) {
  check_lengths(pred, target, op);
  Tensor total = ad::mse(tape, pred[0], target[0]);
  for (std::size_t i = 1; i < pred.size(); ++i) total = ad::add(tape, total, ad::mse(tape, pred[i], target[i]));
  return ad::scale(tape, total, 1.0 / static_cast<double>(pred.size()));
}
}  // namespace detail

/// Mean over frames of the per-frame flow MSE.
inline Tensor loss_flow(Tape& tape, const std::vector<Tensor>& pred, const std::vector<Tensor>& target) {
  return detail::mean_mse(tape, pred, target, "loss_flow");
}

/// Mean over frames of the per-frame image MSE.
inline Tensor loss_image(Tape& tape, const std::vector<Tensor>& pred, const std::vector<Tensor>& target) {
  return detail::mean_mse(tape, pred, target, "loss_image");
}

/// Edge-aware weights exp(-(|dx V| + |dy V|) summed over channels) as [B,1,H,W].
inline Tensor edge_weights(const Tensor& frame) {
  Tape quiet(false);
  const auto g = ad::add(quiet, ad::abs(quiet, ad::diff_x(quiet, frame)), ad::abs(quiet, ad::diff_y(quiet, frame)));
  const std::size_t B = frame.dim(0), C = frame.dim(1), P = frame.dim(2) * frame.dim(3);
  std::vector<double> w(B * P, 0.0);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t p = 0; p < P; ++p) w[b * P + p] += g[(b * C + c) * P + p];
  for (auto& v : w) v = std::exp(-v);
  return Tensor({B, 1, frame.dim(2), frame.dim(3)}, std::move(w));
}

/// Per pixel (|dx F| + |dy F| over flow channels) * edge weight of the
/// ground-truth frame, averaged over pixels and frames. Forward differences
/// are zero at the far edge.
inline Tensor loss_smooth(Tape& tape, const std::vector<Tensor>& flows, const std::vector<Tensor>& frames) {
  detail::check_lengths(flows, frames, "loss_smooth");
  Tensor total;
  for (std::size_t i = 0; i < flows.size(); ++i) {
    const auto& f = flows[i];
    const auto grad = ad::add(tape, ad::abs(tape, ad::diff_x(tape, f)), ad::abs(tape, ad::diff_y(tape, f)));
    const double pixels = static_cast<double>(f.dim(0) * f.dim(2) * f.dim(3));
    const auto term = ad::scale(tape, ad::sum(tape, ad::mul(tape, grad, edge_weights(frames[i]))), 1.0 / pixels);
    total = i == 0 ? term : ad::add(tape, total, term);
  }
  return ad::scale(tape, total, 1.0 / static_cast<double>(flows.size()));
}

}  // namespace avpred::train
