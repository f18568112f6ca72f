#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "avpred/core/tensor.hpp"

namespace avpred::ad {

/// |analytic - numeric| / max(|analytic|, |numeric|, floor). The floor keeps
/// coordinates whose true gradient vanishes from dividing noise by noise.
inline double relative_error(double analytic, double numeric, double floor = 1e-8) {
  return std::fabs(analytic - numeric) / std::max({std::fabs(analytic), std::fabs(numeric), floor});
}

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t coords_checked = 0;
  std::string worst;  // "<leaf>[<index>]" of the worst coordinate
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t coords_skipped = 0;  // straddled a kink (see kink_tol)
};

using ScalarFn = std::function<Tensor(Tape&)>;

/// Compares reverse-mode gradients of `f` w.r.t. each named leaf against
/// central differences. `max_coords` > 0 samples that many coordinates per
/// leaf (deterministically from `seed`); 0 checks every coordinate.
/// With `kink_tol` > 0, coordinates whose forward and backward one-sided
/// differences disagree by more than kink_tol are skipped and counted: a
/// ReLU/max-pool kink inside the stencil biases the central difference by
/// half that gap, so no finite difference can judge them. A wrong analytic
/// gradient still fails, because on smooth coordinates the two agree.
inline GradCheckReport gradient_check_leaves(const ScalarFn& f, std::vector<std::pair<std::string, Tensor>> leaves,
                                             double eps = 1e-5, std::size_t max_coords = 0,
                                             std::uint64_t seed = 0, double floor = 1e-8, double kink_tol = 0.0) {
  for (auto& [name, t] : leaves) {
    t.set_requires_grad(true);
    t.zero_grad();
  }
  {
    Tape tape;
    Tensor loss = f(tape);
    if (loss.numel() != 1) throw TapeError("gradient_check: function must be scalar-valued");
    backward(loss, tape);
  }
  auto eval = [&f]() {
    Tape quiet(false);
    return f(quiet).item();
  };
  GradCheckReport rep;
  const double base = kink_tol > 0.0 ? eval() : 0.0;
  std::mt19937_64 rng(seed);
  for (auto& [name, t] : leaves) {
    const std::vector<double> analytic(t.grad().begin(), t.grad().end());
    std::vector<std::size_t> coords(t.numel());
    for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = i;
    if (max_coords > 0 && coords.size() > max_coords) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(max_coords);
      std::sort(coords.begin(), coords.end());
    }
    auto data = t.data_mut();
    for (std::size_t i : coords) {
      const double orig = data[i];
      data[i] = orig + eps;
      const double up = eval();
      data[i] = orig - eps;
      const double down = eval();
      data[i] = orig;
      const double numeric = (up - down) / (2.0 * eps);
      if (kink_tol > 0.0 && relative_error((up - base) / eps, (base - down) / eps, floor) > kink_tol) {
        ++rep.coords_skipped;
        continue;
      }
      const double err = relative_error(analytic[i], numeric, floor);
      ++rep.coords_checked;
      if (rep.worst.empty() || err > rep.max_rel_error) {
        rep.max_rel_error = err;
        rep.worst = name + "[" + std::to_string(i) + "]";
        rep.worst_analytic = analytic[i];
        rep.worst_numeric = numeric;
      }
    }
  }
  return rep;
}

/// Max relative error of d f(x)/dx over all coordinates of x.
inline double gradient_check(const std::function<Tensor(Tape&, const Tensor&)>& f, Tensor x, double eps = 1e-5) {
  return gradient_check_leaves([&](Tape& tape) { return f(tape, x); }, {{"x", x}}, eps).max_rel_error;
}

}  // namespace avpred::ad
