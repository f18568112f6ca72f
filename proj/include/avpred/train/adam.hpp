#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "avpred/core/autodiff.hpp"

namespace avpred::train {

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Bias-corrected Adam over a fixed, named parameter list.
class Adam {
 public:
  using Named = std::vector<std::pair<std::string, ad::Tensor>>;

  Adam(Named params, AdamOptions opt) : params_(std::move(params)), opt_(opt) {
    for (const auto& [n, p] : params_) {
      m_.push_back(ad::Tensor::zeros(p.shape()));
      v_.push_back(ad::Tensor::zeros(p.shape()));
    }
  }

  void step() {
    for (const auto& [name, p] : params_)
      for (double g : p.grad())
        if (!std::isfinite(g)) throw NumericError("non-finite gradient in parameter '" + name + "'");
    ++t_;
    const double c1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(t_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
      const auto& p = params_[k].second;
      auto w = p.data_mut();
      const auto g = p.grad();
      auto m = m_[k].data_mut();
      auto v = v_[k].data_mut();
      for (std::size_t i = 0; i < w.size(); ++i) {
        m[i] = opt_.beta1 * m[i] + (1.0 - opt_.beta1) * g[i];
        v[i] = opt_.beta2 * v[i] + (1.0 - opt_.beta2) * g[i] * g[i];
        w[i] -= opt_.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + opt_.eps);
      }
    }
  }

  void zero_grad() const {
    for (const auto& [n, p] : params_) p.zero_grad();
  }

  /// Rescales gradients so their global L2 norm is at most `max_norm`;
  /// returns the norm before clipping.
  double clip_grad_norm(double max_norm) const {
    double sq = 0.0;
    for (const auto& [n, p] : params_)
      for (double g : p.grad()) sq += g * g;
    const double norm = std::sqrt(sq);
    if (max_norm > 0.0 && norm > max_norm) {
      const double s = max_norm / norm;
      for (const auto& [n, p] : params_)
        for (double& g : p.grad_mut()) g *= s;
    }
    return norm;
  }

  std::size_t steps() const { return t_; }
  void set_steps(std::size_t t) { t_ = t; }
  const AdamOptions& options() const { return opt_; }
  const Named& params() const { return params_; }
  const std::vector<ad::Tensor>& first_moments() const { return m_; }
  const std::vector<ad::Tensor>& second_moments() const { return v_; }

 private:
  Named params_;
  AdamOptions opt_;
  std::vector<ad::Tensor> m_, v_;
  std::size_t t_ = 0;
};

}  // namespace avpred::train
