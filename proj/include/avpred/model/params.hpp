#pragma once

#include <cmath>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "avpred/core/autodiff.hpp"

namespace avpred::model {

using ad::Shape;
using ad::Tensor;

/// Named parameter and buffer registry in stable registration order.
///
/// Parameters are gradient leaves updated by the optimizer; buffers hold
/// non-trainable state such as batch-norm running statistics. Both are
/// shared handles, so loading a checkpoint overwrites them in place.
class ParamStore {
 public:
  Tensor add_param(const std::string& name, Tensor init) {
    claim(name);
    init.set_requires_grad(true);
    params_.emplace_back(name, init);
    return init;
  }

  Tensor add_buffer(const std::string& name, Tensor init) {
    claim(name);
    buffers_.emplace_back(name, init);
    return init;
  }

  const std::vector<std::pair<std::string, Tensor>>& params() const { return params_; }
  const std::vector<std::pair<std::string, Tensor>>& buffers() const { return buffers_; }

  /// Parameters whose names start with `prefix`.
  std::vector<std::pair<std::string, Tensor>> params_with_prefix(const std::string& prefix) const {
    std::vector<std::pair<std::string, Tensor>> out;
    for (const auto& p : params_)
      if (p.first.rfind(prefix, 0) == 0) out.push_back(p);
    return out;
  }

  Tensor find(const std::string& name) const {
    for (const auto& group : {&params_, &buffers_})
      for (const auto& [n, t] : *group)
        if (n == name) return t;
    throw ConfigError("no parameter named '" + name + "'");
  }

  std::size_t param_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.second.numel();
    return n;
  }

  void zero_grad() const {
    for (const auto& p : params_) p.second.zero_grad();
  }

 private:
  void claim(const std::string& name) {
    if (!names_.emplace(name, 0).second) throw ConfigError("duplicate parameter name '" + name + "'");
  }

  std::vector<std::pair<std::string, Tensor>> params_;
  std::vector<std::pair<std::string, Tensor>> buffers_;
  std::map<std::string, int> names_;
};

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialization.
inline Tensor fan_in_uniform(Shape shape, std::size_t fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  return uniform_tensor(std::move(shape), -bound, bound, rng);
}

}  // namespace avpred::model
