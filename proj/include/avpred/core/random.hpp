#pragma once

#include <cstdint>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "avpred/core/tensor.hpp"

namespace avpred {

using Rng = std::mt19937_64;

inline std::string rng_state(const Rng& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

inline void restore_rng_state(Rng& rng, const std::string& state) {
  std::istringstream is(state);
  is >> rng;
  if (!is) throw std::invalid_argument("corrupt RNG state");
}

inline ad::Tensor uniform_tensor(ad::Shape shape, double lo, double hi, Rng& rng) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> v(ad::numel_of(shape));
  for (double& x : v) x = dist(rng);
  return ad::Tensor(std::move(shape), std::move(v));
}

inline ad::Tensor normal_tensor(ad::Shape shape, double stddev, Rng& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  std::vector<double> v(ad::numel_of(shape));
  for (double& x : v) x = dist(rng);
  return ad::Tensor(std::move(shape), std::move(v));
}

}  // namespace avpred
