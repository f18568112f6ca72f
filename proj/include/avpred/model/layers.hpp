#pragma once

#include <string>
#include <vector>

#include "avpred/model/params.hpp"

namespace avpred::model {

using ad::Activation;
using ad::Conv2dOptions;
using ad::NormMode;
using ad::Tape;

struct Conv2d {
  Tensor weight;  // [Cout, Cin, kh, kw]
  Tensor bias;    // [Cout] or undefined
  Conv2dOptions opt;

  Conv2d() = default;
  Conv2d(ParamStore& ps, const std::string& name, std::size_t cin, std::size_t cout, std::size_t kh, std::size_t kw,
         Conv2dOptions o, bool with_bias, Rng& rng)
      : opt(o) {
    const std::size_t fan_in = cin * kh * kw;
    weight = ps.add_param(name + ".weight", fan_in_uniform({cout, cin, kh, kw}, fan_in, rng));
    if (with_bias) bias = ps.add_param(name + ".bias", fan_in_uniform({cout}, fan_in, rng));
  }

  Tensor operator()(Tape& tape, const Tensor& x) const { return ad::conv2d(tape, x, weight, bias, opt); }
};

struct Deconv2d {
  Tensor weight;  // [Cin, Cout, kh, kw]
  Tensor bias;
  Conv2dOptions opt;

  Deconv2d() = default;
  Deconv2d(ParamStore& ps, const std::string& name, std::size_t cin, std::size_t cout, std::size_t k,
           Conv2dOptions o, bool with_bias, Rng& rng)
      : opt(o) {
    const std::size_t fan_in = cout * k * k;
    weight = ps.add_param(name + ".weight", fan_in_uniform({cin, cout, k, k}, fan_in, rng));
    if (with_bias) bias = ps.add_param(name + ".bias", fan_in_uniform({cout}, fan_in, rng));
  }

  Tensor operator()(Tape& tape, const Tensor& x) const { return ad::deconv2d(tape, x, weight, bias, opt); }
};

struct BatchNorm {
  Tensor gamma, beta, running_mean, running_var;

  BatchNorm() = default;
  BatchNorm(ParamStore& ps, const std::string& name, std::size_t channels) {
    gamma = ps.add_param(name + ".gamma", Tensor::ones({channels}));
    beta = ps.add_param(name + ".beta", Tensor::zeros({channels}));
    running_mean = ps.add_buffer(name + ".running_mean", Tensor::zeros({channels}));
    running_var = ps.add_buffer(name + ".running_var", Tensor::ones({channels}));
  }

  Tensor operator()(Tape& tape, const Tensor& x, NormMode mode) const {
    return ad::batch_norm(tape, x, gamma, beta, running_mean, running_var, mode);
  }
};

struct Linear {
  Tensor weight;  // [out, in]
  Tensor bias;    // [out]

  Linear() = default;
  Linear(ParamStore& ps, const std::string& name, std::size_t in, std::size_t out, Rng& rng) {
    weight = ps.add_param(name + ".weight", fan_in_uniform({out, in}, in, rng));
    bias = ps.add_param(name + ".bias", fan_in_uniform({out}, in, rng));
  }

  Tensor operator()(Tape& tape, const Tensor& x) const { return ad::linear(tape, x, weight, bias); }
};

/// Convolution followed by batch norm and an activation. The convolution
/// carries no bias since batch norm would cancel it.
struct ConvBnAct {
  Conv2d conv;
  BatchNorm bn;
  Activation act = Activation::Relu;

  ConvBnAct() = default;
  ConvBnAct(ParamStore& ps, const std::string& name, std::size_t cin, std::size_t cout, std::size_t kh,
            std::size_t kw, Conv2dOptions o, Activation a, Rng& rng)
      : conv(ps, name + ".conv", cin, cout, kh, kw, o, false, rng), bn(ps, name + ".bn", cout), act(a) {}

  Tensor operator()(Tape& tape, const Tensor& x, NormMode mode) const {
    return ad::activation(tape, bn(tape, conv(tape, x), mode), act);
  }
};

struct LstmState {
  std::vector<Tensor> hidden;
  std::vector<Tensor> cell;
};

/// One convolutional LSTM layer. Gates i, f, o, g come from a single 3×3
/// convolution over [x, h] split along channels in that order.
struct ConvLstmCell {
  Conv2d gates;
  std::size_t hidden = 0;

  ConvLstmCell() = default;
  ConvLstmCell(ParamStore& ps, const std::string& name, std::size_t in, std::size_t hid, Rng& rng)
      : gates(ps, name + ".gates", in + hid, 4 * hid, 3, 3, Conv2dOptions::uniform(1, 1), true, rng), hidden(hid) {}

  std::pair<Tensor, Tensor> operator()(Tape& tape, const Tensor& x, const Tensor& h, const Tensor& c) const {
    if (h.shape() != c.shape() || h.dim(1) != hidden || h.dim(0) != x.dim(0) || h.dim(2) != x.dim(2) ||
        h.dim(3) != x.dim(3))
      throw DimensionError("convlstm: state " + shape_str(h.shape()) + " does not fit input " + shape_str(x.shape()));
    const auto z = gates(tape, ad::concat(tape, {x, h}, 1));
    const auto parts = ad::split(tape, z, 1, 4);
    const auto i = ad::sigmoid(tape, parts[0]);
    const auto f = ad::sigmoid(tape, parts[1]);
    const auto o = ad::sigmoid(tape, parts[2]);
    const auto g = ad::tanh(tape, parts[3]);
    const auto c_next = ad::add(tape, ad::mul(tape, f, c), ad::mul(tape, i, g));
    const auto h_next = ad::mul(tape, o, ad::tanh(tape, c_next));
    return {h_next, c_next};
  }
};

}  // namespace avpred::model
