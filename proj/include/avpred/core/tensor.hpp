#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <utility>
#include <vector>

#include "avpred/core/error.hpp"

namespace avpred::ad {

using Shape = std::vector<std::size_t>;

inline std::size_t numel_of(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

namespace detail {

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until first accumulation
  bool requires_grad = false;
};

}  // namespace detail

/// Dense row-major float64 array with an optional gradient buffer.
///
/// Copies share storage: a Tensor is a handle. Values produced by ops are
/// never modified after creation; only leaves (parameters, running
/// statistics) are updated in place by optimizers and batch norm.
class Tensor {
 public:
  Tensor() = default;

  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false)
      : impl_(std::make_shared<detail::TensorImpl>()) {
    for (auto d : shape) {
      if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + shape_str(shape));
    }
    if (numel_of(shape) != data.size()) {
      throw DimensionError("data length " + std::to_string(data.size()) +
                           " does not match shape " + shape_str(shape));
    }
    impl_->shape = std::move(shape);
    impl_->data = std::move(data);
    impl_->requires_grad = requires_grad;
    if (requires_grad) impl_->grad.assign(impl_->data.size(), 0.0);
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    const auto n = numel_of(shape);
    return Tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
  }
  static Tensor full(Shape shape, double value, bool requires_grad = false) {
    const auto n = numel_of(shape);
    return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
  }
  static Tensor ones(Shape shape) { return full(std::move(shape), 1.0); }
  static Tensor scalar(double v, bool requires_grad = false) {
    return Tensor({1}, {v}, requires_grad);
  }

  bool defined() const { return static_cast<bool>(impl_); }
  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t dim(std::size_t i) const { return impl_->shape.at(i); }
  std::size_t numel() const { return impl_->data.size(); }

  std::span<const double> data() const { return impl_->data; }
  /// Mutable view; only for leaves (parameters, buffers, test fixtures).
  std::span<double> data_mut() const { return impl_->data; }
  const std::vector<double>& vec() const { return impl_->data; }

  double item() const {
    if (numel() != 1) throw DimensionError("item() on tensor of shape " + shape_str(shape()));
    return impl_->data[0];
  }
  double operator[](std::size_t i) const { return impl_->data[i]; }

  bool requires_grad() const { return impl_ && impl_->requires_grad; }
  void set_requires_grad(bool on) const { impl_->requires_grad = on; }

  bool has_grad() const { return !impl_->grad.empty(); }
  /// Gradient buffer, allocated (zero) on first access.
  std::span<double> grad_mut() const {
    if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), 0.0);
    return impl_->grad;
  }
  std::span<const double> grad() const {
    if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), 0.0);
    return impl_->grad;
  }
  void zero_grad() const {
    if (!impl_->grad.empty()) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
  }

  /// Deep copy with fresh storage (no gradient).
  Tensor clone() const { return Tensor(shape(), impl_->data, false); }

  /// Copy of entry i along the leading axis, with that axis dropped.
  Tensor slice0(std::size_t i) const {
    if (rank() == 0 || i >= dim(0)) throw DimensionError("slice0: index out of range for " + shape_str(shape()));
    Shape sub(shape().begin() + 1, shape().end());
    const std::size_t n = numel() / dim(0);
    return Tensor(sub, std::vector<double>(impl_->data.begin() + long(i * n), impl_->data.begin() + long((i + 1) * n)));
  }

  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

 private:
  std::shared_ptr<detail::TensorImpl> impl_;
};

/// Ordered record of backward rules for one forward pass.
///
/// A non-recording tape turns every op into a pure forward computation,
/// which is what inference and frozen sub-networks use.
class Tape {
 public:
  explicit Tape(bool recording = true) : recording_(recording) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return recording_; }
  std::size_t size() const { return entries_.size(); }
  bool consumed() const { return consumed_; }

  void record(std::function<void()> rule) {
    if (consumed_) throw TapeError("cannot record onto a tape after backward()");
    entries_.push_back(std::move(rule));
  }

  void run_backward() {
    if (consumed_) throw TapeError("backward() already called on this tape");
    consumed_ = true;
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) (*it)();
    entries_.clear();
  }

 private:
  std::vector<std::function<void()>> entries_;
  bool recording_;
  bool consumed_ = false;
};

/// Seeds d(loss)/d(loss) = 1 and replays the tape in reverse.
inline void backward(Tensor loss, Tape& tape) {
  if (loss.numel() != 1) {
    throw TapeError("backward() needs a scalar loss, got shape " + shape_str(loss.shape()));
  }
  if (tape.consumed()) throw TapeError("backward() already called on this tape");
  if (loss.requires_grad()) loss.grad_mut()[0] += 1.0;
  tape.run_backward();
}

namespace detail {

inline void check_finite(const Tensor& t, const char* op) {
  for (double v : t.data()) {
    if (!std::isfinite(v)) throw NumericError(std::string(op) + ": produced non-finite value");
  }
}

inline bool any_requires_grad(std::initializer_list<const Tensor*> inputs) {
  for (const Tensor* t : inputs) {
    if (t && t->defined() && t->requires_grad()) return true;
  }
  return false;
}

/// Finalizes an op output: finiteness check plus optional tape record.
/// `rule` maps the output handle to its backward closure.
template <class Rule>
Tensor finish(Tape& tape, Tensor out, const char* op, bool needs_grad, Rule&& rule) {
  check_finite(out, op);
  if (tape.recording() && needs_grad) {
    out.set_requires_grad(true);
    tape.record(std::forward<Rule>(rule)(out));
  }
  return out;
}

}  // namespace detail

}  // namespace avpred::ad
