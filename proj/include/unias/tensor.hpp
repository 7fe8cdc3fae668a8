// Copyright 2026 The UniAS Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace unias {

using Shape = std::vector<std::int64_t>;

std::int64_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

/// Raised when operand shapes are incompatible; the message carries both shapes.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised for unreadable, malformed, or inconsistent files and datasets.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised for numeric failures such as a NaN loss or a non-scalar backward root.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

template <typename T>
struct TensorImpl {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty until a gradient is accumulated
  bool requires_grad = false;

  std::vector<T>& ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), T(0));
    return grad;
  }
};

/// Dense row-major tensor handle. Copies share storage; use clone() for a deep copy.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(std::shared_ptr<TensorImpl<T>> impl) : impl_(std::move(impl)) {}

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, T value);
  static Tensor from(Shape shape, std::vector<T> values);
  static Tensor scalar(T value) { return from({}, {value}); }

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::int64_t rank() const { return static_cast<std::int64_t>(impl_->shape.size()); }
  /// Extent along `axis`; negative axes count from the back.
  std::int64_t dim(std::int64_t axis) const;
  std::int64_t numel() const { return static_cast<std::int64_t>(impl_->data.size()); }

  std::span<T> data() { return impl_->data; }
  std::span<const T> data() const { return impl_->data; }
  std::vector<T>& values() { return impl_->data; }
  const std::vector<T>& values() const { return impl_->data; }
  T item() const;

  bool requires_grad() const { return impl_->requires_grad; }
  Tensor& set_requires_grad(bool on) {
    impl_->requires_grad = on;
    return *this;
  }
  bool has_grad() const { return !impl_->grad.empty(); }
  std::span<const T> grad() const { return impl_->grad; }
  std::span<T> grad() { return impl_->grad; }
  void zero_grad() { impl_->grad.clear(); }

  /// Deep copy of the data, detached from any tape.
  Tensor clone() const;
  /// Same values reinterpreted with a new shape of equal element count (no tape record).
  Tensor reshaped(Shape shape) const;

  const std::shared_ptr<TensorImpl<T>>& impl() const { return impl_; }

 private:
  std::shared_ptr<TensorImpl<T>> impl_;
};

/// Ordered record of differentiable operations. Entries are appended in execution
/// order, so reverse traversal is a valid topological order.
template <typename T>
class Tape {
 public:
  using Backward = std::function<void(std::span<const T> out_grad)>;

  struct Entry {
    const char* name;
    std::shared_ptr<TensorImpl<T>> output;
    Backward backward;
  };

  void record(const char* name, std::shared_ptr<TensorImpl<T>> output, Backward backward) {
    entries_.push_back({name, std::move(output), std::move(backward)});
  }

  /// Seeds d(loss)/d(loss) = 1 and propagates to every tensor that requires grad.
  void backward(const Tensor<T>& loss);
  void clear() { entries_.clear(); }
  std::size_t size() const { return entries_.size(); }
  const std::vector<Entry>& entries() const { return entries_; }

  static Tape* active();

 private:
  std::vector<Entry> entries_;
};

/// Makes a tape the recording target for the current thread while in scope.
template <typename T>
class TapeGuard {
 public:
  explicit TapeGuard(Tape<T>& tape);
  ~TapeGuard();
  TapeGuard(const TapeGuard&) = delete;
  TapeGuard& operator=(const TapeGuard&) = delete;

 private:
  Tape<T>* previous_;
};

namespace detail {
template <typename T>
Tape<T>*& active_tape();
}  // namespace detail

template <typename T>
Tape<T>* Tape<T>::active() {
  return detail::active_tape<T>();
}

/// True when `inputs` should be recorded: a tape is active and some input needs grad.
template <typename T>
bool should_record(std::initializer_list<const Tensor<T>*> inputs) {
  if (Tape<T>::active() == nullptr) return false;
  for (const Tensor<T>* t : inputs)
    if (t->requires_grad()) return true;
  return false;
}

/// Accumulation target for an input's gradient, or nullptr when it needs none.
template <typename T>
std::vector<T>* grad_sink(const std::shared_ptr<TensorImpl<T>>& impl) {
  return impl->requires_grad ? &impl->ensure_grad() : nullptr;
}

}  // namespace unias
