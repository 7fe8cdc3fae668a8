// Copyright 2026 The UniAS Authors
// SPDX-License-Identifier: Apache-2.0

#include "unias/tensor.hpp"

#include <sstream>

namespace unias {

std::int64_t numel(const Shape& shape) {
  std::int64_t n = 1;
  for (std::int64_t e : shape) n *= e;
  return n;
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

namespace {

void check_extents(const Shape& shape) {
  for (std::int64_t e : shape)
    if (e <= 0) throw ShapeError("non-positive extent in shape " + to_string(shape));
}

}  // namespace

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape) {
  return full(std::move(shape), T(0));
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value) {
  check_extents(shape);
  auto impl = std::make_shared<TensorImpl<T>>();
  impl->data.assign(static_cast<std::size_t>(unias::numel(shape)), value);
  impl->shape = std::move(shape);
  return Tensor(std::move(impl));
}

template <typename T>
Tensor<T> Tensor<T>::from(Shape shape, std::vector<T> values) {
  check_extents(shape);
  if (unias::numel(shape) != static_cast<std::int64_t>(values.size()))
    throw ShapeError("value count " + std::to_string(values.size()) + " does not fill shape " +
                     to_string(shape));
  auto impl = std::make_shared<TensorImpl<T>>();
  impl->shape = std::move(shape);
  impl->data = std::move(values);
  return Tensor(std::move(impl));
}

template <typename T>
std::int64_t Tensor<T>::dim(std::int64_t axis) const {
  const std::int64_t r = rank();
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r)
    throw ShapeError("axis out of range for shape " + to_string(shape()));
  return impl_->shape[static_cast<std::size_t>(axis)];
}

template <typename T>
T Tensor<T>::item() const {
  if (impl_->data.size() != 1)
    throw ShapeError("item() on non-scalar tensor of shape " + to_string(shape()));
  return impl_->data[0];
}

template <typename T>
Tensor<T> Tensor<T>::clone() const {
  return from(impl_->shape, impl_->data);
}

template <typename T>
Tensor<T> Tensor<T>::reshaped(Shape shape) const {
  return from(std::move(shape), impl_->data);
}

template <typename T>
void Tape<T>::backward(const Tensor<T>& loss) {
  if (loss.numel() != 1)
    throw NumericError("backward() requires a scalar loss, got shape " + to_string(loss.shape()));
  if (!loss.requires_grad())
    throw NumericError("backward() root is not recorded on the tape");
  loss.impl()->ensure_grad()[0] = T(1);
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    const auto& out = it->output;
    if (out->grad.empty()) continue;
    it->backward(out->grad);
  }
}

namespace detail {
template <typename T>
Tape<T>*& active_tape() {
  thread_local Tape<T>* tape = nullptr;
  return tape;
}
template Tape<float>*& active_tape<float>();
template Tape<double>*& active_tape<double>();
}  // namespace detail

template <typename T>
TapeGuard<T>::TapeGuard(Tape<T>& tape) : previous_(detail::active_tape<T>()) {
  detail::active_tape<T>() = &tape;
}

template <typename T>
TapeGuard<T>::~TapeGuard() {
  detail::active_tape<T>() = previous_;
}

template class Tensor<float>;
template class Tensor<double>;
template class Tape<float>;
template class Tape<double>;
template class TapeGuard<float>;
template class TapeGuard<double>;

}  // namespace unias
