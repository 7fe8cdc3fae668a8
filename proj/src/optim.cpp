// Copyright 2026 The UniAS Authors
// SPDX-License-Identifier: Apache-2.0

#include "unias/optim.hpp"

#include <cmath>

namespace unias {

template <typename T>
Tensor<T> ParamStore<T>::add(std::string name, Tensor<T> value) {
  if (find(name) != nullptr) throw std::invalid_argument("duplicate parameter name: " + name);
  value.set_requires_grad(true);
  entries_.push_back({std::move(name), value});
  return value;
}

template <typename T>
const Tensor<T>* ParamStore<T>::find(const std::string& name) const {
  for (const auto& e : entries_)
    if (e.name == name) return &e.tensor;
  return nullptr;
}

template <typename T>
std::int64_t ParamStore<T>::total_elements() const {
  std::int64_t n = 0;
  for (const auto& e : entries_) n += e.tensor.numel();
  return n;
}

template <typename T>
void ParamStore<T>::zero_grad() {
  for (auto& e : entries_) e.tensor.zero_grad();
}

template <typename T>
AdamW<T>::AdamW(std::vector<Tensor<T>> params, AdamWOptions options)
    : params_(std::move(params)), options_(options) {
  for (const auto& p : params_) {
    m_.emplace_back(p.values().size(), T(0));
    v_.emplace_back(p.values().size(), T(0));
  }
}

template <typename T>
void AdamW<T>::step() {
  ++step_;
  const double bc1 = 1.0 - std::pow(options_.beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(options_.beta2, static_cast<double>(step_));
  const T lr = static_cast<T>(options_.lr);
  const T decay = static_cast<T>(options_.lr * options_.weight_decay);
  const T b1 = static_cast<T>(options_.beta1), b2 = static_cast<T>(options_.beta2);
  const T inv_bc1 = static_cast<T>(1.0 / bc1);
  const T inv_sqrt_bc2 = static_cast<T>(1.0 / std::sqrt(bc2));
  const T eps = static_cast<T>(options_.eps);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i].values();
    auto& m = m_[i];
    auto& v = v_[i];
    const bool has_grad = params_[i].has_grad();
    const auto g = params_[i].grad();
    for (std::size_t j = 0; j < p.size(); ++j) {
      p[j] -= decay * p[j];
      if (!has_grad) continue;
      m[j] = b1 * m[j] + (T(1) - b1) * g[j];
      v[j] = b2 * v[j] + (T(1) - b2) * g[j] * g[j];
      const T m_hat = m[j] * inv_bc1;
      const T v_hat_sqrt = std::sqrt(v[j]) * inv_sqrt_bc2;
      p[j] -= lr * m_hat / (v_hat_sqrt + eps);
    }
  }
}

template class ParamStore<float>;
template class ParamStore<double>;
template class AdamW<float>;
template class AdamW<double>;

}  // namespace unias
