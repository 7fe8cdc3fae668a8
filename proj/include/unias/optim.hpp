// Copyright 2026 The UniAS Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "unias/tensor.hpp"

namespace unias {

/// Named learnable tensors in registration order. Names are hierarchical paths
/// such as "decoder/level3/mgg/branch2/conv0/weight" and must be unique.
template <typename T>
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Tensor<T> tensor;
  };

  /// Registers `value` as a parameter (requires_grad set) and returns the handle.
  Tensor<T> add(std::string name, Tensor<T> value);
  const Tensor<T>* find(const std::string& name) const;
  const std::vector<Entry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  std::int64_t total_elements() const;
  void zero_grad();

 private:
  std::vector<Entry> entries_;
};

struct AdamWOptions {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;
};

/// AdamW with decoupled weight decay and bias-corrected moments.
template <typename T>
class AdamW {
 public:
  AdamW(std::vector<Tensor<T>> params, AdamWOptions options);

  /// p ← p − lr·wd·p − lr·m̂/(√v̂ + eps). Parameters without a gradient are skipped
  /// but still decay.
  void step();
  void set_lr(double lr) { options_.lr = lr; }
  double lr() const { return options_.lr; }
  std::int64_t steps() const { return step_; }
  const AdamWOptions& options() const { return options_; }
  const std::vector<std::vector<T>>& first_moments() const { return m_; }
  const std::vector<std::vector<T>>& second_moments() const { return v_; }

 private:
  std::vector<Tensor<T>> params_;
  AdamWOptions options_;
  std::vector<std::vector<T>> m_;
  std::vector<std::vector<T>> v_;
  std::int64_t step_ = 0;
};

}  // namespace unias
