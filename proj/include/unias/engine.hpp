// Copyright 2026 The UniAS Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "unias/tensor.hpp"

namespace unias::engine {

/// Per-level cosine-distance and MSE terms; `total` is their unweighted sum.
template <typename T>
struct LossBreakdown {
  std::vector<Tensor<T>> cosine;  // scalars, one per level
  std::vector<Tensor<T>> mse;
  Tensor<T> total;

  double cosine_sum() const;
  double mse_sum() const;
};

/// Reconstructions and targets are [B, C, H, W] (or [C, H, W]) per level.
/// The cosine term averages 1 − cos over all spatial positions.
template <typename T>
LossBreakdown<T> training_loss(const std::vector<Tensor<T>>& recon,
                               const std::vector<Tensor<T>>& target);

/// Per-pixel 1 − cos along channels of [C,h,w] maps, bilinearly resized to
/// height×width. Zero-norm pixels score 0.
Tensor<float> level_anomaly_map(const Tensor<float>& recon, const Tensor<float>& target,
                                std::int64_t height, std::int64_t width);

/// Pointwise product of equally shaped maps.
Tensor<float> aggregate_maps(const std::vector<Tensor<float>>& factors);

struct AnomalyMap {
  std::string image_id;
  std::vector<Tensor<float>> factors;  // upsampled per-level maps, [H,W]
  Tensor<float> final;                 // product of factors

  /// Image score as the map maximum; a convenience only.
  float image_score() const;
};

/// Builds the map from per-level recon/target pairs, using levels listed in
/// `levels` (1-based; empty means all).
AnomalyMap build_map(const std::vector<Tensor<float>>& recon,
                     const std::vector<Tensor<float>>& target, std::int64_t height,
                     std::int64_t width, const std::vector<int>& levels = {},
                     std::string image_id = "");

void export_ust(const std::filesystem::path& path, const Tensor<float>& map);
/// Min-max normalized 8-bit PGM plus `<path>.json` recording the bounds.
void export_pgm(const std::filesystem::path& path, const Tensor<float>& map);

}  // namespace unias::engine
