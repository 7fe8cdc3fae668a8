// Copyright 2026 The UniAS Authors
// SPDX-License-Identifier: Apache-2.0

// Feature frontend: a frozen provider turns an image into a K-level pyramid of
// [C, H, W] maps with exact halving; a Gaussian filter smooths each level and
// the residual against the raw map is concatenated for the decoder input.

#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "unias/tensor.hpp"

namespace unias::features {

/// Normalized k×k Gaussian weights (row-major).
struct GaussianKernel {
  std::int64_t size = 3;
  double sigma = 1.0;
  std::vector<double> weights;

  /// Throws std::invalid_argument for an even or non-positive size.
  static GaussianKernel make(std::int64_t size = 3, double sigma = 1.0);
};

/// Depthwise smoothing with reflect padding over the last two axes; shape preserved.
template <typename T>
Tensor<T> gaussian_filter(const Tensor<T>& z, const GaussianKernel& kernel);

/// Level 1 is the highest resolution; each next level halves both extents.
struct FeaturePyramid {
  std::vector<Tensor<float>> levels;  // each [C_i, H_i, W_i]

  std::size_t size() const { return levels.size(); }
  /// Throws ShapeError unless the halving and rank invariants hold.
  void validate() const;
};

struct FilteredPyramid {
  FeaturePyramid filtered;      // z°_i: reconstruction targets
  FeaturePyramid concatenated;  // cat(z°_i, z°_i − raw_i): decoder input, 2·C_i channels
};

FilteredPyramid filter_and_concat(const FeaturePyramid& raw,
                                  const GaussianKernel& kernel = GaussianKernel::make());

/// Source of frozen multi-scale features.
class FeatureProvider {
 public:
  virtual ~FeatureProvider() = default;
  /// `image` is [3, H, W] in [0, 1]; `image_id` locates precomputed features when needed.
  virtual FeaturePyramid provide(const Tensor<float>& image, const std::string& image_id) const = 0;
  virtual std::vector<std::int64_t> channels() const = 0;
  std::size_t levels() const { return channels().size(); }
};

struct BackboneConfig {
  std::vector<std::int64_t> channels = {8, 16, 24, 32};
  std::uint64_t seed = 0;
};

/// Fixed-seed strided CNN: per level a 4×4 stride-2 convolution (pad 1) then GELU.
/// Its weights are never exposed to an optimizer.
class TinyBackbone final : public FeatureProvider {
 public:
  explicit TinyBackbone(BackboneConfig config = {});
  FeaturePyramid provide(const Tensor<float>& image, const std::string& image_id = "") const override;
  std::vector<std::int64_t> channels() const override { return config_.channels; }
  /// Read-only view of the frozen weights, for freeze checks.
  const std::vector<Tensor<float>>& weights() const { return weights_; }

 private:
  BackboneConfig config_;
  std::vector<Tensor<float>> weights_;
  std::vector<Tensor<float>> biases_;
};

/// Reads pyramids written by write_pyramid from `<root>/<image_id>/`.
class FileProvider final : public FeatureProvider {
 public:
  FileProvider(std::filesystem::path root, std::vector<std::int64_t> channels);
  FeaturePyramid provide(const Tensor<float>& image, const std::string& image_id) const override;
  std::vector<std::int64_t> channels() const override { return channels_; }

 private:
  std::filesystem::path root_;
  std::vector<std::int64_t> channels_;
};

/// Writes level_1.ust … level_K.ust and meta.json into `dir`.
void write_pyramid(const std::filesystem::path& dir, const FeaturePyramid& pyramid);
/// Reads a pyramid directory; DataError when meta.json and the tensors disagree.
FeaturePyramid read_pyramid(const std::filesystem::path& dir);

}  // namespace unias::features
