// Copyright 2026 The UniAS Authors
// SPDX-License-Identifier: Apache-2.0

#include "unias/features.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

#include "json.hpp"
#include "unias/kernels.hpp"
#include "unias/ops.hpp"
#include "unias/tensor_io.hpp"

namespace unias::features {

GaussianKernel GaussianKernel::make(std::int64_t size, double sigma) {
  if (size <= 0 || size % 2 == 0)
    throw std::invalid_argument("Gaussian kernel size must be odd and positive, got " +
                                std::to_string(size));
  if (!(sigma > 0)) throw std::invalid_argument("Gaussian sigma must be positive");
  GaussianKernel k;
  k.size = size;
  k.sigma = sigma;
  const std::int64_t r = size / 2;
  double total = 0;
  for (std::int64_t i = -r; i <= r; ++i)
    for (std::int64_t j = -r; j <= r; ++j) {
      const double w = std::exp(-static_cast<double>(i * i + j * j) / (2 * sigma * sigma));
      k.weights.push_back(w);
      total += w;
    }
  for (double& w : k.weights) w /= total;
  return k;
}

template <typename T>
Tensor<T> gaussian_filter(const Tensor<T>& z, const GaussianKernel& kernel) {
  if (z.rank() < 2) throw ShapeError("gaussian_filter needs rank >= 2, got " + to_string(z.shape()));
  const std::int64_t h = z.dim(-2), w = z.dim(-1);
  if (h < kernel.size || w < kernel.size)
    throw ShapeError("gaussian_filter spatial extent smaller than kernel for " +
                     to_string(z.shape()));
  std::vector<T> taps(kernel.weights.begin(), kernel.weights.end());
  Tensor<T> out = Tensor<T>::zeros(z.shape());
  kernels::depthwise_filter_reflect<T>(z.numel() / (h * w), h, w, z.data().data(), taps.data(),
                                       kernel.size, out.data().data());
  return out;
}

template Tensor<float> gaussian_filter(const Tensor<float>&, const GaussianKernel&);
template Tensor<double> gaussian_filter(const Tensor<double>&, const GaussianKernel&);

void FeaturePyramid::validate() const {
  if (levels.empty()) throw ShapeError("feature pyramid has no levels");
  for (std::size_t i = 0; i < levels.size(); ++i) {
    if (levels[i].rank() != 3)
      throw ShapeError("pyramid level " + std::to_string(i + 1) + " must be [C,H,W], got " +
                       to_string(levels[i].shape()));
    if (i == 0) continue;
    const auto& prev = levels[i - 1].shape();
    const auto& cur = levels[i].shape();
    if (prev[1] != 2 * cur[1] || prev[2] != 2 * cur[2])
      throw ShapeError("pyramid level " + std::to_string(i + 1) + " " + to_string(cur) +
                       " does not halve level " + std::to_string(i) + " " + to_string(prev));
  }
}

FilteredPyramid filter_and_concat(const FeaturePyramid& raw, const GaussianKernel& kernel) {
  raw.validate();
  FilteredPyramid out;
  for (const auto& level : raw.levels) {
    Tensor<float> smooth = gaussian_filter(level, kernel);
    Tensor<float> residual = ops::sub(smooth, level);
    out.concatenated.levels.push_back(ops::concat<float>({smooth, residual}, 0));
    out.filtered.levels.push_back(std::move(smooth));
  }
  return out;
}

TinyBackbone::TinyBackbone(BackboneConfig config) : config_(std::move(config)) {
  if (config_.channels.empty()) throw std::invalid_argument("backbone needs at least one level");
  std::mt19937_64 rng(config_.seed ^ 0x9e3779b97f4a7c15ULL);
  std::int64_t in = 3;
  for (std::int64_t out : config_.channels) {
    const std::int64_t fan_in = in * 16;
    const float bound = static_cast<float>(std::sqrt(6.0 / static_cast<double>(fan_in)));
    std::uniform_real_distribution<float> wd(-bound, bound);
    std::vector<float> w(static_cast<std::size_t>(out * fan_in));
    for (float& v : w) v = wd(rng);
    std::uniform_real_distribution<float> bd(-0.1f, 0.1f);
    std::vector<float> b(static_cast<std::size_t>(out));
    for (float& v : b) v = bd(rng);
    weights_.push_back(Tensor<float>::from({out, in, 4, 4}, std::move(w)));
    biases_.push_back(Tensor<float>::from({out}, std::move(b)));
    in = out;
  }
}

FeaturePyramid TinyBackbone::provide(const Tensor<float>& image, const std::string&) const {
  if (image.rank() != 3 || image.dim(0) != 3)
    throw ShapeError("backbone expects a [3,H,W] image, got " + to_string(image.shape()));
  const std::int64_t factor = std::int64_t{1} << config_.channels.size();
  if (image.dim(1) % factor != 0 || image.dim(2) % factor != 0)
    throw ShapeError("image extent " + to_string(image.shape()) + " is not divisible by " +
                     std::to_string(factor));
  // Centre the [0,1] input before the first convolution.
  Tensor<float> x = ops::scale(ops::add_scalar(image, -0.5f), 4.0f);
  FeaturePyramid pyramid;
  for (std::size_t i = 0; i < weights_.size(); ++i) {
    x = ops::gelu(ops::conv2d(x, weights_[i], biases_[i], 2, 1));
    pyramid.levels.push_back(x);
  }
  return pyramid;
}

FileProvider::FileProvider(std::filesystem::path root, std::vector<std::int64_t> channels)
    : root_(std::move(root)), channels_(std::move(channels)) {}

FeaturePyramid FileProvider::provide(const Tensor<float>& image, const std::string& image_id) const {
  FeaturePyramid p = read_pyramid(root_ / image_id);
  if (p.size() != channels_.size())
    throw DataError(image_id + ": pyramid has " + std::to_string(p.size()) +
                    " levels, configuration expects " + std::to_string(channels_.size()));
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p.levels[i].dim(0) != channels_[i])
      throw DataError(image_id + ": level " + std::to_string(i + 1) + " has " +
                      std::to_string(p.levels[i].dim(0)) + " channels, expected " +
                      std::to_string(channels_[i]));
  }
  const std::int64_t h = p.levels[0].dim(1) * 2, w = p.levels[0].dim(2) * 2;
  if (image.defined() && (image.dim(-2) != h || image.dim(-1) != w))
    throw DataError(image_id + ": pyramid extents do not match image " + to_string(image.shape()));
  return p;
}

void write_pyramid(const std::filesystem::path& dir, const FeaturePyramid& pyramid) {
  pyramid.validate();
  nlohmann::json meta;
  meta["levels"] = pyramid.size();
  for (std::size_t i = 0; i < pyramid.size(); ++i) {
    const auto& t = pyramid.levels[i];
    meta["channels"].push_back(t.dim(0));
    meta["extents"].push_back({t.dim(1), t.dim(2)});
    io::write_ust(dir / ("level_" + std::to_string(i + 1) + ".ust"), t);
  }
  io::write_file(dir / "meta.json", meta.dump(2) + "\n");
}

FeaturePyramid read_pyramid(const std::filesystem::path& dir) {
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(io::read_file(dir / "meta.json"));
  } catch (const nlohmann::json::exception& e) {
    throw DataError((dir / "meta.json").string() + ": " + e.what());
  }
  FeaturePyramid p;
  const std::size_t k = meta.at("levels").get<std::size_t>();
  for (std::size_t i = 0; i < k; ++i) {
    Tensor<float> t = io::read_ust(dir / ("level_" + std::to_string(i + 1) + ".ust"));
    const Shape want = {meta["channels"][i].get<std::int64_t>(),
                        meta["extents"][i][0].get<std::int64_t>(),
                        meta["extents"][i][1].get<std::int64_t>()};
    if (t.shape() != want)
      throw DataError((dir / ("level_" + std::to_string(i + 1) + ".ust")).string() + ": shape " +
                      to_string(t.shape()) + " disagrees with meta.json " + to_string(want));
    p.levels.push_back(std::move(t));
  }
  try {
    p.validate();
  } catch (const ShapeError& e) {
    throw DataError(dir.string() + ": " + e.what());
  }
  return p;
}

}  // namespace unias::features
