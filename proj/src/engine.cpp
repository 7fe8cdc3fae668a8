// Copyright 2026 The UniAS Authors
// SPDX-License-Identifier: Apache-2.0

#include "unias/engine.hpp"

#include <algorithm>
#include <cmath>

#include "json.hpp"
#include "unias/ops.hpp"
#include "unias/tensor_io.hpp"

namespace unias::engine {

template <typename T>
double LossBreakdown<T>::cosine_sum() const {
  double s = 0;
  for (const auto& t : cosine) s += static_cast<double>(t.item());
  return s;
}

template <typename T>
double LossBreakdown<T>::mse_sum() const {
  double s = 0;
  for (const auto& t : mse) s += static_cast<double>(t.item());
  return s;
}

template <typename T>
LossBreakdown<T> training_loss(const std::vector<Tensor<T>>& recon,
                               const std::vector<Tensor<T>>& target) {
  if (recon.size() != target.size() || recon.empty())
    throw ShapeError("loss needs matching, non-empty level lists");
  LossBreakdown<T> out;
  for (std::size_t i = 0; i < recon.size(); ++i) {
    if (recon[i].shape() != target[i].shape())
      throw ShapeError("level " + std::to_string(i + 1) + " reconstruction " +
                       to_string(recon[i].shape()) + " vs target " + to_string(target[i].shape()));
    const std::int64_t channel_axis = recon[i].rank() - 3;
    const Tensor<T> cos = ops::cosine_similarity(recon[i], target[i], channel_axis);
    out.cosine.push_back(ops::mean_all(ops::add_scalar(ops::scale(cos, T(-1)), T(1))));
    const Tensor<T> diff = ops::sub(recon[i], target[i]);
    out.mse.push_back(ops::mean_all(ops::mul(diff, diff)));
    const Tensor<T> level = ops::add(out.cosine.back(), out.mse.back());
    out.total = out.total.defined() ? ops::add(out.total, level) : level;
  }
  return out;
}

Tensor<float> level_anomaly_map(const Tensor<float>& recon, const Tensor<float>& target,
                                std::int64_t height, std::int64_t width) {
  if (recon.rank() != 3 || recon.shape() != target.shape())
    throw ShapeError("anomaly map needs matching [C,H,W] maps, got " + to_string(recon.shape()) +
                     " and " + to_string(target.shape()));
  const Tensor<float> dist = ops::add_scalar(
      ops::scale(ops::cosine_similarity(recon, target, 0), -1.0f), 1.0f);  // [h,w]
  const Tensor<float> up = ops::upsample_bilinear(
      ops::reshape(dist, {1, dist.dim(0), dist.dim(1)}), height, width);
  return ops::reshape(up, {height, width});
}

Tensor<float> aggregate_maps(const std::vector<Tensor<float>>& factors) {
  if (factors.empty()) throw ShapeError("aggregate_maps needs at least one factor");
  Tensor<float> out = factors[0].clone();
  for (std::size_t i = 1; i < factors.size(); ++i) {
    if (factors[i].shape() != out.shape())
      throw ShapeError("anomaly map factors differ in shape");
    auto& o = out.values();
    const auto& f = factors[i].values();
    for (std::size_t p = 0; p < o.size(); ++p) o[p] *= f[p];
  }
  return out;
}

float AnomalyMap::image_score() const {
  const auto& v = final.values();
  return *std::max_element(v.begin(), v.end());
}

AnomalyMap build_map(const std::vector<Tensor<float>>& recon,
                     const std::vector<Tensor<float>>& target, std::int64_t height,
                     std::int64_t width, const std::vector<int>& levels, std::string image_id) {
  if (recon.size() != target.size()) throw ShapeError("recon and target level counts differ");
  std::vector<int> use = levels;
  if (use.empty())
    for (std::size_t i = 1; i <= recon.size(); ++i) use.push_back(static_cast<int>(i));
  AnomalyMap m;
  m.image_id = std::move(image_id);
  for (int l : use) {
    if (l < 1 || static_cast<std::size_t>(l) > recon.size())
      throw std::invalid_argument("level " + std::to_string(l) + " is out of range");
    m.factors.push_back(level_anomaly_map(recon[l - 1], target[l - 1], height, width));
  }
  m.final = aggregate_maps(m.factors);
  return m;
}

void export_ust(const std::filesystem::path& path, const Tensor<float>& map) {
  io::write_ust(path, map);
}

void export_pgm(const std::filesystem::path& path, const Tensor<float>& map) {
  if (map.rank() != 2) throw ShapeError("PGM export needs an [H,W] map");
  const auto& v = map.values();
  const auto [lo_it, hi_it] = std::minmax_element(v.begin(), v.end());
  const double lo = *lo_it, hi = *hi_it;
  const double span = hi > lo ? hi - lo : 1.0;
  std::string bytes = "P5\n" + std::to_string(map.dim(1)) + " " + std::to_string(map.dim(0)) +
                      "\n255\n";
  for (float x : v)
    bytes.push_back(static_cast<char>(
        static_cast<unsigned char>(std::lround(std::clamp((x - lo) / span, 0.0, 1.0) * 255.0))));
  io::write_file(path, bytes);
  const nlohmann::json side = {{"min", lo}, {"max", hi}, {"scale", "value = min + pixel/255*(max-min)"}};
  io::write_file(path.string() + ".json", side.dump(2) + "\n");
}

template struct LossBreakdown<float>;
template struct LossBreakdown<double>;
template LossBreakdown<float> training_loss(const std::vector<Tensor<float>>&,
                                            const std::vector<Tensor<float>>&);
template LossBreakdown<double> training_loss(const std::vector<Tensor<double>>&,
                                             const std::vector<Tensor<double>>&);

}  // namespace unias::engine
