// Copyright 2026 The UniAS Authors
// SPDX-License-Identifier: Apache-2.0

// Pixel-level segmentation metrics over an exact sweep of the distinct scores.
// A pixel is predicted anomalous at threshold t when its score is >= t.

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

namespace unias::metrics {

/// Raised when a metric is undefined for the given labels (e.g. no positives).
class UndefinedMetric : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

struct CurvePoint {
  double threshold = 0;
  std::int64_t tp = 0, fp = 0, tn = 0, fn = 0;
  double precision = 0, recall = 0, fpr = 0;
};

/// One point per distinct score, thresholds strictly decreasing.
std::vector<CurvePoint> curve(std::span<const double> scores, std::span<const std::uint8_t> truth);

/// Trapezoidal area under (FPR, TPR) starting at the origin.
double auroc(const std::vector<CurvePoint>& points);
double auroc(std::span<const double> scores, std::span<const std::uint8_t> truth);

/// Σ (R_n − R_{n−1})·P_n with R_0 = 0.
double average_precision(const std::vector<CurvePoint>& points);
double average_precision(std::span<const double> scores, std::span<const std::uint8_t> truth);

/// The curve point maximizing precision + recall; ties go to the higher threshold.
CurvePoint select_threshold(const std::vector<CurvePoint>& points);

/// Dice for one image. An all-zero truth scores 1 for an empty prediction, else 0.
double dsc(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> truth);
double dsc_at(std::span<const double> scores, std::span<const std::uint8_t> truth,
              double threshold);

/// Anomalous pixels over all pixels of the given masks.
double anomaly_rate(const std::vector<std::vector<std::uint8_t>>& masks);

struct InflationResult {
  double auroc = 0, pap = 0, dsc = 0, threshold = 0, anomaly_rate = 0;
  std::vector<CurvePoint> points;
  std::vector<double> scores;
  std::vector<std::uint8_t> truth;
};

/// Synthetic field: the truth is the round(ar·H·W) pixels nearest a random centre;
/// scores are 0.5 + 0.5u on the truth dilated by `dilation` pixels and 0.5u elsewhere.
InflationResult inflation_demo(double ar, std::int64_t dilation, std::uint64_t seed,
                               std::int64_t height = 128, std::int64_t width = 128);

struct ImageResult {
  std::string image_id;
  double dsc = 0;
};

struct CategoryReport {
  std::string name;
  double auroc = 0, pap = 0, dsc = 0, anomaly_rate = 0, threshold = 0;
  std::vector<ImageResult> images;
  std::vector<CurvePoint> points;
};

struct EvalReport {
  std::vector<CategoryReport> categories;
  double mean_auroc = 0, mean_pap = 0, mean_dsc = 0, mean_anomaly_rate = 0;
  std::vector<int> levels;
};

/// Scores and truths of one category's test images, pooled per category.
struct CategoryInput {
  std::string name;
  std::vector<std::string> image_ids;
  std::vector<std::vector<double>> scores;
  std::vector<std::vector<std::uint8_t>> truths;
};

CategoryReport evaluate_category(const CategoryInput& input);
EvalReport summarize(std::vector<CategoryReport> categories);

nlohmann::json to_json(const EvalReport& report);
/// Header `threshold,tp,fp,tn,fn,precision,recall,fpr`.
std::string curve_csv(const std::vector<CurvePoint>& points);

}  // namespace unias::metrics
