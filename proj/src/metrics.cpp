// Copyright 2026 The UniAS Authors
// SPDX-License-Identifier: Apache-2.0

#include "unias/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>

namespace unias::metrics {

namespace {

void check_pair(std::size_t scores, std::size_t truth) {
  if (scores != truth)
    throw std::invalid_argument("scores and truth differ in length (" + std::to_string(scores) +
                                " vs " + std::to_string(truth) + ")");
  if (scores == 0) throw UndefinedMetric("no pixels to evaluate");
}

}  // namespace

std::vector<CurvePoint> curve(std::span<const double> scores, std::span<const std::uint8_t> truth) {
  check_pair(scores.size(), truth.size());
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  std::int64_t pos = 0;
  for (std::uint8_t t : truth) pos += t != 0;
  const std::int64_t neg = static_cast<std::int64_t>(truth.size()) - pos;

  std::vector<CurvePoint> points;
  std::int64_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < order.size();) {
    const double t = scores[order[i]];
    if (std::isnan(t)) throw std::invalid_argument("NaN score");
    for (; i < order.size() && scores[order[i]] == t; ++i) (truth[order[i]] ? tp : fp) += 1;
    CurvePoint p;
    p.threshold = t;
    p.tp = tp;
    p.fp = fp;
    p.fn = pos - tp;
    p.tn = neg - fp;
    p.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    p.recall = pos > 0 ? static_cast<double>(tp) / static_cast<double>(pos) : 0.0;
    p.fpr = neg > 0 ? static_cast<double>(fp) / static_cast<double>(neg) : 0.0;
    points.push_back(p);
  }
  return points;
}

double auroc(const std::vector<CurvePoint>& points) {
  if (points.empty()) throw UndefinedMetric("AUROC of an empty curve");
  const CurvePoint& last = points.back();
  if (last.tp == 0) throw UndefinedMetric("AUROC undefined: no positive pixels");
  if (last.fp == 0) throw UndefinedMetric("AUROC undefined: no negative pixels");
  double area = 0, x0 = 0, y0 = 0;
  for (const auto& p : points) {
    area += (p.fpr - x0) * (p.recall + y0) * 0.5;
    x0 = p.fpr;
    y0 = p.recall;
  }
  return area;
}

double auroc(std::span<const double> scores, std::span<const std::uint8_t> truth) {
  return auroc(curve(scores, truth));
}

double average_precision(const std::vector<CurvePoint>& points) {
  if (points.empty() || points.back().tp == 0)
    throw UndefinedMetric("average precision undefined: no positive pixels");
  double ap = 0, r0 = 0;
  for (const auto& p : points) {
    ap += (p.recall - r0) * p.precision;
    r0 = p.recall;
  }
  return ap;
}

double average_precision(std::span<const double> scores, std::span<const std::uint8_t> truth) {
  return average_precision(curve(scores, truth));
}

CurvePoint select_threshold(const std::vector<CurvePoint>& points) {
  if (points.empty()) throw UndefinedMetric("no thresholds to select from");
  const CurvePoint* best = &points.front();
  for (const auto& p : points)
    if (p.precision + p.recall > best->precision + best->recall) best = &p;
  return *best;
}

double dsc(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> truth) {
  if (pred.size() != truth.size()) throw std::invalid_argument("prediction and truth differ in size");
  std::int64_t p = 0, t = 0, both = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    p += pred[i] != 0;
    t += truth[i] != 0;
    both += pred[i] != 0 && truth[i] != 0;
  }
  if (t == 0) return p == 0 ? 1.0 : 0.0;
  return 2.0 * static_cast<double>(both) / static_cast<double>(p + t);
}

double dsc_at(std::span<const double> scores, std::span<const std::uint8_t> truth, double threshold) {
  if (scores.size() != truth.size()) throw std::invalid_argument("scores and truth differ in size");
  std::vector<std::uint8_t> pred(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) pred[i] = scores[i] >= threshold;
  return dsc(pred, truth);
}

double anomaly_rate(const std::vector<std::vector<std::uint8_t>>& masks) {
  std::int64_t pos = 0, total = 0;
  for (const auto& m : masks) {
    for (std::uint8_t v : m) pos += v != 0;
    total += static_cast<std::int64_t>(m.size());
  }
  if (total == 0) throw UndefinedMetric("anomaly rate of zero pixels");
  return static_cast<double>(pos) / static_cast<double>(total);
}

InflationResult inflation_demo(double ar, std::int64_t dilation, std::uint64_t seed,
                               std::int64_t height, std::int64_t width) {
  if (!(ar > 0 && ar < 1)) throw std::invalid_argument("anomaly rate must lie in (0, 1)");
  if (dilation < 0) throw std::invalid_argument("dilation must be non-negative");
  if (height <= 0 || width <= 0) throw std::invalid_argument("field extents must be positive");
  const std::int64_t n = height * width;
  const auto k = static_cast<std::int64_t>(std::llround(ar * static_cast<double>(n)));
  if (k < 1 || k >= n) throw std::invalid_argument("anomaly rate leaves one class empty");

  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::int64_t> cy(0, height - 1), cx(0, width - 1);
  const std::int64_t y0 = cy(rng), x0 = cx(rng);

  // Truth: the k pixels nearest the centre (ties by raster order), a clipped disk.
  std::vector<std::int64_t> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  auto d2 = [&](std::int64_t i) {
    const std::int64_t dy = i / width - y0, dx = i % width - x0;
    return dy * dy + dx * dx;
  };
  std::stable_sort(order.begin(), order.end(),
                   [&](std::int64_t a, std::int64_t b) { return d2(a) < d2(b); });
  InflationResult r;
  r.truth.assign(static_cast<std::size_t>(n), 0);
  for (std::int64_t i = 0; i < k; ++i) r.truth[order[i]] = 1;

  std::vector<std::uint8_t> grown = r.truth;
  if (dilation > 0) {
    const std::int64_t rr = dilation * dilation;
    for (std::int64_t y = 0; y < height; ++y)
      for (std::int64_t x = 0; x < width; ++x) {
        if (!r.truth[y * width + x]) continue;
        for (std::int64_t dy = -dilation; dy <= dilation; ++dy)
          for (std::int64_t dx = -dilation; dx <= dilation; ++dx) {
            const std::int64_t yy = y + dy, xx = x + dx;
            if (dy * dy + dx * dx > rr || yy < 0 || yy >= height || xx < 0 || xx >= width) continue;
            grown[yy * width + xx] = 1;
          }
      }
  }
  std::uniform_real_distribution<double> u(0.0, 1.0);
  r.scores.resize(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) r.scores[i] = 0.5 * u(rng) + (grown[i] ? 0.5 : 0.0);

  r.points = curve(r.scores, r.truth);
  r.auroc = auroc(r.points);
  r.pap = average_precision(r.points);
  r.threshold = select_threshold(r.points).threshold;
  r.dsc = dsc_at(r.scores, r.truth, r.threshold);
  r.anomaly_rate = anomaly_rate({r.truth});
  return r;
}

CategoryReport evaluate_category(const CategoryInput& input) {
  if (input.scores.size() != input.truths.size() || input.scores.size() != input.image_ids.size())
    throw std::invalid_argument(input.name + ": image lists differ in length");
  std::vector<double> scores;
  std::vector<std::uint8_t> truth;
  for (std::size_t i = 0; i < input.scores.size(); ++i) {
    if (input.scores[i].size() != input.truths[i].size())
      throw std::invalid_argument(input.image_ids[i] + ": map and mask differ in size");
    scores.insert(scores.end(), input.scores[i].begin(), input.scores[i].end());
    truth.insert(truth.end(), input.truths[i].begin(), input.truths[i].end());
  }
  CategoryReport r;
  r.name = input.name;
  r.points = curve(scores, truth);
  r.auroc = auroc(r.points);
  r.pap = average_precision(r.points);
  r.threshold = select_threshold(r.points).threshold;
  r.anomaly_rate = anomaly_rate(input.truths);
  double sum = 0;
  for (std::size_t i = 0; i < input.scores.size(); ++i) {
    const double d = dsc_at(input.scores[i], input.truths[i], r.threshold);
    r.images.push_back({input.image_ids[i], d});
    sum += d;
  }
  r.dsc = r.images.empty() ? 0.0 : sum / static_cast<double>(r.images.size());
  return r;
}

EvalReport summarize(std::vector<CategoryReport> categories) {
  EvalReport e;
  e.categories = std::move(categories);
  const double n = static_cast<double>(e.categories.size());
  for (const auto& c : e.categories) {
    e.mean_auroc += c.auroc / n;
    e.mean_pap += c.pap / n;
    e.mean_dsc += c.dsc / n;
    e.mean_anomaly_rate += c.anomaly_rate / n;
  }
  return e;
}

nlohmann::json to_json(const EvalReport& report) {
  nlohmann::json j;
  j["levels"] = report.levels;
  j["mean"] = {{"auroc", report.mean_auroc},
               {"pap", report.mean_pap},
               {"dsc", report.mean_dsc},
               {"anomaly_rate", report.mean_anomaly_rate}};
  j["categories"] = nlohmann::json::array();
  for (const auto& c : report.categories) {
    nlohmann::json images = nlohmann::json::array();
    for (const auto& im : c.images) images.push_back({{"image", im.image_id}, {"dsc", im.dsc}});
    j["categories"].push_back({{"name", c.name},
                               {"auroc", c.auroc},
                               {"pap", c.pap},
                               {"dsc", c.dsc},
                               {"anomaly_rate", c.anomaly_rate},
                               {"threshold", c.threshold},
                               {"images", images}});
  }
  return j;
}

std::string curve_csv(const std::vector<CurvePoint>& points) {
  std::string out = "threshold,tp,fp,tn,fn,precision,recall,fpr\n";
  char buf[256];
  for (const auto& p : points) {
    std::snprintf(buf, sizeof buf, "%.17g,%lld,%lld,%lld,%lld,%.17g,%.17g,%.17g\n", p.threshold,
                  static_cast<long long>(p.tp), static_cast<long long>(p.fp),
                  static_cast<long long>(p.tn), static_cast<long long>(p.fn), p.precision,
                  p.recall, p.fpr);
    out += buf;
  }
  return out;
}

}  // namespace unias::metrics
