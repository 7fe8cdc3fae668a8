// Copyright 2026 The UniAS Authors
// SPDX-License-Identifier: Apache-2.0

// Slow, obviously-correct metric evaluations used as oracles.

#pragma once

#include <algorithm>
#include <cstdint>
#include <random>
#include <set>
#include <vector>

namespace unias::testing {

struct OraclePoint {
  double threshold;
  std::int64_t tp, fp, tn, fn;
};

/// Recounts the confusion matrix from scratch at every distinct score.
inline std::vector<OraclePoint> brute_force_sweep(const std::vector<double>& s,
                                                  const std::vector<std::uint8_t>& y) {
  std::set<double, std::greater<>> thresholds(s.begin(), s.end());
  std::vector<OraclePoint> out;
  for (double t : thresholds) {
    OraclePoint p{t, 0, 0, 0, 0};
    for (std::size_t i = 0; i < s.size(); ++i) {
      const bool pred = s[i] >= t;
      if (pred && y[i]) ++p.tp;
      else if (pred) ++p.fp;
      else if (y[i]) ++p.fn;
      else ++p.tn;
    }
    out.push_back(p);
  }
  return out;
}

inline double brute_force_auroc(const std::vector<double>& s, const std::vector<std::uint8_t>& y) {
  double area = 0, x0 = 0, y0 = 0;
  for (const auto& p : brute_force_sweep(s, y)) {
    const double tpr = double(p.tp) / double(p.tp + p.fn);
    const double fpr = double(p.fp) / double(p.fp + p.tn);
    area += (fpr - x0) * (tpr + y0) / 2;
    x0 = fpr;
    y0 = tpr;
  }
  return area;
}

inline double brute_force_ap(const std::vector<double>& s, const std::vector<std::uint8_t>& y) {
  double ap = 0, r0 = 0;
  for (const auto& p : brute_force_sweep(s, y)) {
    const double r = double(p.tp) / double(p.tp + p.fn);
    ap += (r - r0) * double(p.tp) / double(p.tp + p.fp);
    r0 = r;
  }
  return ap;
}

/// Fraction of (positive, negative) pairs ranked correctly, ties worth one half.
inline double mann_whitney(const std::vector<double>& s, const std::vector<std::uint8_t>& y) {
  double wins = 0;
  std::int64_t pairs = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!y[i]) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[j]) continue;
      ++pairs;
      wins += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
    }
  }
  return wins / double(pairs);
}

/// A 32×32-style field with both classes present; `quantize` forces score ties.
struct Field {
  std::vector<double> scores;
  std::vector<std::uint8_t> truth;
};

inline Field random_field(std::mt19937_64& rng, std::size_t n, bool quantize) {
  std::uniform_real_distribution<double> u(0, 1);
  const double rate = 0.02 + 0.5 * u(rng);
  Field f;
  f.scores.resize(n);
  f.truth.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    f.truth[i] = u(rng) < rate;
    // Positives lean high so the fields span easy and hard rankings.
    double s = u(rng) + (f.truth[i] ? 0.3 * u(rng) : 0.0);
    if (quantize) s = std::floor(s * 16) / 16;
    f.scores[i] = s;
  }
  f.truth[0] = 1;
  f.truth[1] = 0;
  return f;
}

}  // namespace unias::testing
