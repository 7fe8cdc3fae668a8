// Copyright 2026 The UniAS Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>

#include "doctest.h"
#include "metric_oracles.hpp"
#include "unias/metrics.hpp"

using namespace unias::metrics;
using unias::testing::random_field;

namespace {

std::vector<double> d(std::initializer_list<double> v) { return v; }
std::vector<std::uint8_t> b(std::initializer_list<int> v) {
  return std::vector<std::uint8_t>(v.begin(), v.end());
}

}  // namespace

TEST_CASE("small worked examples") {
  CHECK(auroc(d({0.9, 0.1}), b({1, 0})) == 1.0);
  CHECK(auroc(d({0.3, 0.3, 0.3}), b({1, 0, 0})) == 0.5);
  CHECK(auroc(d({0.8, 0.7, 0.6, 0.5}), b({1, 0, 1, 0})) == doctest::Approx(0.75).epsilon(1e-15));
  CHECK(average_precision(d({0.9, 0.8}), b({1, 0})) == 1.0);
  CHECK(average_precision(d({0.9, 0.8, 0.7}), b({1, 0, 1})) ==
        doctest::Approx(0.5 + 0.5 * 2.0 / 3.0).epsilon(1e-15));
  // Worst ranking with one positive among N.
  for (int n : {2, 5, 17}) {
    std::vector<double> s;
    std::vector<std::uint8_t> y;
    for (int i = 0; i < n; ++i) {
      s.push_back(n - i);
      y.push_back(i == n - 1);
    }
    CHECK(average_precision(s, y) == doctest::Approx(1.0 / n).epsilon(1e-15));
  }
}

TEST_CASE("threshold selection") {
  SUBCASE("lowest threshold wins the worked example") {
    const auto pts = curve(d({0.9, 0.8, 0.7}), b({1, 0, 1}));
    const CurvePoint best = select_threshold(pts);
    CHECK(best.threshold == 0.7);
    CHECK(best.precision + best.recall == doctest::Approx(5.0 / 3.0));
  }
  SUBCASE("perfect scorer reaches P+R = 2") {
    const auto pts = curve(d({0.9, 0.8, 0.2, 0.1}), b({1, 1, 0, 0}));
    const CurvePoint best = select_threshold(pts);
    CHECK(best.precision + best.recall == 2.0);
    CHECK(best.threshold == 0.8);
  }
  SUBCASE("single candidate is returned unchanged") {
    const auto pts = curve(d({0.4, 0.4}), b({1, 0}));
    REQUIRE(pts.size() == 1);
    CHECK(select_threshold(pts).threshold == 0.4);
  }
  SUBCASE("ties prefer the higher threshold") {
    // Both points sum to 1.5: (P=1, R=0.5) at 0.9 and (P=0.5, R=1) at 0.1.
    const auto pts = curve(d({0.9, 0.5, 0.1, 0.1}), b({1, 0, 1, 0}));
    CHECK(pts[0].precision + pts[0].recall == 1.5);
    CHECK(select_threshold(pts).threshold == 0.9);
  }
}

TEST_CASE("dice") {
  std::vector<std::uint8_t> t(400, 0), p(400, 0);
  for (int i = 0; i < 100; ++i) t[i] = 1;
  for (int i = 50; i < 150; ++i) p[i] = 1;
  CHECK(dsc(p, t) == 0.5);
  CHECK(dsc(t, t) == 1.0);
  const std::vector<std::uint8_t> empty(400, 0);
  CHECK(dsc(empty, empty) == 1.0);
  std::vector<std::uint8_t> one_fp = empty;
  one_fp[7] = 1;
  CHECK(dsc(one_fp, empty) == 0.0);
}

TEST_CASE("anomaly rate") {
  std::vector<std::uint8_t> m(100, 0);
  m[3] = 1;
  CHECK(anomaly_rate({m}) == 0.01);
  CHECK(anomaly_rate({std::vector<std::uint8_t>(50, 0)}) == 0.0);
  CHECK(anomaly_rate({m, std::vector<std::uint8_t>(100, 0)}) == 0.005);
}

TEST_CASE("undefined metrics raise") {
  CHECK_THROWS_AS(auroc(d({0.1, 0.2}), b({0, 0})), UndefinedMetric);
  CHECK_THROWS_AS(auroc(d({0.1, 0.2}), b({1, 1})), UndefinedMetric);
  CHECK_THROWS_AS(average_precision(d({0.1, 0.2}), b({0, 0})), UndefinedMetric);
  CHECK_THROWS_AS(curve(d({}), b({})), UndefinedMetric);
  CHECK_THROWS_AS(curve(d({0.1}), b({1, 0})), std::invalid_argument);
}

TEST_CASE("exact sweep matches brute force on random 32x32 fields") {
  std::mt19937_64 rng(2026);
  for (int trial = 0; trial < 120; ++trial) {
    const auto f = random_field(rng, 32 * 32, trial % 2 == 0);
    const auto pts = curve(f.scores, f.truth);
    const auto oracle = unias::testing::brute_force_sweep(f.scores, f.truth);
    REQUIRE(pts.size() == oracle.size());
    for (std::size_t i = 0; i < pts.size(); ++i) {
      CHECK(pts[i].threshold == oracle[i].threshold);
      CHECK(pts[i].tp == oracle[i].tp);
      CHECK(pts[i].fp == oracle[i].fp);
      CHECK(pts[i].tn == oracle[i].tn);
      CHECK(pts[i].fn == oracle[i].fn);
    }
    CHECK(std::abs(auroc(pts) - unias::testing::brute_force_auroc(f.scores, f.truth)) < 1e-9);
    CHECK(std::abs(auroc(pts) - unias::testing::mann_whitney(f.scores, f.truth)) < 1e-9);
    CHECK(std::abs(average_precision(pts) - unias::testing::brute_force_ap(f.scores, f.truth)) < 1e-9);

    // Dice at the selected threshold equals a from-scratch recount.
    const CurvePoint best = select_threshold(pts);
    std::int64_t tp = 0, pp = 0, tt = 0;
    for (std::size_t i = 0; i < f.scores.size(); ++i) {
      const bool pred = f.scores[i] >= best.threshold;
      tp += pred && f.truth[i];
      pp += pred;
      tt += f.truth[i];
    }
    CHECK(best.tp == tp);
    CHECK(best.tp + best.fp == pp);
    CHECK(dsc_at(f.scores, f.truth, best.threshold) == 2.0 * double(tp) / double(pp + tt));
  }
}

TEST_CASE("curve invariants") {
  std::mt19937_64 rng(9);
  const auto f = random_field(rng, 1024, true);
  const auto pts = curve(f.scores, f.truth);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    CHECK(pts[i].tp + pts[i].fn == pts[0].tp + pts[0].fn);
    CHECK(pts[i].fp + pts[i].tn == pts[0].fp + pts[0].tn);
    if (i > 0) {
      CHECK(pts[i].threshold < pts[i - 1].threshold);
      CHECK(pts[i].recall >= pts[i - 1].recall);
    }
  }
  CHECK(pts.back().recall == 1.0);
  CHECK(pts.back().fpr == 1.0);
}

TEST_CASE("monotone score transforms leave the curves unchanged") {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 100; ++trial) {
    const auto f = random_field(rng, 32 * 32, trial % 2 == 1);
    std::vector<double> g(f.scores.size()), h(f.scores.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
      g[i] = std::exp(4 * f.scores[i]) - 7;
      h[i] = std::atan(f.scores[i] - 0.4) * 10;
    }
    const auto base = curve(f.scores, f.truth);
    for (const auto* t : {&g, &h}) {
      const auto pts = curve(*t, f.truth);
      REQUIRE(pts.size() == base.size());
      for (std::size_t i = 0; i < pts.size(); ++i) {
        CHECK(pts[i].precision == base[i].precision);
        CHECK(pts[i].recall == base[i].recall);
        CHECK(pts[i].fpr == base[i].fpr);
      }
      CHECK(auroc(pts) == auroc(base));
      CHECK(average_precision(pts) == average_precision(base));
    }
  }
}

TEST_CASE("inflation demo") {
  SUBCASE("exact prediction") {
    const auto r = inflation_demo(0.01, 0, 7);
    CHECK(r.auroc == 1.0);
    CHECK(r.pap == 1.0);
    CHECK(r.dsc == 1.0);
  }
  SUBCASE("dilated prediction inflates AUROC at a low anomaly rate") {
    const auto r = inflation_demo(0.01, 6, 7);
    CHECK(r.anomaly_rate == doctest::Approx(164.0 / 16384.0));
    CHECK(r.auroc > 0.95);
    CHECK(r.pap < 0.6);
    CHECK(r.dsc < 0.6);
    CHECK(r.auroc - r.pap > 0.3);
    const auto balanced = inflation_demo(0.5, 6, 7);
    CHECK(balanced.auroc - balanced.pap < r.auroc - r.pap);
  }
  SUBCASE("deterministic for a seed") {
    CHECK(inflation_demo(0.05, 3, 11).scores == inflation_demo(0.05, 3, 11).scores);
    CHECK(inflation_demo(0.05, 3, 11).scores != inflation_demo(0.05, 3, 12).scores);
  }
  SUBCASE("invalid arguments") {
    CHECK_THROWS_AS(inflation_demo(0.0, 6, 7), std::invalid_argument);
    CHECK_THROWS_AS(inflation_demo(0.01, -1, 7), std::invalid_argument);
  }
}

TEST_CASE("category evaluation and serialization") {
  CategoryInput in;
  in.name = "demo";
  in.image_ids = {"a", "b"};
  in.scores = {{0.9, 0.1, 0.2, 0.1}, {0.1, 0.1, 0.3, 0.2}};
  in.truths = {{1, 0, 0, 0}, {0, 0, 0, 0}};
  const CategoryReport r = evaluate_category(in);
  CHECK(r.anomaly_rate == 0.125);
  CHECK(r.auroc == 1.0);
  CHECK(r.pap == 1.0);
  CHECK(r.threshold == 0.9);
  REQUIRE(r.images.size() == 2);
  CHECK(r.images[0].dsc == 1.0);
  CHECK(r.images[1].dsc == 1.0);
  const EvalReport e = summarize({r, r});
  CHECK(e.mean_pap == 1.0);
  const auto j = to_json(e);
  CHECK(j["categories"].size() == 2);
  CHECK(j["mean"]["auroc"] == 1.0);
  const std::string csv = curve_csv(r.points);
  CHECK(csv.rfind("threshold,tp,fp,tn,fn,precision,recall,fpr\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == static_cast<long>(r.points.size() + 1));
}
