// Copyright 2026 The UniAS Authors
// SPDX-License-Identifier: Apache-2.0

// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.
//
//   acceptance <work dir> [--only name,...] [--known-failure criterion:part,...]
//
// The lines are also written to <work dir>/acceptance_report.txt. A known
// failure still prints FAIL; the exit status ignores it only when the
// failing parts of that criterion are exactly the listed ones.
//
// Criteria: gradients, metrics-oracles, inflation, architecture, toy-training,
// reproducibility.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "grad_suite.hpp"
#include "metric_oracles.hpp"
#include "unias/checkpoint.hpp"
#include "unias/decoder.hpp"
#include "unias/engine.hpp"
#include "unias/metrics.hpp"
#include "unias/ops.hpp"
#include "unias/pipeline.hpp"
#include "unias/rng.hpp"
#include "unias/tensor_io.hpp"

using namespace unias;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Verdict {
  bool pass = true;
  std::string detail;
  std::set<std::string> failed;  // sub-checks that failed, when the criterion has parts
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

// Ops at rel 1e-4, two decoder variants end to end at rel 1e-3, all within 120 s.
Verdict gradients() {
  const auto t0 = Clock::now();
  Verdict v;
  std::size_t ops_checked = 0;
  for (const auto& e : testing::op_gradient_suite()) {
    ++ops_checked;
    if (!e.result.ok) {
      v.pass = false;
      v.detail += e.name + " (" + e.result.where + ") ";
    }
  }
  double worst = 0;
  std::size_t probes = 0;
  for (bool channel : {false, true}) {
    auto c = testing::gradient_config();
    c.channel_attention = channel;
    const auto r = testing::end_to_end_gradient(c);
    probes += r.probes;
    if (r.worst_rel > worst) worst = r.worst_rel;
    if (!(r.worst_rel < 1e-3)) {
      v.pass = false;
      v.detail += "end-to-end worst at " + r.where + " ";
    }
  }
  const double secs = seconds_since(t0);
  if (!(secs < 120)) v.pass = false;
  v.detail += std::to_string(ops_checked) + " op checks, " + std::to_string(probes) +
              " sampled params, end-to-end worst rel " + fmt("%.2e", worst) + ", " + fmt("%.1f s", secs);
  return v;
}

Verdict metrics_oracles() {
  Verdict v;
  std::mt19937_64 rng(2026);
  double worst = 0;
  int fields = 0;
  bool sweep_ok = true, dsc_ok = true, invariant_ok = true;
  for (int trial = 0; trial < 120; ++trial, ++fields) {
    const auto f = testing::random_field(rng, 32 * 32, trial % 2 == 0);
    const auto pts = metrics::curve(f.scores, f.truth);
    const auto oracle = testing::brute_force_sweep(f.scores, f.truth);
    if (pts.size() != oracle.size()) sweep_ok = false;
    for (std::size_t i = 0; sweep_ok && i < pts.size(); ++i)
      sweep_ok = pts[i].threshold == oracle[i].threshold && pts[i].tp == oracle[i].tp &&
                 pts[i].fp == oracle[i].fp && pts[i].tn == oracle[i].tn && pts[i].fn == oracle[i].fn;
    const double a = metrics::auroc(pts);
    worst = std::max({worst, std::abs(a - testing::brute_force_auroc(f.scores, f.truth)),
                      std::abs(a - testing::mann_whitney(f.scores, f.truth)),
                      std::abs(metrics::average_precision(pts) - testing::brute_force_ap(f.scores, f.truth))});

    // Dice per 8×8 tile at the selected threshold against a direct recount.
    const double thr = metrics::select_threshold(pts).threshold;
    for (std::size_t tile = 0; tile < 16; ++tile) {
      std::vector<std::uint8_t> pred, truth;
      std::int64_t tp = 0, pp = 0, tt = 0;
      for (std::size_t i = tile * 64; i < (tile + 1) * 64; ++i) {
        const bool p = f.scores[i] >= thr;
        pred.push_back(p);
        truth.push_back(f.truth[i]);
        tp += p && f.truth[i];
        pp += p;
        tt += f.truth[i];
      }
      const double expect = tt == 0 ? (pp == 0 ? 1.0 : 0.0) : 2.0 * double(tp) / double(pp + tt);
      worst = std::max(worst, std::abs(metrics::dsc(pred, truth) - expect));
    }
    {
      std::int64_t tp = 0, pp = 0, tt = 0;
      for (std::size_t i = 0; i < f.scores.size(); ++i) {
        const bool p = f.scores[i] >= thr;
        tp += p && f.truth[i];
        pp += p;
        tt += f.truth[i];
      }
      dsc_ok = dsc_ok && metrics::dsc_at(f.scores, f.truth, thr) == 2.0 * double(tp) / double(pp + tt);
    }

    std::vector<double> g(f.scores.size());
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = std::exp(4 * f.scores[i]) - 7;
    const auto moved = metrics::curve(g, f.truth);
    invariant_ok = invariant_ok && moved.size() == pts.size();
    for (std::size_t i = 0; invariant_ok && i < pts.size(); ++i)
      invariant_ok = moved[i].precision == pts[i].precision && moved[i].recall == pts[i].recall &&
                     moved[i].fpr == pts[i].fpr && moved[i].tp == pts[i].tp && moved[i].fp == pts[i].fp;
  }
  v.pass = sweep_ok && dsc_ok && invariant_ok && worst <= 1e-9;
  v.detail = std::to_string(fields) + " fields, worst |diff| " + fmt("%.1e", worst) +
             (sweep_ok ? ", sweeps exact" : ", sweep mismatch") +
             (invariant_ok ? ", rank invariance exact" : ", rank invariance broken");
  return v;
}

Verdict inflation() {
  const auto low = metrics::inflation_demo(0.01, 6, 7, 128, 128);
  const auto high = metrics::inflation_demo(0.5, 6, 7, 128, 128);
  const double gap_low = low.auroc - low.pap, gap_high = high.auroc - high.pap;
  Verdict v;
  v.pass = low.auroc > 0.95 && low.pap < 0.6 && low.dsc < 0.6 && gap_high < gap_low;
  v.detail = "AR 1%: AUROC " + fmt("%.4f", low.auroc) + " pAP " + fmt("%.4f", low.pap) + " DSC " +
             fmt("%.4f", low.dsc) + " gap " + fmt("%.4f", gap_low) + "; AR 50%: gap " + fmt("%.4f", gap_high);
  return v;
}

Verdict architecture() {
  Verdict v;
  std::vector<std::string> notes;
  auto fail = [&](const std::string& why) {
    v.pass = false;
    notes.push_back(why);
  };
  std::mt19937_64 rng(5);

  // Token counts and reconstruction shapes at the full-scale geometry (narrow width) and toy scale.
  auto full = decoder::DecoderConfig::full_scale();
  full.embed_dim = 32;
  full.ffn_dim = 64;
  for (const auto& [name, cfg] : {std::pair{"full-scale", full}, std::pair{"toy", decoder::DecoderConfig::toy()}}) {
    decoder::Decoder<float> d(cfg, 1);
    std::vector<Tensor<float>> in;
    std::set<std::int64_t> tokens;
    for (std::size_t i = 1; i <= cfg.levels(); ++i) {
      const Shape s = {1, 2 * cfg.feature_channels[i - 1], cfg.level_height(i), cfg.level_width(i)};
      in.push_back(testing::to_float(testing::random_tensor(s, rng)));
      tokens.insert(d.embed(i, in.back()).dim(1));
    }
    const auto recon = d.forward(in);
    for (std::size_t i = 1; i <= cfg.levels(); ++i) {
      const Shape expect = {1, cfg.feature_channels[i - 1], cfg.level_height(i), cfg.level_width(i)};
      if (recon[i - 1].shape() != expect) fail(std::string(name) + " level " + std::to_string(i) + " shape");
    }
    const std::int64_t n = *tokens.begin();
    if (tokens.size() != 1 || n != cfg.tokens()) fail(std::string(name) + " token counts differ");
    if (std::string(name) == "full-scale" && n != 196) fail("full-scale token count " + std::to_string(n));
    notes.push_back(std::string(name) + " N=" + std::to_string(n));
  }

  // MGG impulse response on a 15×15 grid stays inside the 7×7 window.
  {
    auto cfg = decoder::DecoderConfig::toy();
    decoder::Decoder<double> d(cfg, 2);
    const auto& mgg = d.level(1).mgg;
    if (mgg.branches.size() != 4) fail("MGG has " + std::to_string(mgg.branches.size()) + " branches");
    const std::int64_t g = 15, c = cfg.embed_dim, centre = 7;
    auto zero = Tensor<double>::zeros({1, g * g, c});
    auto impulse = zero.clone();
    for (std::int64_t ch = 0; ch < c; ++ch) impulse.values()[(centre * g + centre) * c + ch] = 1.0;
    const auto base = mgg(zero, g, g), hit = mgg(impulse, g, g);
    std::int64_t reach = 0;
    for (std::int64_t y = 0; y < g; ++y)
      for (std::int64_t x = 0; x < g; ++x)
        for (std::int64_t ch = 0; ch < c; ++ch) {
          const auto k = (y * g + x) * c + ch;
          if (std::abs(hit.values()[k] - base.values()[k]) > 0)
            reach = std::max({reach, std::abs(y - centre), std::abs(x - centre)});
        }
    if (reach > 3) fail("MGG reach " + std::to_string(reach));
    notes.push_back("MGG branches " + std::to_string(mgg.branches.size()) + ", support " +
                    std::to_string(2 * reach + 1) + "x" + std::to_string(2 * reach + 1));
  }

  // Map factors lie in [0,2] and the final map is their product.
  {
    const auto cfg = decoder::DecoderConfig::toy();
    std::vector<Tensor<float>> r, t;
    for (std::size_t i = 1; i <= cfg.levels(); ++i) {
      const Shape s = {cfg.feature_channels[i - 1], cfg.level_height(i), cfg.level_width(i)};
      r.push_back(testing::to_float(testing::random_tensor(s, rng)));
      t.push_back(testing::to_float(testing::random_tensor(s, rng)));
    }
    const auto m = engine::build_map(r, t, 64, 64);
    double worst = 0;
    bool range = true;
    for (std::size_t p = 0; p < m.final.values().size(); ++p) {
      double prod = 1;
      for (const auto& f : m.factors) {
        const double x = f.values()[p];
        range = range && x >= 0 && x <= 2;
        prod *= x;
      }
      worst = std::max(worst, std::abs(prod - m.final.values()[p]));
    }
    if (!range) fail("factor outside [0,2]");
    if (!(worst <= 1e-6)) fail("product mismatch " + fmt("%.1e", worst));
    notes.push_back("map product |diff| " + fmt("%.1e", worst));
  }
  for (const auto& n : notes) v.detail += (v.detail.empty() ? "" : "; ") + n;
  return v;
}

pipeline::RunConfig toy_config(const fs::path& work, const std::string& name) {
  pipeline::RunConfig c;
  c.corpus = (work / "corpus").string();
  c.output = (work / name).string();
  return c;
}

Verdict toy_training(const fs::path& work) {
  Verdict v;
  std::vector<std::string> notes;
  auto full_cfg = toy_config(work, "full");
  auto plain_cfg = toy_config(work, "no_mgg");
  plain_cfg.decoder.mgg = false;

  auto timed_train = [&](const pipeline::RunConfig& c) {
    const auto t0 = Clock::now();
    auto r = pipeline::train(c);
    const double minutes = seconds_since(t0) / 60;
    if (!(minutes < 30)) {
      v.pass = false;
      v.failed.insert("time");
    }
    notes.push_back(fs::path(c.output).filename().string() + " trained in " + fmt("%.1f min", minutes));
    return r;
  };
  const auto full = timed_train(full_cfg);
  const auto plain = timed_train(plain_cfg);

  const double first = full.log.front().total, last = full.log.back().total;
  const bool a = last < 0.3 * first;
  notes.insert(notes.begin(), "(a) loss " + fmt("%.4f", first) + " -> " + fmt("%.4f", last) +
                                  " (" + fmt("%.1f%%", 100 * last / first) + ")" + (a ? "" : " FAIL"));

  auto eval = [&](const pipeline::RunConfig& c, const fs::path& ckpt, std::vector<int> levels,
                  const std::string& tag) {
    pipeline::EvalOptions opt;
    opt.levels = std::move(levels);
    opt.output = fs::path(c.output) / ("eval_" + tag);
    return pipeline::evaluate(c, ckpt, opt).mean_pap;
  };
  const double full_pap = eval(full_cfg, full.checkpoint, {}, "all");
  bool b = true;
  std::string singles;
  for (int l = 1; l <= 4; ++l) {
    const double p = eval(full_cfg, full.checkpoint, {l}, "level" + std::to_string(l));
    b = b && full_pap > p;
    singles += " {" + std::to_string(l) + "} " + fmt("%.4f", p);
  }
  notes.push_back("(b) pAP {1,2,3,4} " + fmt("%.4f", full_pap) + " vs" + singles + (b ? "" : " FAIL"));
  const double plain_pap = eval(plain_cfg, plain.checkpoint, {}, "all");
  const bool c = full_pap > plain_pap;
  notes.push_back("(c) pAP with MGG " + fmt("%.4f", full_pap) + " vs without " + fmt("%.4f", plain_pap) +
                  (c ? "" : " FAIL"));
  if (!a) v.failed.insert("a");
  if (!b) v.failed.insert("b");
  if (!c) v.failed.insert("c");
  v.pass = v.pass && a && b && c;
  for (const auto& n : notes) v.detail += (v.detail.empty() ? "" : "; ") + n;
  return v;
}

Verdict reproducibility(const fs::path& work) {
  Verdict v;
  auto make = [&](const std::string& name) {
    pipeline::RunConfig c;
    c.corpus = (work / "repro_corpus").string();
    c.corpus_spec.train_count = 16;
    c.corpus_spec.test_normal = 4;
    c.corpus_spec.test_anomalous = 4;
    c.epochs = 3;
    c.checkpoint_every = 1;
    c.seed = 42;
    c.output = (work / name).string();
    return c;
  };
  const auto a = make("repro_a"), b = make("repro_b");
  pipeline::train(a);
  pipeline::train(b);
  const fs::path pa(a.output), pb(b.output);
  bool same = io::read_file(pa / "loss.csv") == io::read_file(pb / "loss.csv");
  std::size_t files = 1;
  for (int e = 1; e <= 3; ++e) {
    const std::string n = "checkpoints/epoch_000" + std::to_string(e) + ".ckpt";
    same = same && io::read_file(pa / n) == io::read_file(pb / n);
    ++files;
  }
  same = same && io::read_file(a.checkpoint_path()) == io::read_file(b.checkpoint_path());
  ++files;

  // save -> load -> save
  decoder::Decoder<float> d(a.decoder, 99);
  checkpoint::load(a.checkpoint_path(), d.params());
  checkpoint::save(pa / "resaved.ckpt", d.params());
  const bool round_trip = io::read_file(pa / "resaved.ckpt") == io::read_file(a.checkpoint_path());

  v.pass = same && round_trip;
  v.detail = std::to_string(files) + " files compared" + (same ? " byte-identical" : " DIFFER") +
             ", checkpoint round trip " + (round_trip ? "bit-exact" : "differs");
  return v;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    std::fprintf(stderr, "usage: acceptance <work dir> [--only name,...] [--known-failure criterion:part,...]\n");
    return 2;
  }
  const fs::path work = argv[1];
  auto split = [](const std::string& list) {
    std::set<std::string> out;
    std::stringstream ss(list);
    for (std::string item; std::getline(ss, item, ',');) out.insert(item);
    return out;
  };
  std::set<std::string> only, known;
  for (int i = 2; i + 1 < argc; i += 2) {
    const std::string flag = argv[i];
    if (flag == "--only") only = split(argv[i + 1]);
    else if (flag == "--known-failure") known = split(argv[i + 1]);
    else {
      std::fprintf(stderr, "unknown flag %s\n", flag.c_str());
      return 2;
    }
  }
  fs::create_directories(work);

  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria = {
      {"gradients", gradients},
      {"metrics-oracles", metrics_oracles},
      {"inflation", inflation},
      {"architecture", architecture},
      {"toy-training", [&] { return toy_training(work); }},
      {"reproducibility", [&] { return reproducibility(work); }},
  };
  int passed = 0, failed = 0, tolerated = 0, unexpected = 0;
  std::string report;
  for (const auto& [name, run] : criteria) {
    if (!only.empty() && !only.count(name)) continue;
    Verdict v;
    try {
      v = run();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what(), {}};
    }
    std::set<std::string> expected;
    for (const auto& k : known)
      if (k.rfind(name + ":", 0) == 0) expected.insert(k.substr(name.size() + 1));
    std::string note;
    if (v.pass) {
      ++passed;
      if (!expected.empty()) {
        ++unexpected;
        note = " [listed as a known failure but passed]";
      }
    } else if (!expected.empty() && v.failed == expected) {
      ++tolerated;
      std::string parts;
      for (const auto& p : expected) parts += (parts.empty() ? "" : ",") + p;
      note = " [known failure: " + parts + "]";
    } else {
      ++failed;
    }
    char head[64];
    std::snprintf(head, sizeof head, "%s %-16s ", v.pass ? "PASS" : "FAIL", name.c_str());
    const std::string line = head + v.detail + note + "\n";
    std::fputs(line.c_str(), stdout);
    std::fflush(stdout);
    report += line;
  }
  char summary[128];
  std::snprintf(summary, sizeof summary, "acceptance: %d passed, %d failed (%d known), %d unexpected passes\n",
                passed, failed + tolerated, tolerated, unexpected);
  std::fputs(summary, stdout);
  io::write_file(work / "acceptance_report.txt", report + summary);
  return failed == 0 && unexpected == 0 ? 0 : 1;
}
