// Copyright 2026 The UniAS Authors
// SPDX-License-Identifier: Apache-2.0

// unias: data generation, training, evaluation, map export and metric analysis.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "unias/checkpoint.hpp"
#include "unias/engine.hpp"
#include "unias/metrics.hpp"
#include "unias/pipeline.hpp"
#include "unias/rng.hpp"
#include "unias/synth.hpp"
#include "unias/tensor_io.hpp"

namespace fs = std::filesystem;
using namespace unias;

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3 };

synth::CorpusSpec read_spec(const std::string& path) {
  if (path.empty()) return {};
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(io::read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(path + ": " + e.what());
  }
  try {
    return j.get<synth::CorpusSpec>();
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(path + ": " + e.what());
  }
}

int gen_data(const std::string& spec_path, const std::string& out, const std::int64_t* seed) {
  synth::CorpusSpec spec = read_spec(spec_path);
  if (seed) spec.seed = static_cast<std::uint64_t>(*seed);
  spec.validate();
  const synth::Manifest m = synth::generate(spec, out);
  std::printf("%-12s %10s %10s\n", "category", "target_ar", "measured");
  for (const auto& c : m.categories) std::printf("%-12s %10.5f %10.5f\n", c.name.c_str(), c.target_ar, c.measured_ar);
  std::printf("%zu files written to %s\n", m.files.size(), out.c_str());
  return kOk;
}

int train(const std::string& config_path, bool quiet) {
  const pipeline::RunConfig config = pipeline::load_config(config_path);
  const auto result = pipeline::train(config, [&](const pipeline::EpochLoss& e) {
    if (!quiet)
      std::printf("epoch %4lld  cos %.6f  mse %.6f  total %.6f\n", static_cast<long long>(e.epoch),
                  e.cosine, e.mse, e.total);
    std::fflush(stdout);
  });
  std::printf("checkpoint: %s\n", result.checkpoint.string().c_str());
  return kOk;
}

void print_report(const metrics::EvalReport& r) {
  std::printf("%-12s %8s %8s %8s %8s\n", "category", "AUROC", "pAP", "DSC", "AR");
  for (const auto& c : r.categories)
    std::printf("%-12s %8.4f %8.4f %8.4f %8.4f\n", c.name.c_str(), c.auroc, c.pap, c.dsc, c.anomaly_rate);
  std::printf("%-12s %8.4f %8.4f %8.4f %8.4f\n", "mean", r.mean_auroc, r.mean_pap, r.mean_dsc,
              r.mean_anomaly_rate);
}

int eval(const std::string& config_path, const std::string& ckpt, const std::vector<int>& levels,
         bool maps, const std::string& out) {
  const pipeline::RunConfig config = pipeline::load_config(config_path);
  pipeline::EvalOptions opt{levels, maps, out};
  print_report(pipeline::evaluate(config, ckpt, opt));
  return kOk;
}

int map(const std::string& config_path, const std::string& ckpt, const std::string& image_path,
        const std::vector<int>& levels, const std::string& out) {
  const pipeline::RunConfig config = pipeline::load_config(config_path);
  decoder::Decoder<float> model(config.decoder, rng::derive(config.seed, "init"));
  checkpoint::load(ckpt, model.params());
  const synth::Rgb8 img = synth::decode_ppm(io::read_file(image_path), image_path);
  const std::int64_t hw = img.height * img.width;
  std::vector<float> chw(static_cast<std::size_t>(3 * hw));
  for (std::int64_t p = 0; p < hw; ++p)
    for (int ch = 0; ch < 3; ++ch) chw[ch * hw + p] = img.pixels[p * 3 + ch] / 255.0f;
  const auto image = Tensor<float>::from({3, img.height, img.width}, std::move(chw));
  const auto m = pipeline::infer_map(config, model, image, fs::path(image_path).stem().string(), levels);
  engine::export_ust(out + ".ust", m.final);
  engine::export_pgm(out + ".pgm", m.final);
  std::printf("%s.ust %s.pgm  max score %.6f\n", out.c_str(), out.c_str(), m.image_score());
  return kOk;
}

int analyze(double ar, std::int64_t dilation, std::int64_t seed, std::int64_t size, const std::string& out) {
  const auto r = metrics::inflation_demo(ar, dilation, static_cast<std::uint64_t>(seed), size, size);
  std::printf("ar %.6f dilation %lld seed %lld\n", r.anomaly_rate, static_cast<long long>(dilation),
              static_cast<long long>(seed));
  std::printf("AUROC %.6f\npAP   %.6f\nDSC   %.6f\ngap   %.6f\n", r.auroc, r.pap, r.dsc, r.auroc - r.pap);
  if (!out.empty()) {
    std::string roc = "fpr,tpr\n0,0\n", pr = "recall,precision\n";
    char buf[96];
    for (const auto& p : r.points) {
      std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", p.fpr, p.recall);
      roc += buf;
      std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", p.recall, p.precision);
      pr += buf;
    }
    io::write_file(fs::path(out) / "roc.csv", roc);
    io::write_file(fs::path(out) / "pr.csv", pr);
    io::write_file(fs::path(out) / "curve.csv", metrics::curve_csv(r.points));
    nlohmann::json j = {{"auroc", r.auroc}, {"pap", r.pap},           {"dsc", r.dsc},
                        {"threshold", r.threshold}, {"anomaly_rate", r.anomaly_rate}};
    io::write_file(fs::path(out) / "metrics.json", j.dump(2) + "\n");
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"UniAS anomaly segmentation toolkit"};
  app.require_subcommand(1);

  std::string spec_path, out, config_path, ckpt, image_path;
  std::int64_t seed = 0, demo_seed = 7, dilation = 6, size = 128;
  double ar = 0.01;
  std::vector<int> levels;
  bool maps = false, quiet = false;

  auto* gen = app.add_subcommand("gen-data", "Generate the synthetic corpus");
  gen->add_option("--spec", spec_path, "Corpus spec JSON (defaults when omitted)")->check(CLI::ExistingFile);
  gen->add_option("--out", out, "Output directory")->required();
  auto* gen_seed = gen->add_option("--seed", seed, "Override the spec's master seed");

  auto* tr = app.add_subcommand("train", "Train one model over all categories");
  tr->add_option("--config", config_path, "Run config JSON")->required()->check(CLI::ExistingFile);
  tr->add_flag("--quiet", quiet, "Suppress per-epoch lines");

  auto* ev = app.add_subcommand("eval", "Evaluate on the test split");
  ev->add_option("--config", config_path, "Run config JSON")->required()->check(CLI::ExistingFile);
  ev->add_option("--checkpoint", ckpt, "Checkpoint; omit to evaluate the untrained model");
  ev->add_option("--levels", levels, "Levels to aggregate, e.g. --levels 4 or --levels 1,2")->delimiter(',');
  ev->add_flag("--maps", maps, "Write per-image PGM heatmaps");
  ev->add_option("--out", out, "Output directory (default <output>/eval)");

  auto* mp = app.add_subcommand("map", "Anomaly map of one PPM image");
  mp->add_option("--config", config_path, "Run config JSON")->required()->check(CLI::ExistingFile);
  mp->add_option("--checkpoint", ckpt, "Checkpoint")->required();
  mp->add_option("--image", image_path, "P6 image")->required();
  mp->add_option("--levels", levels, "Levels to aggregate")->delimiter(',');
  mp->add_option("--out", out, "Output prefix; writes <prefix>.ust and <prefix>.pgm")->required();

  auto* an = app.add_subcommand("analyze-metrics", "AUROC inflation demo");
  an->add_option("--ar", ar, "Anomaly rate")->check(CLI::Range(0.0, 1.0));
  an->add_option("--dilation", dilation, "Prediction dilation in pixels")->check(CLI::NonNegativeNumber);
  an->add_option("--seed", demo_seed, "Seed");
  an->add_option("--size", size, "Field extent")->check(CLI::PositiveNumber);
  an->add_option("--out", out, "Directory for roc.csv, pr.csv, curve.csv, metrics.json");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    if (*gen) return gen_data(spec_path, out, gen_seed->count() ? &seed : nullptr);
    if (*tr) return train(config_path, quiet);
    if (*ev) return eval(config_path, ckpt, levels, maps, out);
    if (*mp) return map(config_path, ckpt, image_path, levels, out);
    if (*an) return analyze(ar, dilation, demo_seed, size, out);
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kNumeric;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid input: " << e.what() << "\n";
    return kUsage;
  }
  return kUsage;
}
