// Copyright 2026 The UniAS Authors
// SPDX-License-Identifier: Apache-2.0

#include "unias/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <numeric>
#include <random>
#include <set>

#include "unias/checkpoint.hpp"
#include "unias/optim.hpp"
#include "unias/rng.hpp"
#include "unias/tensor_io.hpp"

namespace unias::pipeline {

namespace fs = std::filesystem;

std::int64_t RunConfig::decay_every() const {
  if (optimizer.decay_every > 0) return optimizer.decay_every;
  return std::max<std::int64_t>(1, std::llround(static_cast<double>(epochs) / 2.5));
}

double RunConfig::lr_at(std::int64_t epoch) const {
  const std::int64_t decays = (epoch - 1) / decay_every();
  return optimizer.lr * std::pow(optimizer.decay_factor, static_cast<double>(decays));
}

fs::path RunConfig::checkpoint_path() const {
  return checkpoint.empty() ? fs::path(output) / "model.ckpt" : fs::path(checkpoint);
}

void RunConfig::validate() const {
  auto fail = [](const std::string& m) { throw std::invalid_argument("run config: " + m); };
  decoder.validate();
  corpus_spec.validate();
  if (corpus.empty()) fail("corpus path is empty");
  if (output.empty()) fail("output path is empty");
  if (epochs < 1) fail("epochs must be positive");
  if (batch_size < 1) fail("batch_size must be positive");
  if (checkpoint_every < 1) fail("checkpoint_every must be positive");
  if (!(optimizer.lr > 0)) fail("lr must be positive");
  if (optimizer.weight_decay < 0) fail("weight_decay must be non-negative");
  if (!(optimizer.decay_factor > 0 && optimizer.decay_factor <= 1)) fail("decay_factor must lie in (0, 1]");
  if (optimizer.decay_every < 0) fail("decay_every must be non-negative");
  if (smoothing_size < 1 || smoothing_size % 2 == 0) fail("smoothing_size must be odd");
  if (!(smoothing_sigma > 0)) fail("smoothing_sigma must be positive");
}

void to_json(nlohmann::json& j, const OptimizerConfig& c) {
  j = {{"lr", c.lr},
       {"weight_decay", c.weight_decay},
       {"decay_factor", c.decay_factor},
       {"decay_every", c.decay_every}};
}

namespace {

void reject_unknown(const nlohmann::json& j, const std::set<std::string>& known, const std::string& what) {
  if (!j.is_object()) throw std::invalid_argument(what + " must be a JSON object");
  for (const auto& [key, value] : j.items())
    if (!known.count(key)) throw std::invalid_argument("unknown " + what + " key '" + key + "'");
}

}  // namespace

void from_json(const nlohmann::json& j, OptimizerConfig& c) {
  reject_unknown(j, {"lr", "weight_decay", "decay_factor", "decay_every"}, "optimizer");
  c.lr = j.value("lr", c.lr);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.decay_factor = j.value("decay_factor", c.decay_factor);
  c.decay_every = j.value("decay_every", c.decay_every);
}

void to_json(nlohmann::json& j, const RunConfig& c) {
  j = {{"corpus", c.corpus},
       {"corpus_spec", c.corpus_spec},
       {"decoder", c.decoder},
       {"backbone_seed", c.backbone_seed},
       {"features_dir", c.features_dir},
       {"smoothing_size", c.smoothing_size},
       {"smoothing_sigma", c.smoothing_sigma},
       {"optimizer", c.optimizer},
       {"epochs", c.epochs},
       {"batch_size", c.batch_size},
       {"checkpoint_every", c.checkpoint_every},
       {"seed", c.seed},
       {"checkpoint", c.checkpoint},
       {"output", c.output}};
}

void from_json(const nlohmann::json& j, RunConfig& c) {
  reject_unknown(j,
                 {"corpus", "corpus_spec", "decoder", "backbone_seed", "features_dir",
                  "smoothing_size", "smoothing_sigma", "optimizer", "epochs", "batch_size",
                  "checkpoint_every", "seed", "checkpoint", "output"},
                 "run config");
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) j.at(key).get_to(field);
  };
  get("corpus", c.corpus);
  get("corpus_spec", c.corpus_spec);
  get("decoder", c.decoder);
  get("backbone_seed", c.backbone_seed);
  get("features_dir", c.features_dir);
  get("smoothing_size", c.smoothing_size);
  get("smoothing_sigma", c.smoothing_sigma);
  get("optimizer", c.optimizer);
  get("epochs", c.epochs);
  get("batch_size", c.batch_size);
  get("checkpoint_every", c.checkpoint_every);
  get("seed", c.seed);
  get("checkpoint", c.checkpoint);
  get("output", c.output);
}

RunConfig load_config(const fs::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(io::read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  RunConfig c;
  try {
    c = j.get<RunConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(path.string() + ": " + e.what());
  }
  c.validate();
  return c;
}

std::unique_ptr<features::FeatureProvider> make_provider(const RunConfig& config) {
  if (!config.features_dir.empty())
    return std::make_unique<features::FileProvider>(config.features_dir, config.decoder.feature_channels);
  return std::make_unique<features::TinyBackbone>(
      features::BackboneConfig{config.decoder.feature_channels, config.backbone_seed});
}

Prepared prepare(const features::FeatureProvider& provider, const features::GaussianKernel& kernel,
                 const Tensor<float>& image, const std::string& id) {
  const auto filtered = features::filter_and_concat(provider.provide(image, id), kernel);
  return {id, filtered.concatenated.levels, filtered.filtered.levels};
}

Tensor<float> stack(const std::vector<const Tensor<float>*>& items) {
  if (items.empty()) throw ShapeError("stack of no tensors");
  const Shape& inner = items.front()->shape();
  Shape shape = {static_cast<std::int64_t>(items.size())};
  shape.insert(shape.end(), inner.begin(), inner.end());
  std::vector<float> values;
  values.reserve(static_cast<std::size_t>(numel(shape)));
  for (const Tensor<float>* t : items) {
    if (t->shape() != inner)
      throw ShapeError("stack: " + to_string(t->shape()) + " vs " + to_string(inner));
    values.insert(values.end(), t->values().begin(), t->values().end());
  }
  return Tensor<float>::from(std::move(shape), std::move(values));
}

synth::Corpus open_corpus(const RunConfig& config) {
  if (!fs::exists(fs::path(config.corpus) / "manifest.json")) {
    synth::CorpusSpec spec = config.corpus_spec;
    spec.seed = rng::derive(config.seed, "data");
    synth::generate(spec, config.corpus);
  }
  return synth::Corpus(config.corpus);
}

namespace {

features::GaussianKernel kernel_of(const RunConfig& c) {
  return features::GaussianKernel::make(c.smoothing_size, c.smoothing_sigma);
}

std::vector<Prepared> prepare_all(const RunConfig& config, const synth::Corpus& corpus,
                                  const std::vector<const synth::FileEntry*>& entries,
                                  std::vector<std::vector<std::uint8_t>>* masks = nullptr) {
  const auto provider = make_provider(config);
  const auto kernel = kernel_of(config);
  std::vector<Prepared> out(entries.size());
  if (masks) masks->assign(entries.size(), {});
  const auto n = static_cast<std::int64_t>(entries.size());
  std::string error;
#pragma omp parallel for schedule(dynamic)
  for (std::int64_t i = 0; i < n; ++i) {
    try {
      const synth::Sample s = corpus.load(*entries[i]);
      out[i] = prepare(*provider, kernel, s.image, s.id);
      if (masks) (*masks)[i] = s.mask;
    } catch (const std::exception& e) {
#pragma omp critical
      if (error.empty()) error = e.what();
    }
  }
  if (!error.empty()) throw DataError(error);
  return out;
}

std::vector<Tensor<float>> batch_level(const std::vector<Prepared>& data,
                                       std::span<const std::size_t> idx, bool inputs) {
  std::vector<Tensor<float>> out;
  const std::size_t levels = data.front().inputs.size();
  for (std::size_t l = 0; l < levels; ++l) {
    std::vector<const Tensor<float>*> items;
    for (std::size_t i : idx) items.push_back(inputs ? &data[i].inputs[l] : &data[i].targets[l]);
    out.push_back(stack(items));
  }
  return out;
}

Tensor<float> slice(const Tensor<float>& batch, std::int64_t b) {
  Shape inner(batch.shape().begin() + 1, batch.shape().end());
  const auto n = numel(inner);
  std::vector<float> v(batch.values().begin() + b * n, batch.values().begin() + (b + 1) * n);
  return Tensor<float>::from(std::move(inner), std::move(v));
}

void check_corpus_fits(const RunConfig& config, const synth::Corpus& corpus) {
  const auto& spec = corpus.manifest().spec;
  const auto& d = config.decoder;
  if (spec.height != 2 * d.level_height(1) || spec.width != 2 * d.level_width(1))
    throw std::invalid_argument("corpus images are " + std::to_string(spec.height) + "x" +
                                std::to_string(spec.width) + " but the decoder expects " +
                                std::to_string(2 * d.level_height(1)) + "x" +
                                std::to_string(2 * d.level_width(1)));
}

std::string checkpoint_name(std::int64_t epoch) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "epoch_%04lld.ckpt", static_cast<long long>(epoch));
  return buf;
}

}  // namespace

std::string loss_csv(const std::vector<EpochLoss>& log) {
  std::string out = "epoch,cos,mse,total\n";
  char buf[128];
  for (const auto& e : log) {
    std::snprintf(buf, sizeof buf, "%lld,%.9g,%.9g,%.9g\n", static_cast<long long>(e.epoch), e.cosine,
                  e.mse, e.total);
    out += buf;
  }
  return out;
}

TrainResult train(const RunConfig& config, const Progress& progress) {
  config.validate();
  const synth::Corpus corpus = open_corpus(config);
  check_corpus_fits(config, corpus);
  const auto entries = corpus.entries("train");
  if (entries.empty()) throw DataError(config.corpus + ": training split is empty");
  for (const synth::FileEntry* e : entries)
    if (e->anomalous || !e->mask.empty())
      throw DataError(e->image + ": anomalous sample in the training split");

  const fs::path out(config.output);
  io::write_file(out / "config.json", nlohmann::json(config).dump(2) + "\n");

  std::vector<std::vector<std::uint8_t>> masks;
  const std::vector<Prepared> data = prepare_all(config, corpus, entries, &masks);
  for (std::size_t i = 0; i < masks.size(); ++i)
    if (std::any_of(masks[i].begin(), masks[i].end(), [](auto v) { return v != 0; }))
      throw DataError(entries[i]->image + ": anomalous sample in the training split");

  decoder::Decoder<float> model(config.decoder, rng::derive(config.seed, "init"));
  std::vector<Tensor<float>> params;
  for (const auto& e : model.params().entries()) params.push_back(e.tensor);
  AdamW<float> opt(params, {config.optimizer.lr, 0.9, 0.999, 1e-8, config.optimizer.weight_decay});
  std::mt19937_64 shuffle_rng(rng::derive(config.seed, "shuffle"));

  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  TrainResult result;
  const auto bs = static_cast<std::size_t>(config.batch_size);
  for (std::int64_t epoch = 1; epoch <= config.epochs; ++epoch) {
    opt.set_lr(config.lr_at(epoch));
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    EpochLoss acc{epoch};
    for (std::size_t start = 0; start < order.size(); start += bs) {
      const std::span<const std::size_t> idx(order.data() + start, std::min(bs, order.size() - start));
      const auto inputs = batch_level(data, idx, true);
      const auto targets = batch_level(data, idx, false);
      Tape<float> tape;
      TapeGuard<float> guard(tape);
      model.params().zero_grad();
      const auto loss = engine::training_loss(model.forward(inputs), targets);
      const double total = loss.total.item();
      if (!std::isfinite(total))
        throw NumericError("non-finite loss at epoch " + std::to_string(epoch));
      tape.backward(loss.total);
      opt.step();
      const double w = static_cast<double>(idx.size());
      acc.cosine += loss.cosine_sum() * w;
      acc.mse += loss.mse_sum() * w;
      acc.total += total * w;
    }
    const double n = static_cast<double>(order.size());
    acc.cosine /= n;
    acc.mse /= n;
    acc.total /= n;
    result.log.push_back(acc);
    io::write_file(out / "loss.csv", loss_csv(result.log));
    if (epoch % config.checkpoint_every == 0 || epoch == config.epochs)
      checkpoint::save(out / "checkpoints" / checkpoint_name(epoch), model.params());
    if (progress) progress(acc);
  }
  result.checkpoint = config.checkpoint_path();
  checkpoint::save(result.checkpoint, model.params());
  return result;
}

engine::AnomalyMap infer_map(const RunConfig& config, const decoder::Decoder<float>& model,
                             const Tensor<float>& image, const std::string& id,
                             const std::vector<int>& levels) {
  const auto provider = make_provider(config);
  const Prepared p = prepare(*provider, kernel_of(config), image, id);
  std::vector<Tensor<float>> inputs;
  for (const auto& t : p.inputs) inputs.push_back(t.reshaped(Shape{1, t.dim(0), t.dim(1), t.dim(2)}));
  const auto recon = model.forward(inputs);
  std::vector<Tensor<float>> r;
  for (const auto& t : recon) r.push_back(slice(t, 0));
  return engine::build_map(r, p.targets, image.dim(1), image.dim(2), levels, id);
}

metrics::EvalReport evaluate(const RunConfig& config, const fs::path& checkpoint,
                             const EvalOptions& options) {
  config.validate();
  const synth::Corpus corpus = open_corpus(config);
  check_corpus_fits(config, corpus);
  decoder::Decoder<float> model(config.decoder, rng::derive(config.seed, "init"));
  if (!checkpoint.empty()) checkpoint::load(checkpoint, model.params());
  const std::size_t K = config.decoder.levels();
  for (int l : options.levels)
    if (l < 1 || static_cast<std::size_t>(l) > K)
      throw std::invalid_argument("level " + std::to_string(l) + " is outside 1.." + std::to_string(K));

  const fs::path out = options.output.empty() ? fs::path(config.output) / "eval" : options.output;
  const auto& spec = corpus.manifest().spec;
  std::vector<metrics::CategoryReport> reports;
  for (const auto& cat : spec.categories) {
    const auto entries = corpus.entries("test", cat.name);
    std::vector<std::vector<std::uint8_t>> masks;
    const std::vector<Prepared> data = prepare_all(config, corpus, entries, &masks);
    metrics::CategoryInput input;
    input.name = cat.name;
    input.truths = masks;
    input.scores.resize(data.size());
    const std::size_t bs = 32;
    for (std::size_t start = 0; start < data.size(); start += bs) {
      std::vector<std::size_t> idx(std::min(bs, data.size() - start));
      std::iota(idx.begin(), idx.end(), start);
      const auto recon = model.forward(batch_level(data, idx, true));
      for (std::size_t b = 0; b < idx.size(); ++b) {
        std::vector<Tensor<float>> r;
        for (const auto& t : recon) r.push_back(slice(t, static_cast<std::int64_t>(b)));
        const std::size_t i = idx[b];
        const auto map = engine::build_map(r, data[i].targets, spec.height, spec.width, options.levels,
                                           data[i].id);
        input.scores[i].assign(map.final.values().begin(), map.final.values().end());
        if (options.write_maps) engine::export_pgm(out / "maps" / (data[i].id + ".pgm"), map.final);
      }
    }
    for (const auto& d : data) input.image_ids.push_back(d.id);
    reports.push_back(metrics::evaluate_category(input));
    io::write_file(out / "curves" / (cat.name + ".csv"), metrics::curve_csv(reports.back().points));
  }
  metrics::EvalReport report = metrics::summarize(std::move(reports));
  if (options.levels.empty()) {
    for (std::size_t l = 1; l <= K; ++l) report.levels.push_back(static_cast<int>(l));
  } else {
    report.levels = options.levels;
  }
  io::write_file(out / "report.json", metrics::to_json(report).dump(2) + "\n");
  return report;
}

}  // namespace unias::pipeline
