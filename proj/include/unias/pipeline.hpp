// Copyright 2026 The UniAS Authors
// SPDX-License-Identifier: Apache-2.0

// Config-driven training and evaluation over a synthetic corpus.

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"
#include "unias/decoder.hpp"
#include "unias/engine.hpp"
#include "unias/features.hpp"
#include "unias/metrics.hpp"
#include "unias/synth.hpp"

namespace unias::pipeline {

struct OptimizerConfig {
  double lr = 1e-4;
  double weight_decay = 1e-4;
  double decay_factor = 0.1;
  std::int64_t decay_every = 0;  // 0: round(epochs / 2.5)
};

struct RunConfig {
  std::string corpus = "corpus";
  synth::CorpusSpec corpus_spec;  // used to generate `corpus` when it has no manifest
  decoder::DecoderConfig decoder;
  std::uint64_t backbone_seed = 0;
  std::string features_dir;       // precomputed pyramids; empty uses the built-in backbone
  std::int64_t smoothing_size = 3;
  double smoothing_sigma = 1.0;
  OptimizerConfig optimizer;
  std::int64_t epochs = 200;
  std::int64_t batch_size = 16;
  std::int64_t checkpoint_every = 50;
  std::uint64_t seed = 0;
  std::string checkpoint;         // empty: <output>/model.ckpt
  std::string output = "run";

  std::int64_t decay_every() const;
  /// Learning rate used during `epoch` (1-based).
  double lr_at(std::int64_t epoch) const;
  std::filesystem::path checkpoint_path() const;
  /// Throws std::invalid_argument.
  void validate() const;
};

void to_json(nlohmann::json& j, const OptimizerConfig& c);
void from_json(const nlohmann::json& j, OptimizerConfig& c);
void to_json(nlohmann::json& j, const RunConfig& c);
/// Missing keys keep defaults; unknown keys throw std::invalid_argument.
void from_json(const nlohmann::json& j, RunConfig& c);
RunConfig load_config(const std::filesystem::path& path);

/// Provider described by the config; channels must match the decoder.
std::unique_ptr<features::FeatureProvider> make_provider(const RunConfig& config);

/// Decoder inputs and targets of one image, all levels.
struct Prepared {
  std::string id;
  std::vector<Tensor<float>> inputs;   // [2C_i, H_i, W_i]
  std::vector<Tensor<float>> targets;  // [C_i, H_i, W_i]
};

Prepared prepare(const features::FeatureProvider& provider, const features::GaussianKernel& kernel,
                 const Tensor<float>& image, const std::string& id);

/// Stacks per-image tensors of one level into a batch along a new leading axis.
Tensor<float> stack(const std::vector<const Tensor<float>*>& items);

struct EpochLoss {
  std::int64_t epoch = 0;
  double cosine = 0, mse = 0, total = 0;
};

struct TrainResult {
  std::vector<EpochLoss> log;
  std::filesystem::path checkpoint;
};

using Progress = std::function<void(const EpochLoss&)>;

/// Trains one model over every category's training split. Writes config.json,
/// loss.csv, milestone checkpoints under <output>/checkpoints and the final
/// checkpoint. DataError when the training split holds an anomalous sample;
/// NumericError on a non-finite loss.
TrainResult train(const RunConfig& config, const Progress& progress = {});

std::string loss_csv(const std::vector<EpochLoss>& log);

struct EvalOptions {
  std::vector<int> levels;  // 1-based; empty means all
  bool write_maps = false;
  std::filesystem::path output;  // empty: <config.output>/eval
};

/// Runs inference on the test split and writes report.json, curves/<category>.csv
/// and, on request, maps/<image id>.pgm. An empty `checkpoint` evaluates the
/// freshly initialized model.
metrics::EvalReport evaluate(const RunConfig& config, const std::filesystem::path& checkpoint,
                             const EvalOptions& options);

/// Anomaly map of one image with a trained model.
engine::AnomalyMap infer_map(const RunConfig& config, const decoder::Decoder<float>& model,
                             const Tensor<float>& image, const std::string& id,
                             const std::vector<int>& levels = {});

/// Loads a corpus, generating it from the config's spec when the manifest is missing.
synth::Corpus open_corpus(const RunConfig& config);

}  // namespace unias::pipeline
