// Copyright 2026 The UniAS Authors
// SPDX-License-Identifier: Apache-2.0

// Multi-level hybrid reconstruction decoder. Every level is patchified to the
// same H_K×W_K token grid; decoding runs from the top level down, each level
// applying a transformer layer (cross attention to its own tokens, self
// attention, FFN) followed by a multi-granularity gated CNN, and a transposed
// convolution head maps the tokens back to that level's feature shape.

#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"
#include "unias/optim.hpp"
#include "unias/tensor.hpp"

namespace unias::decoder {

struct DecoderConfig {
  std::vector<std::int64_t> feature_channels = {8, 16, 24, 32};  // C_i; input carries 2·C_i
  std::vector<std::int64_t> patch_sizes = {8, 4, 2, 1};
  std::int64_t grid_h = 4;
  std::int64_t grid_w = 4;
  std::int64_t embed_dim = 32;
  std::int64_t heads = 2;
  std::int64_t ffn_dim = 64;
  bool channel_attention = false;
  bool mgg = true;
  std::int64_t sar_reduction = 16;
  std::int64_t sar_kernel = 7;

  static DecoderConfig toy();
  static DecoderConfig full_scale();

  std::size_t levels() const { return feature_channels.size(); }
  std::int64_t tokens() const { return grid_h * grid_w; }
  /// Extents of level `i` (1-based) implied by the grid and its patch size.
  std::int64_t level_height(std::size_t i) const { return grid_h * patch_sizes.at(i - 1); }
  std::int64_t level_width(std::size_t i) const { return grid_w * patch_sizes.at(i - 1); }
  /// Throws std::invalid_argument on an inconsistent configuration.
  void validate() const;
};

void to_json(nlohmann::json& j, const DecoderConfig& c);
/// Missing keys keep their defaults; unknown keys throw std::invalid_argument.
void from_json(const nlohmann::json& j, DecoderConfig& c);

template <typename T>
struct Linear {
  Tensor<T> weight;  // [out, in]
  Tensor<T> bias;    // [out]
  Tensor<T> operator()(const Tensor<T>& x) const;
};

template <typename T>
struct LayerNorm {
  Tensor<T> gamma;
  Tensor<T> beta;
  Tensor<T> operator()(const Tensor<T>& x) const;
};

template <typename T>
struct Conv {
  Tensor<T> weight;  // [out, in, k, k]
  Tensor<T> bias;
  std::int64_t stride = 1;
  std::int64_t pad = 0;
  Tensor<T> operator()(const Tensor<T>& x) const;
};

template <typename T>
struct Attention {
  Linear<T> q, k, v, o;
  std::int64_t heads = 1;
  /// Spatial attention over tokens: q from [B,N,C] `query`, keys/values from `source`.
  Tensor<T> spatial(const Tensor<T>& query, const Tensor<T>& source) const;
  /// Channel attention: heads attend over their channel slices, logits scaled by N^-1/2.
  Tensor<T> channel(const Tensor<T>& x) const;
};

template <typename T>
struct TransformerLayer {
  LayerNorm<T> norm_q, norm_kv, norm_self, norm_ffn;
  Attention<T> cross, self;
  Linear<T> ffn_in, ffn_out;
  bool channel_attention = false;
  LayerNorm<T> norm_channel, norm_channel_ffn;
  Attention<T> channel;
  Linear<T> channel_ffn_in, channel_ffn_out;

  Tensor<T> cross_block(const Tensor<T>& q, const Tensor<T>& kv) const;
  Tensor<T> operator()(const Tensor<T>& q, const Tensor<T>& kv) const;
};

template <typename T>
struct MggCnn {
  std::vector<std::vector<Conv<T>>> branches;  // 1×1, then stacks of one, two and three 3×3
  /// tokens [B,N,C] on a grid_h×grid_w grid.
  Tensor<T> operator()(const Tensor<T>& tokens, std::int64_t grid_h, std::int64_t grid_w) const;
  /// Runs a single branch; used for receptive-field checks.
  Tensor<T> branch(std::size_t b, const Tensor<T>& grid) const;
};

template <typename T>
struct SarQuery {
  Tensor<T> base;  // [N, C′]
  Linear<T> fc1, fc2;
  Conv<T> spatial;

  struct Weights {
    Tensor<T> channel;  // [B,1,C′] in (0,1)
    Tensor<T> spatial;  // [B,N,1] in (0,1)
  };
  Weights weights(const Tensor<T>& h_top, std::int64_t grid_h, std::int64_t grid_w) const;
  /// q₀ = base ⊙ W_c ⊙ W_s, shape [B,N,C′].
  Tensor<T> operator()(const Tensor<T>& h_top, std::int64_t grid_h, std::int64_t grid_w) const;
};

template <typename T>
struct DecoderLevel {
  Conv<T> embed;        // kernel == stride == patch size
  Tensor<T> position;   // [N, C′]
  TransformerLayer<T> layer;
  MggCnn<T> mgg;
  Conv<T> head;         // transposed, weight [C′, C_i, p, p]
};

/// The decoder with parameters registered in a ParamStore under stable names.
template <typename T>
class Decoder {
 public:
  Decoder(DecoderConfig config, std::uint64_t seed);

  const DecoderConfig& config() const { return config_; }
  ParamStore<T>& params() { return params_; }
  const ParamStore<T>& params() const { return params_; }
  const SarQuery<T>& query() const { return query_; }
  const DecoderLevel<T>& level(std::size_t i) const { return levels_.at(i - 1); }

  /// [B, 2·C_i, H_i, W_i] -> tokens [B, N, C′] with the positional embedding added.
  Tensor<T> embed(std::size_t i, const Tensor<T>& input) const;
  /// Tokens [B,N,C′] -> [B, C_i, H_i, W_i].
  Tensor<T> reconstruct(std::size_t i, const Tensor<T>& tokens) const;
  /// Inputs indexed by level (level 1 first); returns reconstructions in the same order.
  std::vector<Tensor<T>> forward(const std::vector<Tensor<T>>& inputs) const;

 private:
  Tensor<T> param(const std::string& name, Shape shape, std::mt19937_64& rng, int init,
                  std::int64_t fan_in = 1);
  Linear<T> make_linear(const std::string& name, std::int64_t in, std::int64_t out,
                        std::mt19937_64& rng);
  LayerNorm<T> make_norm(const std::string& name, std::int64_t dim);
  Conv<T> make_conv(const std::string& name, std::int64_t in, std::int64_t out, std::int64_t k,
                    std::int64_t stride, std::int64_t pad, std::mt19937_64& rng);
  Attention<T> make_attention(const std::string& name, std::mt19937_64& rng);

  DecoderConfig config_;
  ParamStore<T> params_;
  SarQuery<T> query_;
  std::vector<DecoderLevel<T>> levels_;
};

}  // namespace unias::decoder
