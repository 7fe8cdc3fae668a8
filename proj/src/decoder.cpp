// Copyright 2026 The UniAS Authors
// SPDX-License-Identifier: Apache-2.0

#include "unias/decoder.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

#include "unias/ops.hpp"

namespace unias::decoder {

DecoderConfig DecoderConfig::toy() { return DecoderConfig{}; }

DecoderConfig DecoderConfig::full_scale() {
  DecoderConfig c;
  c.feature_channels = {24, 32, 56, 160};
  c.patch_sizes = {8, 4, 2, 1};
  c.grid_h = c.grid_w = 14;
  c.embed_dim = 256;
  c.heads = 4;
  c.ffn_dim = 2048;
  c.channel_attention = true;
  return c;
}

void DecoderConfig::validate() const {
  auto fail = [](const std::string& m) { throw std::invalid_argument("decoder config: " + m); };
  if (feature_channels.empty()) fail("at least one level is required");
  if (patch_sizes.size() != feature_channels.size())
    fail("patch_sizes has " + std::to_string(patch_sizes.size()) + " entries for " +
         std::to_string(feature_channels.size()) + " levels");
  for (auto c : feature_channels)
    if (c <= 0) fail("feature channels must be positive");
  for (auto p : patch_sizes)
    if (p <= 0) fail("patch sizes must be positive");
  if (grid_h <= 0 || grid_w <= 0) fail("grid extents must be positive");
  if (embed_dim <= 0 || heads <= 0 || ffn_dim <= 0) fail("dimensions must be positive");
  if (embed_dim % heads != 0)
    fail("embed_dim " + std::to_string(embed_dim) + " is not divisible by " +
         std::to_string(heads) + " heads");
  if (sar_reduction <= 0) fail("sar_reduction must be positive");
  if (sar_kernel <= 0 || sar_kernel % 2 == 0) fail("sar_kernel must be odd");
}

void to_json(nlohmann::json& j, const DecoderConfig& c) {
  j = nlohmann::json{{"feature_channels", c.feature_channels},
                     {"patch_sizes", c.patch_sizes},
                     {"grid_h", c.grid_h},
                     {"grid_w", c.grid_w},
                     {"embed_dim", c.embed_dim},
                     {"heads", c.heads},
                     {"ffn_dim", c.ffn_dim},
                     {"channel_attention", c.channel_attention},
                     {"mgg", c.mgg},
                     {"sar_reduction", c.sar_reduction},
                     {"sar_kernel", c.sar_kernel}};
}

void from_json(const nlohmann::json& j, DecoderConfig& c) {
  if (!j.is_object()) throw std::invalid_argument("decoder config must be a JSON object");
  static const std::set<std::string> known = {
      "feature_channels", "patch_sizes", "grid_h", "grid_w", "embed_dim", "heads",
      "ffn_dim", "channel_attention", "mgg", "sar_reduction", "sar_kernel"};
  for (const auto& [key, value] : j.items())
    if (!known.count(key)) throw std::invalid_argument("unknown decoder config key '" + key + "'");
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) j.at(key).get_to(field);
  };
  get("feature_channels", c.feature_channels);
  get("patch_sizes", c.patch_sizes);
  get("grid_h", c.grid_h);
  get("grid_w", c.grid_w);
  get("embed_dim", c.embed_dim);
  get("heads", c.heads);
  get("ffn_dim", c.ffn_dim);
  get("channel_attention", c.channel_attention);
  get("mgg", c.mgg);
  get("sar_reduction", c.sar_reduction);
  get("sar_kernel", c.sar_kernel);
}

namespace {

template <typename T>
Tensor<T> to_tokens(const Tensor<T>& grid) {
  const std::int64_t b = grid.dim(0), c = grid.dim(1), n = grid.dim(2) * grid.dim(3);
  return ops::permute(ops::reshape(grid, {b, c, n}), {0, 2, 1});
}

template <typename T>
Tensor<T> to_grid(const Tensor<T>& tokens, std::int64_t gh, std::int64_t gw) {
  if (tokens.rank() != 3 || tokens.dim(1) != gh * gw)
    throw ShapeError("token tensor " + to_string(tokens.shape()) + " does not tile a " +
                     std::to_string(gh) + "x" + std::to_string(gw) + " grid");
  const std::int64_t b = tokens.dim(0), c = tokens.dim(2);
  return ops::reshape(ops::permute(tokens, {0, 2, 1}), {b, c, gh, gw});
}

// [B,N,C] -> [B·heads, N, C/heads]
template <typename T>
Tensor<T> split_heads(const Tensor<T>& x, std::int64_t heads) {
  const std::int64_t b = x.dim(0), n = x.dim(1), d = x.dim(2) / heads;
  return ops::reshape(ops::permute(ops::reshape(x, {b, n, heads, d}), {0, 2, 1, 3}),
                      {b * heads, n, d});
}

template <typename T>
Tensor<T> merge_heads(const Tensor<T>& x, std::int64_t batch, std::int64_t heads) {
  const std::int64_t n = x.dim(1), d = x.dim(2);
  return ops::reshape(ops::permute(ops::reshape(x, {batch, heads, n, d}), {0, 2, 1, 3}),
                      {batch, n, heads * d});
}

}  // namespace

template <typename T>
Tensor<T> Linear<T>::operator()(const Tensor<T>& x) const {
  return ops::linear(x, weight, bias);
}

template <typename T>
Tensor<T> LayerNorm<T>::operator()(const Tensor<T>& x) const {
  return ops::layer_norm(x, gamma, beta);
}

template <typename T>
Tensor<T> Conv<T>::operator()(const Tensor<T>& x) const {
  return ops::conv2d(x, weight, bias, stride, pad);
}

template <typename T>
Tensor<T> Attention<T>::spatial(const Tensor<T>& query, const Tensor<T>& source) const {
  const std::int64_t b = query.dim(0), c = query.dim(2);
  if (c % heads != 0) throw ShapeError("attention width is not divisible by the head count");
  const Tensor<T> qh = split_heads(q(query), heads);
  const Tensor<T> kh = split_heads(k(source), heads);
  const Tensor<T> vh = split_heads(v(source), heads);
  const T scale = T(1) / std::sqrt(static_cast<T>(c / heads));
  const Tensor<T> attn = ops::softmax(ops::scale(ops::bmm(qh, kh, true), scale), -1);
  return o(merge_heads(ops::bmm(attn, vh), b, heads));
}

template <typename T>
Tensor<T> Attention<T>::channel(const Tensor<T>& x) const {
  const std::int64_t b = x.dim(0), n = x.dim(1), c = x.dim(2), d = c / heads;
  if (c % heads != 0) throw ShapeError("attention width is not divisible by the head count");
  auto transposed = [&](const Tensor<T>& t) {
    return ops::reshape(ops::permute(ops::reshape(t, {b, n, heads, d}), {0, 2, 3, 1}),
                        {b * heads, d, n});
  };
  const Tensor<T> qh = transposed(q(x)), kh = transposed(k(x)), vh = transposed(v(x));
  const T scale = T(1) / std::sqrt(static_cast<T>(n));
  const Tensor<T> attn = ops::softmax(ops::scale(ops::bmm(qh, kh, true), scale), -1);
  const Tensor<T> out = ops::reshape(ops::bmm(attn, vh), {b, heads, d, n});
  return o(ops::reshape(ops::permute(out, {0, 3, 1, 2}), {b, n, c}));
}

template <typename T>
Tensor<T> TransformerLayer<T>::cross_block(const Tensor<T>& q, const Tensor<T>& kv) const {
  return ops::add(cross.spatial(norm_q(q), norm_kv(kv)), q);
}

template <typename T>
Tensor<T> TransformerLayer<T>::operator()(const Tensor<T>& q, const Tensor<T>& kv) const {
  if (q.shape() != kv.shape())
    throw ShapeError("transformer layer query " + to_string(q.shape()) + " and memory " +
                     to_string(kv.shape()) + " differ");
  Tensor<T> d = cross_block(q, kv);
  const Tensor<T> s = norm_self(d);
  d = ops::add(self.spatial(s, s), d);
  d = ops::add(ffn_out(ops::gelu(ffn_in(norm_ffn(d)))), d);
  if (channel_attention) {
    d = ops::add(channel.channel(norm_channel(d)), d);
    d = ops::add(channel_ffn_out(ops::gelu(channel_ffn_in(norm_channel_ffn(d)))), d);
  }
  return d;
}

template <typename T>
Tensor<T> MggCnn<T>::branch(std::size_t b, const Tensor<T>& grid) const {
  Tensor<T> x = grid;
  for (const auto& conv : branches.at(b)) x = ops::gelu(conv(x));
  return x;
}

template <typename T>
Tensor<T> MggCnn<T>::operator()(const Tensor<T>& tokens, std::int64_t gh, std::int64_t gw) const {
  const Tensor<T> grid = to_grid(tokens, gh, gw);
  Tensor<T> sum = branch(0, grid);
  for (std::size_t b = 1; b < branches.size(); ++b) sum = ops::add(sum, branch(b, grid));
  return to_tokens(sum);
}

template <typename T>
typename SarQuery<T>::Weights SarQuery<T>::weights(const Tensor<T>& h_top, std::int64_t gh,
                                                   std::int64_t gw) const {
  if (h_top.rank() != 3 || h_top.dim(1) != base.dim(0) || h_top.dim(2) != base.dim(1))
    throw ShapeError("query " + to_string(base.shape()) + " does not match top-level tokens " +
                     to_string(h_top.shape()));
  const std::int64_t b = h_top.dim(0), n = h_top.dim(1), c = h_top.dim(2);
  const Tensor<T> pooled = ops::add(ops::mean(h_top, 1), ops::max(h_top, 1));  // [B,C]
  const Tensor<T> wc = ops::sigmoid(fc2(ops::relu(fc1(pooled))));
  const Tensor<T> maps = ops::concat<T>({ops::mean(h_top, 2, true), ops::max(h_top, 2, true)}, 2);
  const Tensor<T> ws = ops::sigmoid(spatial(to_grid(maps, gh, gw)));  // [B,1,gh,gw]
  return {ops::reshape(wc, {b, 1, c}), ops::reshape(ws, {b, n, 1})};
}

template <typename T>
Tensor<T> SarQuery<T>::operator()(const Tensor<T>& h_top, std::int64_t gh, std::int64_t gw) const {
  const Weights w = weights(h_top, gh, gw);
  return ops::mul(ops::mul(base, w.channel), w.spatial);
}

template <typename T>
Tensor<T> Decoder<T>::param(const std::string& name, Shape shape, std::mt19937_64& rng, int init,
                            std::int64_t fan_in) {
  std::vector<T> values(static_cast<std::size_t>(numel(shape)), T(0));
  if (init == 1) {
    std::fill(values.begin(), values.end(), T(1));
  } else if (init == 2) {
    // Truncated normal, std 0.02, cut at two standard deviations.
    std::normal_distribution<double> nd(0.0, 1.0);
    for (T& v : values) {
      double z;
      do z = nd(rng);
      while (std::abs(z) > 2.0);
      v = static_cast<T>(0.02 * z);
    }
  } else if (init == 3) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    std::uniform_real_distribution<double> ud(-bound, bound);
    for (T& v : values) v = static_cast<T>(ud(rng));
  }
  return params_.add(name, Tensor<T>::from(std::move(shape), std::move(values)));
}

template <typename T>
Linear<T> Decoder<T>::make_linear(const std::string& name, std::int64_t in, std::int64_t out,
                                  std::mt19937_64& rng) {
  Linear<T> l;
  l.weight = param(name + "/weight", {out, in}, rng, 2);
  l.bias = param(name + "/bias", {out}, rng, 0);
  return l;
}

template <typename T>
LayerNorm<T> Decoder<T>::make_norm(const std::string& name, std::int64_t dim) {
  std::mt19937_64 unused;
  LayerNorm<T> n;
  n.gamma = param(name + "/gamma", {dim}, unused, 1);
  n.beta = param(name + "/beta", {dim}, unused, 0);
  return n;
}

template <typename T>
Conv<T> Decoder<T>::make_conv(const std::string& name, std::int64_t in, std::int64_t out,
                              std::int64_t k, std::int64_t stride, std::int64_t pad,
                              std::mt19937_64& rng) {
  Conv<T> c;
  c.weight = param(name + "/weight", {out, in, k, k}, rng, 3, in * k * k);
  c.bias = param(name + "/bias", {out}, rng, 0);
  c.stride = stride;
  c.pad = pad;
  return c;
}

template <typename T>
Attention<T> Decoder<T>::make_attention(const std::string& name, std::mt19937_64& rng) {
  const std::int64_t c = config_.embed_dim;
  Attention<T> a;
  a.q = make_linear(name + "/q", c, c, rng);
  a.k = make_linear(name + "/k", c, c, rng);
  a.v = make_linear(name + "/v", c, c, rng);
  a.o = make_linear(name + "/o", c, c, rng);
  a.heads = config_.heads;
  return a;
}

template <typename T>
Decoder<T>::Decoder(DecoderConfig config, std::uint64_t seed) : config_(std::move(config)) {
  config_.validate();
  std::mt19937_64 rng(seed);
  const std::int64_t c = config_.embed_dim, n = config_.tokens();

  const std::string q = "decoder/query";
  query_.base = param(q + "/base", {n, c}, rng, 2);
  const std::int64_t hidden = std::max<std::int64_t>(1, c / config_.sar_reduction);
  query_.fc1 = make_linear(q + "/fc1", c, hidden, rng);
  query_.fc2 = make_linear(q + "/fc2", hidden, c, rng);
  query_.spatial = make_conv(q + "/spatial", 2, 1, config_.sar_kernel, 1, config_.sar_kernel / 2, rng);

  for (std::size_t i = 1; i <= config_.levels(); ++i) {
    const std::string p = "decoder/level" + std::to_string(i);
    const std::int64_t ci = config_.feature_channels[i - 1], ps = config_.patch_sizes[i - 1];
    DecoderLevel<T> lv;
    lv.embed = make_conv(p + "/embed", 2 * ci, c, ps, ps, 0, rng);
    lv.position = param(p + "/position", {n, c}, rng, 2);

    auto& L = lv.layer;
    L.norm_q = make_norm(p + "/layer/norm_q", c);
    L.norm_kv = make_norm(p + "/layer/norm_kv", c);
    L.cross = make_attention(p + "/layer/cross", rng);
    L.norm_self = make_norm(p + "/layer/norm_self", c);
    L.self = make_attention(p + "/layer/self", rng);
    L.norm_ffn = make_norm(p + "/layer/norm_ffn", c);
    L.ffn_in = make_linear(p + "/layer/ffn_in", c, config_.ffn_dim, rng);
    L.ffn_out = make_linear(p + "/layer/ffn_out", config_.ffn_dim, c, rng);
    L.channel_attention = config_.channel_attention;
    if (config_.channel_attention) {
      L.norm_channel = make_norm(p + "/layer/norm_channel", c);
      L.channel = make_attention(p + "/layer/channel", rng);
      L.norm_channel_ffn = make_norm(p + "/layer/norm_channel_ffn", c);
      L.channel_ffn_in = make_linear(p + "/layer/channel_ffn_in", c, config_.ffn_dim, rng);
      L.channel_ffn_out = make_linear(p + "/layer/channel_ffn_out", config_.ffn_dim, c, rng);
    }

    if (config_.mgg) {
      for (int b = 0; b < 4; ++b) {
        std::vector<Conv<T>> stack;
        const std::string bp = p + "/mgg/branch" + std::to_string(b);
        if (b == 0) {
          stack.push_back(make_conv(bp + "/conv0", c, c, 1, 1, 0, rng));
        } else {
          for (int j = 0; j < b; ++j)
            stack.push_back(make_conv(bp + "/conv" + std::to_string(j), c, c, 3, 1, 1, rng));
        }
        lv.mgg.branches.push_back(std::move(stack));
      }
    }

    lv.head.weight = param(p + "/head/weight", {c, ci, ps, ps}, rng, 3, c);
    lv.head.bias = param(p + "/head/bias", {ci}, rng, 0);
    lv.head.stride = ps;
    levels_.push_back(std::move(lv));
  }
}

template <typename T>
Tensor<T> Decoder<T>::embed(std::size_t i, const Tensor<T>& input) const {
  const std::int64_t ps = config_.patch_sizes.at(i - 1);
  if (input.rank() != 4 || input.dim(1) != 2 * config_.feature_channels[i - 1] ||
      input.dim(2) % ps != 0 || input.dim(3) % ps != 0 || input.dim(2) / ps != config_.grid_h ||
      input.dim(3) / ps != config_.grid_w)
    throw ShapeError("level " + std::to_string(i) + " input " + to_string(input.shape()) +
                     " does not patchify to a " + std::to_string(config_.grid_h) + "x" +
                     std::to_string(config_.grid_w) + " grid with patch size " +
                     std::to_string(ps));
  return ops::add(to_tokens(level(i).embed(input)), level(i).position);
}

template <typename T>
Tensor<T> Decoder<T>::reconstruct(std::size_t i, const Tensor<T>& tokens) const {
  const auto& head = level(i).head;
  return ops::conv_transpose2d(to_grid(tokens, config_.grid_h, config_.grid_w), head.weight,
                               head.bias, head.stride, 0);
}

template <typename T>
std::vector<Tensor<T>> Decoder<T>::forward(const std::vector<Tensor<T>>& inputs) const {
  const std::size_t k = config_.levels();
  if (inputs.size() != k)
    throw ShapeError("decoder expects " + std::to_string(k) + " levels, got " +
                     std::to_string(inputs.size()));
  std::vector<Tensor<T>> h(k);
  for (std::size_t i = 1; i <= k; ++i) h[i - 1] = embed(i, inputs[i - 1]);
  Tensor<T> q = query_(h[k - 1], config_.grid_h, config_.grid_w);
  std::vector<Tensor<T>> out(k);
  for (std::size_t i = k; i >= 1; --i) {
    q = level(i).layer(q, h[i - 1]);
    if (config_.mgg) q = level(i).mgg(q, config_.grid_h, config_.grid_w);
    out[i - 1] = reconstruct(i, q);
  }
  return out;
}

#define UNIAS_INSTANTIATE(T)        \
  template struct Linear<T>;        \
  template struct LayerNorm<T>;     \
  template struct Conv<T>;          \
  template struct Attention<T>;     \
  template struct TransformerLayer<T>; \
  template struct MggCnn<T>;        \
  template struct SarQuery<T>;      \
  template class Decoder<T>;

UNIAS_INSTANTIATE(float)
UNIAS_INSTANTIATE(double)

}  // namespace unias::decoder
