// Copyright 2026 The UniAS Authors
// SPDX-License-Identifier: Apache-2.0

// Finite-difference gradient suites shared by the unit tests and the acceptance run.

#pragma once

#include <algorithm>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "gradcheck.hpp"
#include "unias/decoder.hpp"
#include "unias/engine.hpp"

namespace unias::testing {

struct SuiteEntry {
  std::string name;
  GradCheckResult result;
};

/// Every differentiable op, checked at rel 1e-4.
inline std::vector<SuiteEntry> op_gradient_suite(std::uint64_t seed = 11) {
  using TD = Tensor<double>;
  using V = std::vector<TD>;
  std::mt19937_64 rng(seed);
  std::vector<SuiteEntry> out;
  auto run = [&](const char* name, auto fn, V inputs) {
    out.push_back({name, gradcheck(fn, std::move(inputs))});
  };
  run("add", [](const V& in) { return probe_loss(ops::add(in[0], in[1])); },
      {random_tensor({2, 3, 4}, rng), random_tensor({3, 1}, rng)});
  run("sub", [](const V& in) { return probe_loss(ops::sub(in[0], in[1])); },
      {random_tensor({2, 3}, rng), random_tensor({3}, rng)});
  run("mul", [](const V& in) { return probe_loss(ops::mul(in[0], in[1])); },
      {random_tensor({2, 1, 4}, rng), random_tensor({3, 4}, rng)});
  run("scale", [](const V& in) { return probe_loss(ops::scale(in[0], -1.7)); },
      {random_tensor({5}, rng)});
  run("add_scalar", [](const V& in) { return probe_loss(ops::add_scalar(in[0], 0.3)); },
      {random_tensor({5}, rng)});
  run("gelu", [](const V& in) { return probe_loss(ops::gelu(in[0])); },
      {random_tensor({4, 5}, rng, -3, 3)});
  run("sigmoid", [](const V& in) { return probe_loss(ops::sigmoid(in[0])); },
      {random_tensor({4, 5}, rng, -3, 3)});
  run("relu", [](const V& in) { return probe_loss(ops::relu(in[0])); },
      {random_tensor({4, 5}, rng, -3, 3)});
  run("matmul", [](const V& in) { return probe_loss(ops::matmul(in[0], in[1])); },
      {random_tensor({2, 3, 4}, rng), random_tensor({4, 5}, rng)});
  run("linear", [](const V& in) { return probe_loss(ops::linear(in[0], in[1], in[2])); },
      {random_tensor({2, 3, 4}, rng), random_tensor({5, 4}, rng), random_tensor({5}, rng)});
  run("bmm", [](const V& in) { return probe_loss(ops::bmm(in[0], in[1])); },
      {random_tensor({2, 3, 4}, rng), random_tensor({2, 4, 5}, rng)});
  run("bmm_t", [](const V& in) { return probe_loss(ops::bmm(in[0], in[1], true)); },
      {random_tensor({2, 3, 4}, rng), random_tensor({2, 5, 4}, rng)});
  run("conv2d", [](const V& in) { return probe_loss(ops::conv2d(in[0], in[1], in[2], 2, 1)); },
      {random_tensor({2, 3, 7, 7}, rng), random_tensor({4, 3, 3, 3}, rng), random_tensor({4}, rng)});
  run("conv2d_patch", [](const V& in) { return probe_loss(ops::conv2d(in[0], in[1], in[2], 2, 0)); },
      {random_tensor({1, 2, 4, 4}, rng), random_tensor({3, 2, 2, 2}, rng), random_tensor({3}, rng)});
  run("conv_transpose2d",
      [](const V& in) { return probe_loss(ops::conv_transpose2d(in[0], in[1], in[2], 2, 1)); },
      {random_tensor({2, 3, 3, 3}, rng), random_tensor({3, 2, 3, 3}, rng), random_tensor({2}, rng)});
  run("conv_transpose2d_patch",
      [](const V& in) { return probe_loss(ops::conv_transpose2d(in[0], in[1], in[2], 4, 0)); },
      {random_tensor({1, 3, 2, 2}, rng), random_tensor({3, 2, 4, 4}, rng), random_tensor({2}, rng)});
  run("softmax", [](const V& in) { return probe_loss(ops::softmax(in[0], 1)); },
      {random_tensor({2, 5, 3}, rng, -2, 2)});
  run("layer_norm", [](const V& in) { return probe_loss(ops::layer_norm(in[0], in[1], in[2])); },
      {random_tensor({3, 6}, rng, -2, 2), random_tensor({6}, rng), random_tensor({6}, rng)});
  run("sum", [](const V& in) { return probe_loss(ops::sum(in[0], 1, true)); },
      {random_tensor({2, 3, 4}, rng)});
  run("mean", [](const V& in) { return probe_loss(ops::mean(in[0], 0)); },
      {random_tensor({2, 3, 4}, rng)});
  run("max", [](const V& in) { return probe_loss(ops::max(in[0], 2)); },
      {random_tensor({2, 3, 4}, rng)});
  run("mean_all", [](const V& in) { return ops::mean_all(ops::mul(in[0], in[0])); },
      {random_tensor({2, 3}, rng)});
  run("permute", [](const V& in) { return probe_loss(ops::permute(in[0], {2, 0, 1})); },
      {random_tensor({2, 3, 4}, rng)});
  run("reshape", [](const V& in) { return probe_loss(ops::reshape(in[0], {6, 4})); },
      {random_tensor({2, 3, 4}, rng)});
  run("concat", [](const V& in) { return probe_loss(ops::concat(in, 1)); },
      {random_tensor({2, 3, 2}, rng), random_tensor({2, 1, 2}, rng)});
  run("upsample_bilinear", [](const V& in) { return probe_loss(ops::upsample_bilinear(in[0], 7, 8)); },
      {random_tensor({2, 3, 4}, rng)});
  run("cosine_similarity",
      [](const V& in) { return probe_loss(ops::cosine_similarity(in[0], in[1], 1)); },
      {random_tensor({2, 5, 3}, rng), random_tensor({2, 5, 3}, rng)});
  run("composite",
      [](const V& in) {
        const TD h = ops::gelu(ops::linear(in[0], in[1], in[2]));
        const TD s = ops::softmax(ops::bmm(h, h, true), -1);
        const TD y = ops::layer_norm(ops::add(ops::bmm(s, h), h), in[3], in[4]);
        return ops::mean_all(ops::mul(ops::sigmoid(y), y));
      },
      {random_tensor({2, 4, 3}, rng), random_tensor({5, 3}, rng), random_tensor({5}, rng),
       random_tensor({5}, rng), random_tensor({5}, rng)});
  return out;
}

/// A three-level decoder small enough for exhaustive finite differences.
inline decoder::DecoderConfig gradient_config() {
  decoder::DecoderConfig c;
  c.feature_channels = {2, 3, 4};
  c.patch_sizes = {4, 2, 1};
  c.grid_h = c.grid_w = 2;
  c.embed_dim = 8;
  c.heads = 2;
  c.ffn_dim = 8;
  c.sar_kernel = 3;
  return c;
}

struct EndToEndResult {
  double worst_rel = 0;
  std::string where;
  std::size_t probes = 0;
};

/// Training loss against central differences (h = 1e-6) on `per_tensor` sampled
/// elements of every parameter tensor.
inline EndToEndResult end_to_end_gradient(const decoder::DecoderConfig& c, std::uint64_t seed = 18,
                                          std::size_t per_tensor = 10) {
  decoder::Decoder<double> d(c, seed);
  std::mt19937_64 rng(seed);
  auto pyramid = [&](bool targets) {
    std::vector<Tensor<double>> out;
    for (std::size_t i = 1; i <= c.levels(); ++i)
      out.push_back(random_tensor(
          {2, c.feature_channels[i - 1] * (targets ? 1 : 2), c.level_height(i), c.level_width(i)}, rng));
    return out;
  };
  const auto in = pyramid(false);
  const auto target = pyramid(true);
  auto loss = [&] { return engine::training_loss(d.forward(in), target).total.item(); };
  {
    Tape<double> tape;
    TapeGuard<double> guard(tape);
    d.params().zero_grad();
    tape.backward(engine::training_loss(d.forward(in), target).total);
  }
  EndToEndResult res;
  for (const auto& e : d.params().entries()) {
    Tensor<double> p = e.tensor;
    std::vector<std::size_t> idx(p.values().size());
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(std::min(per_tensor, idx.size()));
    for (std::size_t k : idx) {
      const double h = 1e-6, orig = p.values()[k];
      p.values()[k] = orig + h;
      const double up = loss();
      p.values()[k] = orig - h;
      const double down = loss();
      p.values()[k] = orig;
      const double numeric = (up - down) / (2 * h);
      const double analytic = p.has_grad() ? p.grad()[k] : 0.0;
      const double rel =
          std::abs(numeric - analytic) / std::max({std::abs(numeric), std::abs(analytic), 1e-6});
      ++res.probes;
      if (rel > res.worst_rel) {
        res.worst_rel = rel;
        res.where = e.name;
      }
    }
  }
  return res;
}

}  // namespace unias::testing
