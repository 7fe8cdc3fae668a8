// Copyright 2026 The UniAS Authors
// SPDX-License-Identifier: Apache-2.0

// OpenMP kernels against their serial reference twins.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "unias/kernels.hpp"

using unias::kernels::ConvGeometry;
namespace k = unias::kernels;
namespace ref = unias::kernels::reference;

namespace {

std::vector<float> noise(std::size_t n, unsigned seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<float> u(-1.f, 1.f);
  std::vector<float> v(n);
  for (float& x : v) x = u(rng);
  return v;
}

// Toy decoder shapes: MGG 3×3 on a 4×4 grid, level-1 patch embedding, backbone stem.
ConvGeometry geometry(int which) {
  switch (which) {
    case 0: return {16, 32, 4, 4, 32, 3, 1, 1};
    case 1: return {16, 16, 32, 32, 32, 8, 8, 0};
    default: return {16, 3, 64, 64, 8, 4, 2, 1};
  }
}

std::size_t in_size(const ConvGeometry& g) { return g.batch * g.in_channels * g.height * g.width; }
std::size_t w_size(const ConvGeometry& g) { return g.out_channels * g.in_channels * g.kernel * g.kernel; }
std::size_t out_size(const ConvGeometry& g) { return g.batch * g.out_channels * g.out_height() * g.out_width(); }

template <bool Parallel>
void BM_Gemm(benchmark::State& state) {
  const auto n = state.range(0);
  const auto a = noise(n * n, 1), b = noise(n * n, 2);
  std::vector<float> c(n * n);
  for (auto _ : state) {
    if constexpr (Parallel) k::gemm(false, true, n, n, n, 1.f, a.data(), b.data(), 0.f, c.data());
    else ref::gemm(false, true, n, n, n, 1.f, a.data(), b.data(), 0.f, c.data());
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * n * n * n);
}

template <bool Parallel>
void BM_ConvForward(benchmark::State& state) {
  const ConvGeometry g = geometry(static_cast<int>(state.range(0)));
  const auto x = noise(in_size(g), 3), w = noise(w_size(g), 4), bias = noise(g.out_channels, 5);
  std::vector<float> out(out_size(g));
  for (auto _ : state) {
    if constexpr (Parallel) k::conv2d_forward(g, x.data(), w.data(), bias.data(), out.data());
    else ref::conv2d_forward(g, x.data(), w.data(), bias.data(), out.data());
    benchmark::DoNotOptimize(out.data());
  }
}

template <bool Parallel>
void BM_ConvBackward(benchmark::State& state) {
  const ConvGeometry g = geometry(static_cast<int>(state.range(0)));
  const auto x = noise(in_size(g), 3), w = noise(w_size(g), 4), go = noise(out_size(g), 6);
  std::vector<float> gx(in_size(g)), gw(w_size(g));
  for (auto _ : state) {
    if constexpr (Parallel) {
      k::conv2d_backward_input(g, go.data(), w.data(), gx.data());
      k::conv2d_backward_weight(g, x.data(), go.data(), gw.data());
    } else {
      ref::conv2d_backward_input(g, go.data(), w.data(), gx.data());
      ref::conv2d_backward_weight(g, x.data(), go.data(), gw.data());
    }
    benchmark::DoNotOptimize(gx.data());
    benchmark::DoNotOptimize(gw.data());
  }
}

template <bool Parallel>
void BM_Gaussian(benchmark::State& state) {
  const std::int64_t planes = 16 * 32, h = 32, w = 32;
  const auto x = noise(planes * h * w, 7);
  const std::vector<float> kernel(9, 1.f / 9);
  std::vector<float> out(x.size());
  for (auto _ : state) {
    if constexpr (Parallel) k::depthwise_filter_reflect(planes, h, w, x.data(), kernel.data(), 3, out.data());
    else ref::depthwise_filter_reflect(planes, h, w, x.data(), kernel.data(), 3, out.data());
    benchmark::DoNotOptimize(out.data());
  }
}

}  // namespace

BENCHMARK(BM_Gemm<true>)->Name("gemm/parallel")->Arg(64)->Arg(256);
BENCHMARK(BM_Gemm<false>)->Name("gemm/reference")->Arg(64)->Arg(256);
BENCHMARK(BM_ConvForward<true>)->Name("conv_forward/parallel")->DenseRange(0, 2);
BENCHMARK(BM_ConvForward<false>)->Name("conv_forward/reference")->DenseRange(0, 2);
BENCHMARK(BM_ConvBackward<true>)->Name("conv_backward/parallel")->DenseRange(0, 2);
BENCHMARK(BM_ConvBackward<false>)->Name("conv_backward/reference")->DenseRange(0, 2);
BENCHMARK(BM_Gaussian<true>)->Name("gaussian/parallel");
BENCHMARK(BM_Gaussian<false>)->Name("gaussian/reference");

BENCHMARK_MAIN();
