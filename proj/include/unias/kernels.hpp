// Copyright 2026 The UniAS Authors
// SPDX-License-Identifier: Apache-2.0

// Compute kernels behind the tensor ops. Every kernel exists twice: an OpenMP
// version used by the library, and a plain nested-loop version in
// `kernels::reference` that the tests and the benchmark compare against.
// Parallel loops only split independent output rows/images, so results do not
// depend on the thread count.

#pragma once

#include <cstdint>

namespace unias::kernels {

/// Geometry of a batched NCHW cross-correlation with a square kernel.
struct ConvGeometry {
  std::int64_t batch = 1;
  std::int64_t in_channels = 1;
  std::int64_t height = 1;
  std::int64_t width = 1;
  std::int64_t out_channels = 1;
  std::int64_t kernel = 1;
  std::int64_t stride = 1;
  std::int64_t pad = 0;

  std::int64_t out_height() const { return (height + 2 * pad - kernel) / stride + 1; }
  std::int64_t out_width() const { return (width + 2 * pad - kernel) / stride + 1; }
  bool valid() const;
};

/// C[m×n] = alpha·op(A)·op(B) + beta·C, all row-major with tight leading dims.
template <typename T>
void gemm(bool trans_a, bool trans_b, std::int64_t m, std::int64_t n, std::int64_t k, T alpha,
          const T* a, const T* b, T beta, T* c);

/// out[b,o,y,x] = Σ w[o,c,i,j]·x[b,c,y·s+i−p, x·s+j−p] (+ bias[o]).
template <typename T>
void conv2d_forward(const ConvGeometry& g, const T* input, const T* weight, const T* bias, T* out);

/// grad_input += adjointᵀ applied to grad_out.
template <typename T>
void conv2d_backward_input(const ConvGeometry& g, const T* grad_out, const T* weight,
                           T* grad_input);

/// grad_weight += Σ_b grad_out ⊗ input patches.
template <typename T>
void conv2d_backward_weight(const ConvGeometry& g, const T* input, const T* grad_out,
                            T* grad_weight);

/// Per-channel k×k filtering with reflect padding; shape preserved.
template <typename T>
void depthwise_filter_reflect(std::int64_t planes, std::int64_t height, std::int64_t width,
                              const T* input, const T* kernel, std::int64_t k, T* out);

namespace reference {

template <typename T>
void gemm(bool trans_a, bool trans_b, std::int64_t m, std::int64_t n, std::int64_t k, T alpha,
          const T* a, const T* b, T beta, T* c);

template <typename T>
void conv2d_forward(const ConvGeometry& g, const T* input, const T* weight, const T* bias, T* out);

template <typename T>
void conv2d_backward_input(const ConvGeometry& g, const T* grad_out, const T* weight,
                           T* grad_input);

template <typename T>
void conv2d_backward_weight(const ConvGeometry& g, const T* input, const T* grad_out,
                            T* grad_weight);

template <typename T>
void depthwise_filter_reflect(std::int64_t planes, std::int64_t height, std::int64_t width,
                              const T* input, const T* kernel, std::int64_t k, T* out);

}  // namespace reference

/// Number of worker threads OpenMP will use (1 when built without OpenMP).
int max_threads();

}  // namespace unias::kernels
