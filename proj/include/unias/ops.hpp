// Copyright 2026 The UniAS Authors
// SPDX-License-Identifier: Apache-2.0

// Differentiable tensor operations. Each op computes its forward value eagerly
// and, when a tape is active and an input requires grad, records its backward
// rule. All ops are instantiated for float and double.

#pragma once

#include <cstdint>
#include <vector>

#include "unias/tensor.hpp"

namespace unias::ops {

// --- elementwise (numpy-style broadcasting, aligned from the trailing axis) ---
template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> scale(const Tensor<T>& a, T factor);
template <typename T> Tensor<T> add_scalar(const Tensor<T>& a, T value);
/// Exact GELU: 0.5·x·(1 + erf(x/√2)).
template <typename T> Tensor<T> gelu(const Tensor<T>& a);
template <typename T> Tensor<T> sigmoid(const Tensor<T>& a);
template <typename T> Tensor<T> relu(const Tensor<T>& a);

/// Shape that `a` and `b` broadcast to; throws ShapeError naming both shapes.
Shape broadcast_shape(const Shape& a, const Shape& b);

// --- products ---
/// [..., M, K] · [K, N] -> [..., M, N].
template <typename T> Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);
/// x [..., K] · weightᵀ + bias, weight [N, K], bias [N] (may be undefined).
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias);
/// Batched product [B, M, K] · [B, K, N]; with `transpose_b`, b is [B, N, K].
template <typename T>
Tensor<T> bmm(const Tensor<T>& a, const Tensor<T>& b, bool transpose_b = false);

// --- convolution (NCHW; a rank-3 input is treated as a batch of one) ---
/// Cross-correlation with weight [C_out, C_in, k, k]; bias may be undefined.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias,
                 std::int64_t stride = 1, std::int64_t pad = 0);
/// Adjoint of conv2d with weight [C_in, C_out, k, k]; output extent (H−1)·s − 2p + k.
template <typename T>
Tensor<T> conv_transpose2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias,
                           std::int64_t stride = 1, std::int64_t pad = 0);

// --- normalization ---
/// Max-subtracted softmax along `axis`.
template <typename T> Tensor<T> softmax(const Tensor<T>& x, std::int64_t axis = -1);
/// Normalizes over the last axis with eps = 1e-5, then applies gamma/beta.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     T eps = T(1e-5));

// --- reductions ---
template <typename T> Tensor<T> sum(const Tensor<T>& x, std::int64_t axis, bool keepdim = false);
template <typename T> Tensor<T> mean(const Tensor<T>& x, std::int64_t axis, bool keepdim = false);
/// Max along `axis`; ties resolve to the first index, which also receives the gradient.
template <typename T> Tensor<T> max(const Tensor<T>& x, std::int64_t axis, bool keepdim = false);
template <typename T> Tensor<T> sum_all(const Tensor<T>& x);
template <typename T> Tensor<T> mean_all(const Tensor<T>& x);

// --- shape ---
template <typename T> Tensor<T> reshape(const Tensor<T>& x, Shape shape);
template <typename T> Tensor<T> permute(const Tensor<T>& x, const std::vector<std::int64_t>& perm);
template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, std::int64_t axis);
/// Bilinear resize of the last two axes, align-corners=false convention.
template <typename T>
Tensor<T> upsample_bilinear(const Tensor<T>& x, std::int64_t out_h, std::int64_t out_w);

// --- similarity ---
/// Cosine similarity along `axis` (axis removed). A vector with norm < 1e-12
/// counts as similarity 1 and passes no gradient.
template <typename T>
Tensor<T> cosine_similarity(const Tensor<T>& a, const Tensor<T>& b, std::int64_t axis);

}  // namespace unias::ops
