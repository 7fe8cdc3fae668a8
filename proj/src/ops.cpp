// Copyright 2026 The UniAS Authors
// SPDX-License-Identifier: Apache-2.0

#include "unias/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "unias/kernels.hpp"

namespace unias::ops {

namespace {

template <typename T>
void check_finite([[maybe_unused]] const Tensor<T>& out, [[maybe_unused]] const char* name) {
#ifndef NDEBUG
  for (T v : out.data())
    if (!std::isfinite(v)) throw NumericError(std::string("non-finite output from ") + name);
#endif
}

template <typename T, typename F>
void record(const char* name, Tensor<T>& out, F&& backward) {
  check_finite(out, name);
  out.set_requires_grad(true);
  Tape<T>::active()->record(name, out.impl(), std::forward<F>(backward));
}

std::int64_t normalize_axis(std::int64_t axis, std::int64_t rank) {
  if (axis < 0) axis += rank;
  if (axis < 0 || axis >= rank)
    throw ShapeError("axis " + std::to_string(axis) + " out of range for rank " +
                     std::to_string(rank));
  return axis;
}

// Splits a shape into (outer, axis extent, inner) around `axis`.
struct AxisSplit {
  std::int64_t outer = 1, extent = 1, inner = 1;
};

AxisSplit split_at(const Shape& s, std::int64_t axis) {
  AxisSplit r;
  for (std::int64_t i = 0; i < axis; ++i) r.outer *= s[i];
  r.extent = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) r.inner *= s[i];
  return r;
}

// Offsets of each output element into a broadcast input, computed once.
std::vector<std::int64_t> broadcast_offsets(const Shape& in, const Shape& out) {
  const std::size_t r = out.size();
  std::vector<std::int64_t> stride(r, 0);
  std::int64_t s = 1;
  for (std::size_t i = 0; i < in.size(); ++i) {
    const std::size_t oi = r - 1 - i;
    const std::size_t ii = in.size() - 1 - i;
    stride[oi] = in[ii] == 1 ? 0 : s;
    s *= in[ii];
  }
  const std::int64_t n = numel(out);
  std::vector<std::int64_t> offsets(static_cast<std::size_t>(n));
  std::vector<std::int64_t> idx(r, 0);
  std::int64_t off = 0;
  for (std::int64_t k = 0; k < n; ++k) {
    offsets[k] = off;
    for (std::size_t d = r; d-- > 0;) {
      ++idx[d];
      off += stride[d];
      if (idx[d] < out[d]) break;
      off -= stride[d] * idx[d];
      idx[d] = 0;
    }
  }
  return offsets;
}

enum class Binary { kAdd, kSub, kMul };

template <typename T>
Tensor<T> binary(const Tensor<T>& a, const Tensor<T>& b, Binary kind, const char* name) {
  const Shape out_shape = broadcast_shape(a.shape(), b.shape());
  Tensor<T> out = Tensor<T>::zeros(out_shape);
  const std::int64_t n = out.numel();
  const bool same_a = a.shape() == out_shape;
  const bool same_b = b.shape() == out_shape;
  std::vector<std::int64_t> off_a, off_b;
  if (!same_a) off_a = broadcast_offsets(a.shape(), out_shape);
  if (!same_b) off_b = broadcast_offsets(b.shape(), out_shape);
  auto ia = [&](std::int64_t k) { return same_a ? k : off_a[k]; };
  auto ib = [&](std::int64_t k) { return same_b ? k : off_b[k]; };
  const T* pa = a.data().data();
  const T* pb = b.data().data();
  T* po = out.data().data();
  switch (kind) {
    case Binary::kAdd:
      for (std::int64_t k = 0; k < n; ++k) po[k] = pa[ia(k)] + pb[ib(k)];
      break;
    case Binary::kSub:
      for (std::int64_t k = 0; k < n; ++k) po[k] = pa[ia(k)] - pb[ib(k)];
      break;
    case Binary::kMul:
      for (std::int64_t k = 0; k < n; ++k) po[k] = pa[ia(k)] * pb[ib(k)];
      break;
  }
  if (should_record<T>({&a, &b})) {
    auto ai = a.impl(), bi = b.impl();
    record(name, out, [ai, bi, kind, n, same_a, same_b, off_a = std::move(off_a),
                       off_b = std::move(off_b)](std::span<const T> g) {
      auto map_a = [&](std::int64_t k) { return same_a ? k : off_a[k]; };
      auto map_b = [&](std::int64_t k) { return same_b ? k : off_b[k]; };
      if (auto* ga = grad_sink(ai)) {
        if (kind == Binary::kMul) {
          for (std::int64_t k = 0; k < n; ++k) (*ga)[map_a(k)] += g[k] * bi->data[map_b(k)];
        } else {
          for (std::int64_t k = 0; k < n; ++k) (*ga)[map_a(k)] += g[k];
        }
      }
      if (auto* gb = grad_sink(bi)) {
        if (kind == Binary::kMul) {
          for (std::int64_t k = 0; k < n; ++k) (*gb)[map_b(k)] += g[k] * ai->data[map_a(k)];
        } else if (kind == Binary::kSub) {
          for (std::int64_t k = 0; k < n; ++k) (*gb)[map_b(k)] -= g[k];
        } else {
          for (std::int64_t k = 0; k < n; ++k) (*gb)[map_b(k)] += g[k];
        }
      }
    });
  }
  return out;
}

// Unary op from a value function and a derivative expressed in (x, y).
template <typename T, typename Fwd, typename Deriv>
Tensor<T> unary(const Tensor<T>& a, const char* name, Fwd fwd, Deriv deriv) {
  Tensor<T> out = Tensor<T>::zeros(a.shape());
  const auto x = a.data();
  auto y = out.data();
  for (std::size_t k = 0; k < x.size(); ++k) y[k] = fwd(x[k]);
  if (should_record<T>({&a})) {
    auto ai = a.impl();
    auto oi = out.impl();
    record(name, out, [ai, oi, deriv](std::span<const T> g) {
      if (auto* ga = grad_sink(ai))
        for (std::size_t k = 0; k < g.size(); ++k)
          (*ga)[k] += g[k] * deriv(ai->data[k], oi->data[k]);
    });
  }
  return out;
}

template <typename T>
void require_rank(const Tensor<T>& t, std::int64_t rank, const char* what) {
  if (t.rank() != rank)
    throw ShapeError(std::string(what) + " expects rank " + std::to_string(rank) + ", got " +
                     to_string(t.shape()));
}

}  // namespace

Shape broadcast_shape(const Shape& a, const Shape& b) {
  const std::size_t r = std::max(a.size(), b.size());
  Shape out(r);
  for (std::size_t i = 0; i < r; ++i) {
    const std::int64_t ea = i < a.size() ? a[a.size() - 1 - i] : 1;
    const std::int64_t eb = i < b.size() ? b[b.size() - 1 - i] : 1;
    if (ea != eb && ea != 1 && eb != 1)
      throw ShapeError("shapes " + to_string(a) + " and " + to_string(b) +
                       " are not broadcast-compatible");
    out[r - 1 - i] = std::max(ea, eb);
  }
  return out;
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return binary(a, b, Binary::kAdd, "add");
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return binary(a, b, Binary::kSub, "sub");
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return binary(a, b, Binary::kMul, "mul");
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  return unary(
      a, "scale", [factor](T x) { return x * factor; }, [factor](T, T) { return factor; });
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& a, T value) {
  return unary(
      a, "add_scalar", [value](T x) { return x + value; }, [](T, T) { return T(1); });
}

template <typename T>
Tensor<T> gelu(const Tensor<T>& a) {
  const T inv_sqrt2 = T(1) / std::numbers::sqrt2_v<T>;
  const T inv_sqrt_2pi = std::numbers::inv_sqrtpi_v<T> * inv_sqrt2;
  return unary(
      a, "gelu", [=](T x) { return T(0.5) * x * (T(1) + std::erf(x * inv_sqrt2)); },
      [=](T x, T) {
        const T cdf = T(0.5) * (T(1) + std::erf(x * inv_sqrt2));
        return cdf + x * inv_sqrt_2pi * std::exp(T(-0.5) * x * x);
      });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& a) {
  return unary(
      a, "sigmoid",
      [](T x) {
        if (x >= 0) return T(1) / (T(1) + std::exp(-x));
        const T e = std::exp(x);
        return e / (T(1) + e);
      },
      [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& a) {
  return unary(
      a, "relu", [](T x) { return x > 0 ? x : T(0); },
      [](T x, T) { return x > 0 ? T(1) : T(0); });
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  require_rank(b, 2, "matmul rhs");
  if (a.rank() < 2) throw ShapeError("matmul lhs must have rank >= 2, got " + to_string(a.shape()));
  const std::int64_t k = a.dim(-1);
  if (b.dim(0) != k)
    throw ShapeError("matmul inner dimensions differ: " + to_string(a.shape()) + " vs " +
                     to_string(b.shape()));
  const std::int64_t n = b.dim(1);
  const std::int64_t m = a.numel() / k;
  Shape out_shape = a.shape();
  out_shape.back() = n;
  Tensor<T> out = Tensor<T>::zeros(out_shape);
  kernels::gemm<T>(false, false, m, n, k, T(1), a.data().data(), b.data().data(), T(0),
                   out.data().data());
  if (should_record<T>({&a, &b})) {
    auto ai = a.impl(), bi = b.impl();
    record("matmul", out, [ai, bi, m, n, k](std::span<const T> g) {
      if (auto* ga = grad_sink(ai))
        kernels::gemm<T>(false, true, m, k, n, T(1), g.data(), bi->data.data(), T(1), ga->data());
      if (auto* gb = grad_sink(bi))
        kernels::gemm<T>(true, false, k, n, m, T(1), ai->data.data(), g.data(), T(1), gb->data());
    });
  }
  return out;
}

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
  require_rank(weight, 2, "linear weight");
  const std::int64_t k = x.dim(-1);
  if (weight.dim(1) != k)
    throw ShapeError("linear input " + to_string(x.shape()) + " does not match weight " +
                     to_string(weight.shape()));
  const std::int64_t n = weight.dim(0);
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != n))
    throw ShapeError("linear bias " + to_string(bias.shape()) + " does not match weight " +
                     to_string(weight.shape()));
  const std::int64_t m = x.numel() / k;
  Shape out_shape = x.shape();
  out_shape.back() = n;
  Tensor<T> out = Tensor<T>::zeros(out_shape);
  kernels::gemm<T>(false, true, m, n, k, T(1), x.data().data(), weight.data().data(), T(0),
                   out.data().data());
  if (bias.defined()) {
    T* po = out.data().data();
    const T* pb = bias.data().data();
    for (std::int64_t i = 0; i < m; ++i)
      for (std::int64_t j = 0; j < n; ++j) po[i * n + j] += pb[j];
  }
  const bool with_bias = bias.defined();
  const bool rec = with_bias ? should_record<T>({&x, &weight, &bias})
                             : should_record<T>({&x, &weight});
  if (rec) {
    auto xi = x.impl(), wi = weight.impl();
    auto bi = with_bias ? bias.impl() : nullptr;
    record("linear", out, [xi, wi, bi, m, n, k](std::span<const T> g) {
      if (auto* gx = grad_sink(xi))
        kernels::gemm<T>(false, false, m, k, n, T(1), g.data(), wi->data.data(), T(1), gx->data());
      if (auto* gw = grad_sink(wi))
        kernels::gemm<T>(true, false, n, k, m, T(1), g.data(), xi->data.data(), T(1), gw->data());
      if (bi)
        if (auto* gb = grad_sink(bi))
          for (std::int64_t i = 0; i < m; ++i)
            for (std::int64_t j = 0; j < n; ++j) (*gb)[j] += g[i * n + j];
    });
  }
  return out;
}

template <typename T>
Tensor<T> bmm(const Tensor<T>& a, const Tensor<T>& b, bool transpose_b) {
  require_rank(a, 3, "bmm lhs");
  require_rank(b, 3, "bmm rhs");
  const std::int64_t batch = a.dim(0), m = a.dim(1), k = a.dim(2);
  const std::int64_t bk = transpose_b ? b.dim(2) : b.dim(1);
  const std::int64_t n = transpose_b ? b.dim(1) : b.dim(2);
  if (b.dim(0) != batch || bk != k)
    throw ShapeError("bmm operands incompatible: " + to_string(a.shape()) + " vs " +
                     to_string(b.shape()));
  Tensor<T> out = Tensor<T>::zeros({batch, m, n});
  for (std::int64_t i = 0; i < batch; ++i)
    kernels::gemm<T>(false, transpose_b, m, n, k, T(1), a.data().data() + i * m * k,
                     b.data().data() + i * k * n, T(0), out.data().data() + i * m * n);
  if (should_record<T>({&a, &b})) {
    auto ai = a.impl(), bi = b.impl();
    record("bmm", out, [ai, bi, batch, m, n, k, transpose_b](std::span<const T> g) {
      auto* ga = grad_sink(ai);
      auto* gb = grad_sink(bi);
      for (std::int64_t i = 0; i < batch; ++i) {
        const T* gi = g.data() + i * m * n;
        const T* av = ai->data.data() + i * m * k;
        const T* bv = bi->data.data() + i * k * n;
        if (ga) {
          // dA = dC·Bᵀ (or dC·B when B was given transposed).
          kernels::gemm<T>(false, !transpose_b, m, k, n, T(1), gi, bv, T(1),
                           ga->data() + i * m * k);
        }
        if (gb) {
          if (transpose_b) {
            kernels::gemm<T>(true, false, n, k, m, T(1), gi, av, T(1), gb->data() + i * k * n);
          } else {
            kernels::gemm<T>(true, false, k, n, m, T(1), av, gi, T(1), gb->data() + i * k * n);
          }
        }
      }
    });
  }
  return out;
}

namespace {

template <typename T>
Tensor<T> as_batched(const Tensor<T>& x) {
  if (x.rank() == 4) return x;
  if (x.rank() == 3) return reshape(x, {1, x.dim(0), x.dim(1), x.dim(2)});
  throw ShapeError("convolution input must be [C,H,W] or [B,C,H,W], got " + to_string(x.shape()));
}

template <typename T>
void check_conv_weight(const Tensor<T>& weight, const Tensor<T>& bias, std::int64_t bias_len) {
  require_rank(weight, 4, "convolution weight");
  if (weight.dim(2) != weight.dim(3))
    throw ShapeError("convolution kernel must be square, got " + to_string(weight.shape()));
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != bias_len))
    throw ShapeError("convolution bias " + to_string(bias.shape()) + " does not match weight " +
                     to_string(weight.shape()));
}

}  // namespace

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x_in, const Tensor<T>& weight, const Tensor<T>& bias,
                 std::int64_t stride, std::int64_t pad) {
  const Tensor<T> x = as_batched(x_in);
  check_conv_weight(weight, bias, weight.dim(0));
  kernels::ConvGeometry g{x.dim(0), x.dim(1), x.dim(2), x.dim(3),
                          weight.dim(0), weight.dim(2), stride, pad};
  if (weight.dim(1) != g.in_channels)
    throw ShapeError("conv2d input " + to_string(x.shape()) + " does not match weight " +
                     to_string(weight.shape()));
  if (!g.valid())
    throw ShapeError("conv2d output extent is not integral for input " + to_string(x.shape()) +
                     ", kernel " + std::to_string(g.kernel) + ", stride " +
                     std::to_string(stride) + ", pad " + std::to_string(pad));
  Tensor<T> out = Tensor<T>::zeros({g.batch, g.out_channels, g.out_height(), g.out_width()});
  kernels::conv2d_forward<T>(g, x.data().data(), weight.data().data(),
                             bias.defined() ? bias.data().data() : nullptr, out.data().data());
  const bool rec = bias.defined() ? should_record<T>({&x, &weight, &bias})
                                  : should_record<T>({&x, &weight});
  if (rec) {
    auto xi = x.impl(), wi = weight.impl();
    auto bi = bias.defined() ? bias.impl() : nullptr;
    record("conv2d", out, [xi, wi, bi, g](std::span<const T> gout) {
      if (auto* gx = grad_sink(xi))
        kernels::conv2d_backward_input<T>(g, gout.data(), wi->data.data(), gx->data());
      if (auto* gw = grad_sink(wi))
        kernels::conv2d_backward_weight<T>(g, xi->data.data(), gout.data(), gw->data());
      if (bi)
        if (auto* gb = grad_sink(bi)) {
          const std::int64_t plane = g.out_height() * g.out_width();
          for (std::int64_t b = 0; b < g.batch; ++b)
            for (std::int64_t o = 0; o < g.out_channels; ++o)
              for (std::int64_t p = 0; p < plane; ++p)
                (*gb)[o] += gout[(b * g.out_channels + o) * plane + p];
        }
    });
  }
  return x_in.rank() == 3 ? reshape(out, {out.dim(1), out.dim(2), out.dim(3)}) : out;
}

template <typename T>
Tensor<T> conv_transpose2d(const Tensor<T>& x_in, const Tensor<T>& weight, const Tensor<T>& bias,
                           std::int64_t stride, std::int64_t pad) {
  const Tensor<T> x = as_batched(x_in);
  check_conv_weight(weight, bias, weight.dim(1));
  if (weight.dim(0) != x.dim(1))
    throw ShapeError("conv_transpose2d input " + to_string(x.shape()) +
                     " does not match weight " + to_string(weight.shape()));
  const std::int64_t k = weight.dim(2);
  const std::int64_t out_h = (x.dim(2) - 1) * stride - 2 * pad + k;
  const std::int64_t out_w = (x.dim(3) - 1) * stride - 2 * pad + k;
  if (stride <= 0 || pad < 0 || out_h <= 0 || out_w <= 0)
    throw ShapeError("conv_transpose2d geometry invalid for input " + to_string(x.shape()) +
                     ", kernel " + std::to_string(k) + ", stride " + std::to_string(stride) +
                     ", pad " + std::to_string(pad));
  // The matching forward convolution maps the output space back onto x.
  kernels::ConvGeometry g{x.dim(0), weight.dim(1), out_h, out_w, x.dim(1), k, stride, pad};
  Tensor<T> out = Tensor<T>::zeros({g.batch, g.in_channels, out_h, out_w});
  kernels::conv2d_backward_input<T>(g, x.data().data(), weight.data().data(), out.data().data());
  if (bias.defined()) {
    T* po = out.data().data();
    const std::int64_t plane = out_h * out_w;
    for (std::int64_t b = 0; b < g.batch; ++b)
      for (std::int64_t c = 0; c < g.in_channels; ++c)
        for (std::int64_t p = 0; p < plane; ++p)
          po[(b * g.in_channels + c) * plane + p] += bias.data()[c];
  }
  const bool rec = bias.defined() ? should_record<T>({&x, &weight, &bias})
                                  : should_record<T>({&x, &weight});
  if (rec) {
    auto xi = x.impl(), wi = weight.impl();
    auto bi = bias.defined() ? bias.impl() : nullptr;
    record("conv_transpose2d", out, [xi, wi, bi, g](std::span<const T> gout) {
      if (auto* gx = grad_sink(xi)) {
        std::vector<T> tmp(gx->size());
        kernels::conv2d_forward<T>(g, gout.data(), wi->data.data(), nullptr, tmp.data());
        for (std::size_t i = 0; i < tmp.size(); ++i) (*gx)[i] += tmp[i];
      }
      if (auto* gw = grad_sink(wi))
        kernels::conv2d_backward_weight<T>(g, gout.data(), xi->data.data(), gw->data());
      if (bi)
        if (auto* gb = grad_sink(bi)) {
          const std::int64_t plane = g.height * g.width;
          for (std::int64_t b = 0; b < g.batch; ++b)
            for (std::int64_t c = 0; c < g.in_channels; ++c)
              for (std::int64_t p = 0; p < plane; ++p)
                (*gb)[c] += gout[(b * g.in_channels + c) * plane + p];
        }
    });
  }
  return x_in.rank() == 3 ? reshape(out, {out.dim(1), out.dim(2), out.dim(3)}) : out;
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& x, std::int64_t axis) {
  axis = normalize_axis(axis, x.rank());
  const AxisSplit s = split_at(x.shape(), axis);
  Tensor<T> out = Tensor<T>::zeros(x.shape());
  const T* px = x.data().data();
  T* po = out.data().data();
  for (std::int64_t o = 0; o < s.outer; ++o)
    for (std::int64_t i = 0; i < s.inner; ++i) {
      const std::int64_t base = o * s.extent * s.inner + i;
      T mx = px[base];
      for (std::int64_t a = 1; a < s.extent; ++a) mx = std::max(mx, px[base + a * s.inner]);
      T total = 0;
      for (std::int64_t a = 0; a < s.extent; ++a) {
        const T e = std::exp(px[base + a * s.inner] - mx);
        po[base + a * s.inner] = e;
        total += e;
      }
      for (std::int64_t a = 0; a < s.extent; ++a) po[base + a * s.inner] /= total;
    }
  if (should_record<T>({&x})) {
    auto xi = x.impl(), oi = out.impl();
    record("softmax", out, [xi, oi, s](std::span<const T> g) {
      auto* gx = grad_sink(xi);
      if (!gx) return;
      const T* y = oi->data.data();
      for (std::int64_t o = 0; o < s.outer; ++o)
        for (std::int64_t i = 0; i < s.inner; ++i) {
          const std::int64_t base = o * s.extent * s.inner + i;
          T dot = 0;
          for (std::int64_t a = 0; a < s.extent; ++a)
            dot += g[base + a * s.inner] * y[base + a * s.inner];
          for (std::int64_t a = 0; a < s.extent; ++a) {
            const std::int64_t idx = base + a * s.inner;
            (*gx)[idx] += y[idx] * (g[idx] - dot);
          }
        }
    });
  }
  return out;
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps) {
  const std::int64_t d = x.dim(-1);
  if (gamma.numel() != d || beta.numel() != d)
    throw ShapeError("layer_norm affine parameters " + to_string(gamma.shape()) + "/" +
                     to_string(beta.shape()) + " do not match input " + to_string(x.shape()));
  const std::int64_t rows = x.numel() / d;
  Tensor<T> out = Tensor<T>::zeros(x.shape());
  std::vector<T> xhat(static_cast<std::size_t>(x.numel()));
  std::vector<T> inv_std(static_cast<std::size_t>(rows));
  const T* px = x.data().data();
  const T* pg = gamma.data().data();
  const T* pb = beta.data().data();
  T* po = out.data().data();
  for (std::int64_t r = 0; r < rows; ++r) {
    const T* row = px + r * d;
    T mu = 0;
    for (std::int64_t j = 0; j < d; ++j) mu += row[j];
    mu /= T(d);
    T var = 0;
    for (std::int64_t j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= T(d);
    const T is = T(1) / std::sqrt(var + eps);
    inv_std[r] = is;
    for (std::int64_t j = 0; j < d; ++j) {
      const T h = (row[j] - mu) * is;
      xhat[r * d + j] = h;
      po[r * d + j] = pg[j] * h + pb[j];
    }
  }
  if (should_record<T>({&x, &gamma, &beta})) {
    auto xi = x.impl(), gi = gamma.impl(), bi = beta.impl();
    record("layer_norm", out, [xi, gi, bi, rows, d, xhat = std::move(xhat),
                               inv_std = std::move(inv_std)](std::span<const T> g) {
      auto* gx = grad_sink(xi);
      auto* gg = grad_sink(gi);
      auto* gb = grad_sink(bi);
      for (std::int64_t r = 0; r < rows; ++r) {
        const T* gr = g.data() + r * d;
        const T* hr = xhat.data() + r * d;
        if (gg)
          for (std::int64_t j = 0; j < d; ++j) (*gg)[j] += gr[j] * hr[j];
        if (gb)
          for (std::int64_t j = 0; j < d; ++j) (*gb)[j] += gr[j];
        if (gx) {
          T mean_dh = 0, mean_dh_h = 0;
          for (std::int64_t j = 0; j < d; ++j) {
            const T dh = gr[j] * gi->data[j];
            mean_dh += dh;
            mean_dh_h += dh * hr[j];
          }
          mean_dh /= T(d);
          mean_dh_h /= T(d);
          for (std::int64_t j = 0; j < d; ++j) {
            const T dh = gr[j] * gi->data[j];
            (*gx)[r * d + j] += inv_std[r] * (dh - mean_dh - hr[j] * mean_dh_h);
          }
        }
      }
    });
  }
  return out;
}

namespace {

Shape reduced_shape(const Shape& s, std::int64_t axis, bool keepdim) {
  Shape out = s;
  if (keepdim) {
    out[axis] = 1;
  } else {
    out.erase(out.begin() + axis);
  }
  return out;
}

template <typename T>
Tensor<T> sum_impl(const Tensor<T>& x, std::int64_t axis, bool keepdim, T factor,
                   const char* name) {
  axis = normalize_axis(axis, x.rank());
  const AxisSplit s = split_at(x.shape(), axis);
  Tensor<T> out = Tensor<T>::zeros(reduced_shape(x.shape(), axis, keepdim));
  const T* px = x.data().data();
  T* po = out.data().data();
  for (std::int64_t o = 0; o < s.outer; ++o)
    for (std::int64_t a = 0; a < s.extent; ++a)
      for (std::int64_t i = 0; i < s.inner; ++i)
        po[o * s.inner + i] += px[(o * s.extent + a) * s.inner + i];
  if (factor != T(1))
    for (T& v : out.data()) v *= factor;
  if (should_record<T>({&x})) {
    auto xi = x.impl();
    record(name, out, [xi, s, factor](std::span<const T> g) {
      if (auto* gx = grad_sink(xi))
        for (std::int64_t o = 0; o < s.outer; ++o)
          for (std::int64_t a = 0; a < s.extent; ++a)
            for (std::int64_t i = 0; i < s.inner; ++i)
              (*gx)[(o * s.extent + a) * s.inner + i] += factor * g[o * s.inner + i];
    });
  }
  return out;
}

}  // namespace

template <typename T>
Tensor<T> sum(const Tensor<T>& x, std::int64_t axis, bool keepdim) {
  return sum_impl(x, axis, keepdim, T(1), "sum");
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x, std::int64_t axis, bool keepdim) {
  const std::int64_t extent = x.dim(axis);
  return sum_impl(x, axis, keepdim, T(1) / T(extent), "mean");
}

template <typename T>
Tensor<T> max(const Tensor<T>& x, std::int64_t axis, bool keepdim) {
  axis = normalize_axis(axis, x.rank());
  const AxisSplit s = split_at(x.shape(), axis);
  Tensor<T> out = Tensor<T>::zeros(reduced_shape(x.shape(), axis, keepdim));
  std::vector<std::int64_t> argmax(static_cast<std::size_t>(s.outer * s.inner));
  const T* px = x.data().data();
  T* po = out.data().data();
  for (std::int64_t o = 0; o < s.outer; ++o)
    for (std::int64_t i = 0; i < s.inner; ++i) {
      std::int64_t best = o * s.extent * s.inner + i;
      for (std::int64_t a = 1; a < s.extent; ++a) {
        const std::int64_t idx = (o * s.extent + a) * s.inner + i;
        if (px[idx] > px[best]) best = idx;
      }
      argmax[o * s.inner + i] = best;
      po[o * s.inner + i] = px[best];
    }
  if (should_record<T>({&x})) {
    auto xi = x.impl();
    record("max", out, [xi, argmax = std::move(argmax)](std::span<const T> g) {
      if (auto* gx = grad_sink(xi))
        for (std::size_t k = 0; k < argmax.size(); ++k) (*gx)[argmax[k]] += g[k];
    });
  }
  return out;
}

template <typename T>
Tensor<T> sum_all(const Tensor<T>& x) {
  return sum_impl(reshape(x, {x.numel()}), 0, false, T(1), "sum_all");
}

template <typename T>
Tensor<T> mean_all(const Tensor<T>& x) {
  return sum_impl(reshape(x, {x.numel()}), 0, false, T(1) / T(x.numel()), "mean_all");
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (numel(shape) != x.numel())
    throw ShapeError("cannot reshape " + to_string(x.shape()) + " to " + to_string(shape));
  Tensor<T> out = Tensor<T>::from(std::move(shape), x.values());
  if (should_record<T>({&x})) {
    auto xi = x.impl();
    record("reshape", out, [xi](std::span<const T> g) {
      if (auto* gx = grad_sink(xi))
        for (std::size_t k = 0; k < g.size(); ++k) (*gx)[k] += g[k];
    });
  }
  return out;
}

template <typename T>
Tensor<T> permute(const Tensor<T>& x, const std::vector<std::int64_t>& perm) {
  const std::size_t r = x.shape().size();
  if (perm.size() != r) throw ShapeError("permutation rank mismatch for " + to_string(x.shape()));
  std::vector<bool> seen(r, false);
  for (std::int64_t p : perm) {
    if (p < 0 || p >= static_cast<std::int64_t>(r) || seen[p])
      throw ShapeError("invalid permutation for shape " + to_string(x.shape()));
    seen[p] = true;
  }
  Shape out_shape(r);
  std::vector<std::int64_t> in_stride(r);
  std::int64_t st = 1;
  for (std::size_t d = r; d-- > 0;) {
    in_stride[d] = st;
    st *= x.shape()[d];
  }
  std::vector<std::int64_t> stride(r);
  for (std::size_t d = 0; d < r; ++d) {
    out_shape[d] = x.shape()[perm[d]];
    stride[d] = in_stride[perm[d]];
  }
  Tensor<T> out = Tensor<T>::zeros(out_shape);
  // Source offset of every destination element, shared with backward.
  std::vector<std::int64_t> src(static_cast<std::size_t>(x.numel()));
  {
    std::vector<std::int64_t> idx(r, 0);
    std::int64_t off = 0;
    for (std::int64_t k = 0; k < x.numel(); ++k) {
      src[k] = off;
      for (std::size_t d = r; d-- > 0;) {
        ++idx[d];
        off += stride[d];
        if (idx[d] < out_shape[d]) break;
        off -= stride[d] * idx[d];
        idx[d] = 0;
      }
    }
  }
  const T* px = x.data().data();
  T* po = out.data().data();
  for (std::size_t k = 0; k < src.size(); ++k) po[k] = px[src[k]];
  if (should_record<T>({&x})) {
    auto xi = x.impl();
    record("permute", out, [xi, src = std::move(src)](std::span<const T> g) {
      if (auto* gx = grad_sink(xi))
        for (std::size_t k = 0; k < src.size(); ++k) (*gx)[src[k]] += g[k];
    });
  }
  return out;
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, std::int64_t axis) {
  if (parts.empty()) throw ShapeError("concat of zero tensors");
  const Shape& first = parts.front().shape();
  axis = normalize_axis(axis, static_cast<std::int64_t>(first.size()));
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const auto& p : parts) {
    Shape a = p.shape(), b = first;
    if (a.size() != b.size())
      throw ShapeError("concat rank mismatch: " + to_string(a) + " vs " + to_string(b));
    a[axis] = b[axis] = 0;
    if (a != b)
      throw ShapeError("concat shapes differ off-axis: " + to_string(p.shape()) + " vs " +
                       to_string(first));
    out_shape[axis] += p.shape()[axis];
  }
  Tensor<T> out = Tensor<T>::zeros(out_shape);
  const AxisSplit so = split_at(out_shape, axis);
  std::vector<std::int64_t> offsets;
  std::int64_t at = 0;
  for (const auto& p : parts) {
    offsets.push_back(at);
    const AxisSplit sp = split_at(p.shape(), axis);
    for (std::int64_t o = 0; o < sp.outer; ++o)
      std::copy_n(p.data().data() + o * sp.extent * sp.inner, sp.extent * sp.inner,
                  out.data().data() + (o * so.extent + at) * so.inner);
    at += sp.extent;
  }
  bool rec = false;
  for (const auto& p : parts) rec = rec || should_record<T>({&p});
  if (rec) {
    std::vector<std::shared_ptr<TensorImpl<T>>> impls;
    for (const auto& p : parts) impls.push_back(p.impl());
    record("concat", out, [impls, offsets, so, axis](std::span<const T> g) {
      for (std::size_t q = 0; q < impls.size(); ++q) {
        auto* gp = grad_sink(impls[q]);
        if (!gp) continue;
        const AxisSplit sp = split_at(impls[q]->shape, axis);
        for (std::int64_t o = 0; o < sp.outer; ++o)
          for (std::int64_t k = 0; k < sp.extent * sp.inner; ++k)
            (*gp)[o * sp.extent * sp.inner + k] += g[(o * so.extent + offsets[q]) * so.inner + k];
      }
    });
  }
  return out;
}

namespace {

struct Interp {
  std::vector<std::int64_t> lo, hi;
  std::vector<double> frac;
};

// Source taps for align-corners=false resizing of one axis.
Interp interpolation_taps(std::int64_t in, std::int64_t out) {
  Interp t;
  const double ratio = static_cast<double>(in) / static_cast<double>(out);
  for (std::int64_t d = 0; d < out; ++d) {
    double src = (static_cast<double>(d) + 0.5) * ratio - 0.5;
    if (src < 0) src = 0;
    std::int64_t lo = static_cast<std::int64_t>(std::floor(src));
    if (lo > in - 1) lo = in - 1;
    const std::int64_t hi = std::min(lo + 1, in - 1);
    t.lo.push_back(lo);
    t.hi.push_back(hi);
    t.frac.push_back(src - static_cast<double>(lo));
  }
  return t;
}

}  // namespace

template <typename T>
Tensor<T> upsample_bilinear(const Tensor<T>& x, std::int64_t out_h, std::int64_t out_w) {
  if (x.rank() < 2) throw ShapeError("upsample needs rank >= 2, got " + to_string(x.shape()));
  if (out_h <= 0 || out_w <= 0) throw ShapeError("upsample target extent must be positive");
  const std::int64_t in_h = x.dim(-2), in_w = x.dim(-1);
  const std::int64_t planes = x.numel() / (in_h * in_w);
  Shape out_shape = x.shape();
  out_shape[out_shape.size() - 2] = out_h;
  out_shape.back() = out_w;
  Tensor<T> out = Tensor<T>::zeros(out_shape);
  const Interp ty = interpolation_taps(in_h, out_h);
  const Interp tx = interpolation_taps(in_w, out_w);
  const T* px = x.data().data();
  T* po = out.data().data();
  for (std::int64_t p = 0; p < planes; ++p) {
    const T* src = px + p * in_h * in_w;
    T* dst = po + p * out_h * out_w;
    for (std::int64_t y = 0; y < out_h; ++y) {
      const T fy = static_cast<T>(ty.frac[y]);
      const T* r0 = src + ty.lo[y] * in_w;
      const T* r1 = src + ty.hi[y] * in_w;
      for (std::int64_t xx = 0; xx < out_w; ++xx) {
        const T fx = static_cast<T>(tx.frac[xx]);
        const T top = r0[tx.lo[xx]] * (T(1) - fx) + r0[tx.hi[xx]] * fx;
        const T bot = r1[tx.lo[xx]] * (T(1) - fx) + r1[tx.hi[xx]] * fx;
        dst[y * out_w + xx] = top * (T(1) - fy) + bot * fy;
      }
    }
  }
  if (should_record<T>({&x})) {
    auto xi = x.impl();
    record("upsample_bilinear", out,
           [xi, ty, tx, planes, in_h, in_w, out_h, out_w](std::span<const T> g) {
             auto* gx = grad_sink(xi);
             if (!gx) return;
             for (std::int64_t p = 0; p < planes; ++p) {
               T* dst = gx->data() + p * in_h * in_w;
               const T* gp = g.data() + p * out_h * out_w;
               for (std::int64_t y = 0; y < out_h; ++y) {
                 const T fy = static_cast<T>(ty.frac[y]);
                 for (std::int64_t xx = 0; xx < out_w; ++xx) {
                   const T fx = static_cast<T>(tx.frac[xx]);
                   const T v = gp[y * out_w + xx];
                   dst[ty.lo[y] * in_w + tx.lo[xx]] += v * (T(1) - fy) * (T(1) - fx);
                   dst[ty.lo[y] * in_w + tx.hi[xx]] += v * (T(1) - fy) * fx;
                   dst[ty.hi[y] * in_w + tx.lo[xx]] += v * fy * (T(1) - fx);
                   dst[ty.hi[y] * in_w + tx.hi[xx]] += v * fy * fx;
                 }
               }
             }
           });
  }
  return out;
}

template <typename T>
Tensor<T> cosine_similarity(const Tensor<T>& a, const Tensor<T>& b, std::int64_t axis) {
  if (a.shape() != b.shape())
    throw ShapeError("cosine_similarity shapes differ: " + to_string(a.shape()) + " vs " +
                     to_string(b.shape()));
  axis = normalize_axis(axis, a.rank());
  const AxisSplit s = split_at(a.shape(), axis);
  Tensor<T> out = Tensor<T>::zeros(reduced_shape(a.shape(), axis, false));
  const std::int64_t n = s.outer * s.inner;
  std::vector<T> norm_a(static_cast<std::size_t>(n)), norm_b(static_cast<std::size_t>(n));
  const T* pa = a.data().data();
  const T* pb = b.data().data();
  T* po = out.data().data();
  constexpr double kZeroNorm = 1e-12;
  for (std::int64_t o = 0; o < s.outer; ++o)
    for (std::int64_t i = 0; i < s.inner; ++i) {
      T dot = 0, aa = 0, bb = 0;
      for (std::int64_t c = 0; c < s.extent; ++c) {
        const std::int64_t idx = (o * s.extent + c) * s.inner + i;
        dot += pa[idx] * pb[idx];
        aa += pa[idx] * pa[idx];
        bb += pb[idx] * pb[idx];
      }
      const std::int64_t k = o * s.inner + i;
      norm_a[k] = std::sqrt(aa);
      norm_b[k] = std::sqrt(bb);
      po[k] = (norm_a[k] < kZeroNorm || norm_b[k] < kZeroNorm) ? T(1)
                                                               : dot / (norm_a[k] * norm_b[k]);
    }
  if (should_record<T>({&a, &b})) {
    auto ai = a.impl(), bi = b.impl(), oi = out.impl();
    record("cosine_similarity", out,
           [ai, bi, oi, s, norm_a = std::move(norm_a), norm_b = std::move(norm_b)](
               std::span<const T> g) {
             auto* ga = grad_sink(ai);
             auto* gb = grad_sink(bi);
             for (std::int64_t o = 0; o < s.outer; ++o)
               for (std::int64_t i = 0; i < s.inner; ++i) {
                 const std::int64_t k = o * s.inner + i;
                 const T na = norm_a[k], nb = norm_b[k];
                 if (na < kZeroNorm || nb < kZeroNorm) continue;
                 const T sim = oi->data[k];
                 for (std::int64_t c = 0; c < s.extent; ++c) {
                   const std::int64_t idx = (o * s.extent + c) * s.inner + i;
                   const T av = ai->data[idx], bv = bi->data[idx];
                   if (ga) (*ga)[idx] += g[k] * (bv / (na * nb) - sim * av / (na * na));
                   if (gb) (*gb)[idx] += g[k] * (av / (na * nb) - sim * bv / (nb * nb));
                 }
               }
           });
  }
  return out;
}

#define UNIAS_INSTANTIATE_OPS(T)                                                               \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                  \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                  \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                  \
  template Tensor<T> scale(const Tensor<T>&, T);                                               \
  template Tensor<T> add_scalar(const Tensor<T>&, T);                                          \
  template Tensor<T> gelu(const Tensor<T>&);                                                   \
  template Tensor<T> sigmoid(const Tensor<T>&);                                                \
  template Tensor<T> relu(const Tensor<T>&);                                                   \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                               \
  template Tensor<T> linear(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);             \
  template Tensor<T> bmm(const Tensor<T>&, const Tensor<T>&, bool);                            \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,              \
                            std::int64_t, std::int64_t);                                       \
  template Tensor<T> conv_transpose2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,    \
                                      std::int64_t, std::int64_t);                             \
  template Tensor<T> softmax(const Tensor<T>&, std::int64_t);                                  \
  template Tensor<T> layer_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, T);      \
  template Tensor<T> sum(const Tensor<T>&, std::int64_t, bool);                                \
  template Tensor<T> mean(const Tensor<T>&, std::int64_t, bool);                               \
  template Tensor<T> max(const Tensor<T>&, std::int64_t, bool);                                \
  template Tensor<T> sum_all(const Tensor<T>&);                                                \
  template Tensor<T> mean_all(const Tensor<T>&);                                               \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                         \
  template Tensor<T> permute(const Tensor<T>&, const std::vector<std::int64_t>&);              \
  template Tensor<T> concat(const std::vector<Tensor<T>>&, std::int64_t);                      \
  template Tensor<T> upsample_bilinear(const Tensor<T>&, std::int64_t, std::int64_t);          \
  template Tensor<T> cosine_similarity(const Tensor<T>&, const Tensor<T>&, std::int64_t);

UNIAS_INSTANTIATE_OPS(float)
UNIAS_INSTANTIATE_OPS(double)

#undef UNIAS_INSTANTIATE_OPS

}  // namespace unias::ops
