// Copyright 2026 The UniAS Authors
// SPDX-License-Identifier: Apache-2.0

#include "unias/kernels.hpp"

#include <algorithm>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace unias::kernels {

bool ConvGeometry::valid() const {
  if (batch <= 0 || in_channels <= 0 || out_channels <= 0 || kernel <= 0 || stride <= 0 ||
      pad < 0 || height <= 0 || width <= 0)
    return false;
  const std::int64_t span_h = height + 2 * pad - kernel;
  const std::int64_t span_w = width + 2 * pad - kernel;
  return span_h >= 0 && span_w >= 0 && span_h % stride == 0 && span_w % stride == 0;
}

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

namespace {

// Below this many multiply-adds a parallel region costs more than it saves.
constexpr std::int64_t kParallelWork = 1 << 15;

template <typename T>
std::vector<T> transposed(const T* src, std::int64_t rows, std::int64_t cols) {
  std::vector<T> out(static_cast<std::size_t>(rows * cols));
  for (std::int64_t r = 0; r < rows; ++r)
    for (std::int64_t c = 0; c < cols; ++c) out[c * rows + r] = src[r * cols + c];
  return out;
}

// Rows [row_begin, row_end) of C = alpha·A·B + beta·C with A [m×k], B [k×n].
// Four rows share each streamed row of B; every C element still sums over p in order.
template <typename T>
void gemm_rows(std::int64_t row_begin, std::int64_t row_end, std::int64_t n, std::int64_t k,
               T alpha, const T* __restrict a, const T* __restrict b, T beta, T* __restrict c) {
  for (std::int64_t i = row_begin; i < row_end; ++i) {
    T* __restrict ci = c + i * n;
    if (beta == T(0)) {
      std::fill(ci, ci + n, T(0));
    } else if (beta != T(1)) {
      for (std::int64_t j = 0; j < n; ++j) ci[j] *= beta;
    }
  }
  std::int64_t i = row_begin;
  for (; i + 4 <= row_end; i += 4) {
    T* __restrict c0 = c + i * n;
    T* __restrict c1 = c0 + n;
    T* __restrict c2 = c1 + n;
    T* __restrict c3 = c2 + n;
    const T* a0 = a + i * k;
    for (std::int64_t p = 0; p < k; ++p) {
      const T v0 = alpha * a0[p], v1 = alpha * a0[k + p];
      const T v2 = alpha * a0[2 * k + p], v3 = alpha * a0[3 * k + p];
      const T* __restrict bp = b + p * n;
#pragma omp simd
      for (std::int64_t j = 0; j < n; ++j) {
        const T bv = bp[j];
        c0[j] += v0 * bv;
        c1[j] += v1 * bv;
        c2[j] += v2 * bv;
        c3[j] += v3 * bv;
      }
    }
  }
  for (; i < row_end; ++i) {
    T* __restrict ci = c + i * n;
    const T* __restrict ai = a + i * k;
    for (std::int64_t p = 0; p < k; ++p) {
      const T av = alpha * ai[p];
      const T* __restrict bp = b + p * n;
#pragma omp simd
      for (std::int64_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

template <typename T>
void gemm_serial(bool trans_a, bool trans_b, std::int64_t m, std::int64_t n, std::int64_t k,
                 T alpha, const T* a, const T* b, T beta, T* c) {
  std::vector<T> a_buf, b_buf;
  if (trans_a) {
    a_buf = transposed(a, k, m);
    a = a_buf.data();
  }
  if (trans_b) {
    b_buf = transposed(b, n, k);
    b = b_buf.data();
  }
  gemm_rows(0, m, n, k, alpha, a, b, beta, c);
}

// col[(c·k+i)·k+j, y·ow+x] = input[c, y·s+i−p, x·s+j−p] (zero outside); rows are `ld` apart.
template <typename T>
void im2col(const ConvGeometry& g, const T* input, T* col, std::int64_t ld) {
  const std::int64_t oh = g.out_height(), ow = g.out_width(), kk = g.kernel;
  for (std::int64_t c = 0; c < g.in_channels; ++c) {
    const T* plane = input + c * g.height * g.width;
    for (std::int64_t i = 0; i < kk; ++i) {
      for (std::int64_t j = 0; j < kk; ++j) {
        T* row = col + ((c * kk + i) * kk + j) * ld;
        for (std::int64_t y = 0; y < oh; ++y) {
          const std::int64_t iy = y * g.stride + i - g.pad;
          T* dst = row + y * ow;
          if (iy < 0 || iy >= g.height) {
            std::fill(dst, dst + ow, T(0));
            continue;
          }
          const T* src = plane + iy * g.width;
          for (std::int64_t x = 0; x < ow; ++x) {
            const std::int64_t ix = x * g.stride + j - g.pad;
            dst[x] = (ix >= 0 && ix < g.width) ? src[ix] : T(0);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const ConvGeometry& g, const T* col, std::int64_t ld, T* grad_input) {
  const std::int64_t oh = g.out_height(), ow = g.out_width(), kk = g.kernel;
  for (std::int64_t c = 0; c < g.in_channels; ++c) {
    T* plane = grad_input + c * g.height * g.width;
    for (std::int64_t i = 0; i < kk; ++i) {
      for (std::int64_t j = 0; j < kk; ++j) {
        const T* row = col + ((c * kk + i) * kk + j) * ld;
        for (std::int64_t y = 0; y < oh; ++y) {
          const std::int64_t iy = y * g.stride + i - g.pad;
          if (iy < 0 || iy >= g.height) continue;
          T* dst = plane + iy * g.width;
          const T* src = row + y * ow;
          for (std::int64_t x = 0; x < ow; ++x) {
            const std::int64_t ix = x * g.stride + j - g.pad;
            if (ix >= 0 && ix < g.width) dst[ix] += src[x];
          }
        }
      }
    }
  }
}

bool is_pointwise(const ConvGeometry& g) {
  return g.kernel == 1 && g.stride == 1 && g.pad == 0;
}

std::int64_t reflect(std::int64_t i, std::int64_t n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * (n - 1) - i;
  }
  return i;
}

}  // namespace

template <typename T>
void gemm(bool trans_a, bool trans_b, std::int64_t m, std::int64_t n, std::int64_t k, T alpha,
          const T* a, const T* b, T beta, T* c) {
  std::vector<T> a_buf, b_buf;
  if (trans_a) {
    a_buf = transposed(a, k, m);
    a = a_buf.data();
  }
  if (trans_b) {
    b_buf = transposed(b, n, k);
    b = b_buf.data();
  }
  const bool parallel = m * n * k >= kParallelWork && m > 1;
  const std::int64_t blocks = (m + 3) / 4;
#pragma omp parallel for schedule(static) if (parallel)
  for (std::int64_t blk = 0; blk < blocks; ++blk)
    gemm_rows(blk * 4, std::min(m, blk * 4 + 4), n, k, alpha, a, b, beta, c);
}

// Images per batched product, keeping the stacked column buffer near 16 MB.
std::int64_t images_per_chunk(std::int64_t rows, std::int64_t spatial, std::int64_t batch) {
  const std::int64_t per_image = std::max<std::int64_t>(1, rows * spatial);
  return std::clamp<std::int64_t>((std::int64_t{1} << 22) / per_image, 1, batch);
}

template <typename T>
void conv2d_forward(const ConvGeometry& g, const T* input, const T* weight, const T* bias,
                    T* out) {
  const std::int64_t spatial = g.out_height() * g.out_width();
  const std::int64_t patch = g.in_channels * g.kernel * g.kernel;
  const std::int64_t in_plane = g.in_channels * g.height * g.width;
  const std::int64_t chunk = images_per_chunk(patch + g.out_channels, spatial, g.batch);
  // Columns of a chunk of images sit side by side so one product covers them all.
  std::vector<T> cols(static_cast<std::size_t>(patch * chunk * spatial));
  std::vector<T> prod(static_cast<std::size_t>(g.out_channels * chunk * spatial));
  for (std::int64_t b0 = 0; b0 < g.batch; b0 += chunk) {
    const std::int64_t nb = std::min(chunk, g.batch - b0), ld = nb * spatial;
    for (std::int64_t b = 0; b < nb; ++b) {
      const T* x = input + (b0 + b) * in_plane;
      if (is_pointwise(g)) {
        for (std::int64_t r = 0; r < patch; ++r)
          std::copy(x + r * spatial, x + (r + 1) * spatial, cols.data() + r * ld + b * spatial);
      } else {
        im2col(g, x, cols.data() + b * spatial, ld);
      }
    }
    gemm<T>(false, false, g.out_channels, ld, patch, T(1), weight, cols.data(), T(0), prod.data());
    for (std::int64_t b = 0; b < nb; ++b)
      for (std::int64_t o = 0; o < g.out_channels; ++o) {
        const T* src = prod.data() + o * ld + b * spatial;
        T* dst = out + ((b0 + b) * g.out_channels + o) * spatial;
        const T add = bias != nullptr ? bias[o] : T(0);
        for (std::int64_t p = 0; p < spatial; ++p) dst[p] = src[p] + add;
      }
  }
}

template <typename T>
void conv2d_backward_input(const ConvGeometry& g, const T* grad_out, const T* weight,
                           T* grad_input) {
  const std::int64_t spatial = g.out_height() * g.out_width();
  const std::int64_t patch = g.in_channels * g.kernel * g.kernel;
  const std::int64_t in_plane = g.in_channels * g.height * g.width;
  const std::int64_t chunk = images_per_chunk(patch + g.out_channels, spatial, g.batch);
  std::vector<T> dy(static_cast<std::size_t>(g.out_channels * chunk * spatial));
  std::vector<T> cols(static_cast<std::size_t>(patch * chunk * spatial));
  for (std::int64_t b0 = 0; b0 < g.batch; b0 += chunk) {
    const std::int64_t nb = std::min(chunk, g.batch - b0), ld = nb * spatial;
    for (std::int64_t b = 0; b < nb; ++b)
      for (std::int64_t o = 0; o < g.out_channels; ++o) {
        const T* src = grad_out + ((b0 + b) * g.out_channels + o) * spatial;
        std::copy(src, src + spatial, dy.data() + o * ld + b * spatial);
      }
    gemm<T>(true, false, patch, ld, g.out_channels, T(1), weight, dy.data(), T(0), cols.data());
    const bool parallel = nb > 1 && nb * patch * spatial >= kParallelWork;
#pragma omp parallel for schedule(static) if (parallel)
    for (std::int64_t b = 0; b < nb; ++b) {
      T* dx = grad_input + (b0 + b) * in_plane;
      if (is_pointwise(g)) {
        for (std::int64_t r = 0; r < patch; ++r) {
          const T* src = cols.data() + r * ld + b * spatial;
          for (std::int64_t p = 0; p < spatial; ++p) dx[r * spatial + p] += src[p];
        }
      } else {
        col2im_add(g, cols.data() + b * spatial, ld, dx);
      }
    }
  }
}

template <typename T>
void conv2d_backward_weight(const ConvGeometry& g, const T* input, const T* grad_out,
                            T* grad_weight) {
  const std::int64_t oh = g.out_height(), ow = g.out_width();
  const std::int64_t spatial = oh * ow;
  const std::int64_t patch = g.in_channels * g.kernel * g.kernel;
  const std::int64_t in_plane = g.in_channels * g.height * g.width;
  const std::int64_t cols_total = g.batch * spatial;
  // Stack every image's columns side by side so one product sums over the batch.
  std::vector<T> cols(static_cast<std::size_t>(patch * cols_total));
  std::vector<T> dy(static_cast<std::size_t>(g.out_channels * cols_total));
  for (std::int64_t b = 0; b < g.batch; ++b) {
    const T* src = input + b * in_plane;
    if (is_pointwise(g)) {
      for (std::int64_t r = 0; r < patch; ++r)
        std::copy(src + r * spatial, src + (r + 1) * spatial,
                  cols.begin() + r * cols_total + b * spatial);
    } else {
      im2col(g, src, cols.data() + b * spatial, cols_total);
    }
    for (std::int64_t o = 0; o < g.out_channels; ++o) {
      const T* row = grad_out + (b * g.out_channels + o) * spatial;
      std::copy(row, row + spatial, dy.begin() + o * cols_total + b * spatial);
    }
  }
  gemm<T>(false, true, g.out_channels, patch, cols_total, T(1), dy.data(), cols.data(), T(1),
          grad_weight);
}

template <typename T>
void depthwise_filter_reflect(std::int64_t planes, std::int64_t height, std::int64_t width,
                              const T* input, const T* kernel, std::int64_t k, T* out) {
  const std::int64_t r = k / 2;
  std::vector<std::int64_t> ry(static_cast<std::size_t>(height + 2 * r));
  std::vector<std::int64_t> rx(static_cast<std::size_t>(width + 2 * r));
  for (std::int64_t i = 0; i < height + 2 * r; ++i) ry[i] = reflect(i - r, height);
  for (std::int64_t i = 0; i < width + 2 * r; ++i) rx[i] = reflect(i - r, width);
#pragma omp parallel for schedule(static) if (planes * height * width * k * k >= kParallelWork)
  for (std::int64_t p = 0; p < planes; ++p) {
    const T* src = input + p * height * width;
    T* dst = out + p * height * width;
    for (std::int64_t y = 0; y < height; ++y)
      for (std::int64_t x = 0; x < width; ++x) {
        T acc = 0;
        for (std::int64_t i = 0; i < k; ++i) {
          const T* row = src + ry[y + i] * width;
          for (std::int64_t j = 0; j < k; ++j) acc += kernel[i * k + j] * row[rx[x + j]];
        }
        dst[y * width + x] = acc;
      }
  }
}

namespace reference {

template <typename T>
void gemm(bool trans_a, bool trans_b, std::int64_t m, std::int64_t n, std::int64_t k, T alpha,
          const T* a, const T* b, T beta, T* c) {
  for (std::int64_t i = 0; i < m; ++i)
    for (std::int64_t j = 0; j < n; ++j) {
      T acc = 0;
      for (std::int64_t p = 0; p < k; ++p) {
        const T av = trans_a ? a[p * m + i] : a[i * k + p];
        const T bv = trans_b ? b[j * k + p] : b[p * n + j];
        acc += av * bv;
      }
      c[i * n + j] = alpha * acc + (beta == T(0) ? T(0) : beta * c[i * n + j]);
    }
}

template <typename T>
void conv2d_forward(const ConvGeometry& g, const T* input, const T* weight, const T* bias,
                    T* out) {
  const std::int64_t oh = g.out_height(), ow = g.out_width(), kk = g.kernel;
  for (std::int64_t b = 0; b < g.batch; ++b)
    for (std::int64_t o = 0; o < g.out_channels; ++o)
      for (std::int64_t y = 0; y < oh; ++y)
        for (std::int64_t x = 0; x < ow; ++x) {
          T acc = bias ? bias[o] : T(0);
          for (std::int64_t c = 0; c < g.in_channels; ++c)
            for (std::int64_t i = 0; i < kk; ++i)
              for (std::int64_t j = 0; j < kk; ++j) {
                const std::int64_t iy = y * g.stride + i - g.pad;
                const std::int64_t ix = x * g.stride + j - g.pad;
                if (iy < 0 || iy >= g.height || ix < 0 || ix >= g.width) continue;
                acc += weight[((o * g.in_channels + c) * kk + i) * kk + j] *
                       input[((b * g.in_channels + c) * g.height + iy) * g.width + ix];
              }
          out[((b * g.out_channels + o) * oh + y) * ow + x] = acc;
        }
}

template <typename T>
void conv2d_backward_input(const ConvGeometry& g, const T* grad_out, const T* weight,
                           T* grad_input) {
  const std::int64_t oh = g.out_height(), ow = g.out_width(), kk = g.kernel;
  for (std::int64_t b = 0; b < g.batch; ++b)
    for (std::int64_t o = 0; o < g.out_channels; ++o)
      for (std::int64_t y = 0; y < oh; ++y)
        for (std::int64_t x = 0; x < ow; ++x) {
          const T go = grad_out[((b * g.out_channels + o) * oh + y) * ow + x];
          for (std::int64_t c = 0; c < g.in_channels; ++c)
            for (std::int64_t i = 0; i < kk; ++i)
              for (std::int64_t j = 0; j < kk; ++j) {
                const std::int64_t iy = y * g.stride + i - g.pad;
                const std::int64_t ix = x * g.stride + j - g.pad;
                if (iy < 0 || iy >= g.height || ix < 0 || ix >= g.width) continue;
                grad_input[((b * g.in_channels + c) * g.height + iy) * g.width + ix] +=
                    go * weight[((o * g.in_channels + c) * kk + i) * kk + j];
              }
        }
}

template <typename T>
void conv2d_backward_weight(const ConvGeometry& g, const T* input, const T* grad_out,
                            T* grad_weight) {
  const std::int64_t oh = g.out_height(), ow = g.out_width(), kk = g.kernel;
  for (std::int64_t o = 0; o < g.out_channels; ++o)
    for (std::int64_t c = 0; c < g.in_channels; ++c)
      for (std::int64_t i = 0; i < kk; ++i)
        for (std::int64_t j = 0; j < kk; ++j) {
          T acc = 0;
          for (std::int64_t b = 0; b < g.batch; ++b)
            for (std::int64_t y = 0; y < oh; ++y)
              for (std::int64_t x = 0; x < ow; ++x) {
                const std::int64_t iy = y * g.stride + i - g.pad;
                const std::int64_t ix = x * g.stride + j - g.pad;
                if (iy < 0 || iy >= g.height || ix < 0 || ix >= g.width) continue;
                acc += grad_out[((b * g.out_channels + o) * oh + y) * ow + x] *
                       input[((b * g.in_channels + c) * g.height + iy) * g.width + ix];
              }
          grad_weight[((o * g.in_channels + c) * kk + i) * kk + j] += acc;
        }
}

template <typename T>
void depthwise_filter_reflect(std::int64_t planes, std::int64_t height, std::int64_t width,
                              const T* input, const T* kernel, std::int64_t k, T* out) {
  const std::int64_t r = k / 2;
  for (std::int64_t p = 0; p < planes; ++p)
    for (std::int64_t y = 0; y < height; ++y)
      for (std::int64_t x = 0; x < width; ++x) {
        T acc = 0;
        for (std::int64_t i = -r; i <= r; ++i)
          for (std::int64_t j = -r; j <= r; ++j)
            acc += kernel[(i + r) * k + (j + r)] *
                   input[(p * height + reflect(y + i, height)) * width + reflect(x + j, width)];
        out[(p * height + y) * width + x] = acc;
      }
}

}  // namespace reference

#define UNIAS_INSTANTIATE_KERNELS(NS, T)                                                        \
  template void NS::gemm<T>(bool, bool, std::int64_t, std::int64_t, std::int64_t, T, const T*,  \
                            const T*, T, T*);                                                   \
  template void NS::conv2d_forward<T>(const ConvGeometry&, const T*, const T*, const T*, T*);   \
  template void NS::conv2d_backward_input<T>(const ConvGeometry&, const T*, const T*, T*);      \
  template void NS::conv2d_backward_weight<T>(const ConvGeometry&, const T*, const T*, T*);     \
  template void NS::depthwise_filter_reflect<T>(std::int64_t, std::int64_t, std::int64_t,       \
                                                const T*, const T*, std::int64_t, T*);

UNIAS_INSTANTIATE_KERNELS(kernels, float)
UNIAS_INSTANTIATE_KERNELS(kernels, double)
UNIAS_INSTANTIATE_KERNELS(kernels::reference, float)
UNIAS_INSTANTIATE_KERNELS(kernels::reference, double)

#undef UNIAS_INSTANTIATE_KERNELS

}  // namespace unias::kernels
