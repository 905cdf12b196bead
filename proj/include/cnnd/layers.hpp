// Copyright 2026 The cnnd Authors
// SPDX-License-Identifier: Apache-2.0

// Forward kernels for the six supported layer kinds.
//
// Every kernel has one code path for both execution modes. Parallel mode
// only changes which thread computes a given output element; the element's
// own reduction is always evaluated in the same order, which makes
// sequential and parallel outputs bitwise identical under any profile.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>

#include "cnnd/errors.hpp"
#include "cnnd/exec.hpp"
#include "cnnd/layer_params.hpp"
#include "cnnd/tensor.hpp"

namespace cnnd {

enum class PoolMode { max, mean };

struct ConvGeometry {
  std::size_t pad = 0;
  std::size_t stride = 1;
  std::size_t group = 1;
};

inline float relu_value(float v) noexcept { return v > 0.0f ? v : 0.0f; }

namespace detail {

// acc + a[0]*b[0] + a[1]*b[1] + ... evaluated strictly left to right.
// Products of a chunk are formed together (they are independent and
// vectorize); their sum is folded into acc one by one.
template <std::size_t Width>
inline float dot_chunks(const float* a, const float* b, std::size_t len, float acc) {
  std::size_t i = 0;
  for (; i + Width <= len; i += Width) {
    float prod[Width];
    for (std::size_t k = 0; k < Width; ++k) prod[k] = a[i + k] * b[i + k];
    for (std::size_t k = 0; k < Width; ++k) acc += prod[k];
  }
  for (; i < len; ++i) acc += a[i] * b[i];
  return acc;
}

// The same fold as dot_chunks for L independent rows a[0..L) against one b.
// Interleaving the L dependency chains keeps the adder busy; each chain on
// its own is evaluated exactly as dot_chunks would.
template <std::size_t Width, std::size_t L>
inline void dot_chunks_lanes(const float* const* a, const float* b, std::size_t len, float* acc) {
  float s[L];
  for (std::size_t l = 0; l < L; ++l) s[l] = acc[l];
  std::size_t i = 0;
  for (; i + Width <= len; i += Width) {
    float prod[L][Width];
    for (std::size_t l = 0; l < L; ++l)
      for (std::size_t k = 0; k < Width; ++k) prod[l][k] = a[l][i + k] * b[i + k];
    for (std::size_t k = 0; k < Width; ++k)
      for (std::size_t l = 0; l < L; ++l) s[l] += prod[l][k];
  }
  for (; i < len; ++i)
    for (std::size_t l = 0; l < L; ++l) s[l] += a[l][i] * b[i];
  for (std::size_t l = 0; l < L; ++l) acc[l] = s[l];
}

template <std::size_t Width>
inline void dot_lanes_width(const float* const* a, const float* b, std::size_t len,
                            std::size_t lanes, float* acc) {
  switch (lanes) {
    case 1: return dot_chunks_lanes<Width, 1>(a, b, len, acc);
    case 2: return dot_chunks_lanes<Width, 2>(a, b, len, acc);
    case 3: return dot_chunks_lanes<Width, 3>(a, b, len, acc);
    default: return dot_chunks_lanes<Width, 4>(a, b, len, acc);
  }
}

inline constexpr std::size_t kMaxLanes = 4;

inline std::size_t ceil_div(std::size_t a, std::size_t b) { return (a + b - 1) / b; }

}  // namespace detail

/// Continues `acc` with the dot product of a and b in vector chunks of
/// `width` (4, 8 or 16; anything else runs scalar). The result does not
/// depend on `width`.
inline float dot_chunked(const float* a, const float* b, std::size_t len,
                         std::size_t width, float acc = 0.0f) {
  switch (width) {
    case 4: return detail::dot_chunks<4>(a, b, len, acc);
    case 8: return detail::dot_chunks<8>(a, b, len, acc);
    case 16: return detail::dot_chunks<16>(a, b, len, acc);
    default: return detail::dot_chunks<1>(a, b, len, acc);
  }
}

/// dot_chunked for 1 to 4 rows of `a` against the same `b`, continuing
/// acc[0..lanes). Every lane's result equals dot_chunked on that row alone.
inline void dot_chunked_lanes(const float* const* a, const float* b, std::size_t len,
                              std::size_t width, std::size_t lanes, float* acc) {
  switch (width) {
    case 4: return detail::dot_lanes_width<4>(a, b, len, lanes, acc);
    case 8: return detail::dot_lanes_width<8>(a, b, len, lanes, acc);
    case 16: return detail::dot_lanes_width<16>(a, b, len, lanes, acc);
    default: return detail::dot_lanes_width<1>(a, b, len, lanes, acc);
  }
}

/// Direct (cross-correlation) convolution with zero padding and groups.
inline Tensor conv_forward(const Tensor& in, const LayerParams& p, const ConvGeometry& g,
                           bool fused_relu, const ExecMode& m) {
  const Shape4 is = in.shape();
  const Shape4 ws = p.weight.shape();
  if (g.group == 0) throw ShapeError("conv: group must be >= 1");
  if (is.c % g.group != 0 || ws.n % g.group != 0) {
    throw ShapeError("conv: group " + std::to_string(g.group) +
                     " does not divide input channels " + std::to_string(is.c) +
                     " and kernel count " + std::to_string(ws.n));
  }
  if (ws.c * g.group != is.c) {
    throw ShapeError("conv: weight " + ws.str() + " expects " +
                     std::to_string(ws.c * g.group) + " input channels, input has " +
                     std::to_string(is.c));
  }
  if (p.bias.size() != ws.n) {
    throw ShapeError("conv: bias has " + std::to_string(p.bias.size()) +
                     " values for " + std::to_string(ws.n) + " kernels");
  }
  const Shape4 os = conv_output_shape(is, ws.n, ws.h, ws.w, g.pad, g.stride);
  Tensor out(os);

  const std::size_t rows = std::max<std::size_t>(1, m.profile.rows_per_item);
  const std::size_t row_blocks = detail::ceil_div(os.h, rows);
  const std::size_t kernels_per_group = ws.n / g.group;
  const std::size_t width = m.profile.vec_width;
  const auto ih = static_cast<std::ptrdiff_t>(is.h);
  const auto iw = static_cast<std::ptrdiff_t>(is.w);
  const auto pad = static_cast<std::ptrdiff_t>(g.pad);
  const auto stride = static_cast<std::ptrdiff_t>(g.stride);
  const auto kw = static_cast<std::ptrdiff_t>(ws.w);

  // A work item is one kernel over a block of output rows for up to
  // kMaxLanes images, which share every weight load.
  const std::size_t image_groups = detail::ceil_div(os.n, detail::kMaxLanes);
  m.for_each(image_groups * os.c * row_blocks, [&](std::size_t item) {
    const std::size_t block = item % row_blocks;
    const std::size_t k = (item / row_blocks) % os.c;
    const std::size_t n0 = item / (row_blocks * os.c) * detail::kMaxLanes;
    const std::size_t lanes = std::min(detail::kMaxLanes, os.n - n0);
    const std::size_t c_base = (k / kernels_per_group) * ws.c;
    const float* wk = p.weight.data().data() + k * ws.c * ws.h * ws.w;
    const std::size_t y_end = std::min(os.h, (block + 1) * rows);

    const float* src[detail::kMaxLanes];
    float acc[detail::kMaxLanes];
    for (std::size_t y = block * rows; y < y_end; ++y) {
      for (std::size_t x = 0; x < os.w; ++x) {
        const std::ptrdiff_t x0 = static_cast<std::ptrdiff_t>(x) * stride - pad;
        const std::ptrdiff_t j0 = std::max<std::ptrdiff_t>(0, -x0);
        const std::ptrdiff_t j1 = std::min<std::ptrdiff_t>(kw, iw - x0);
        std::fill_n(acc, lanes, 0.0f);
        if (j0 < j1) {
          for (std::size_t c = 0; c < ws.c; ++c) {
            const float* wc = wk + c * ws.h * ws.w;
            for (std::size_t i = 0; i < ws.h; ++i) {
              const std::ptrdiff_t iy =
                  static_cast<std::ptrdiff_t>(y) * stride + static_cast<std::ptrdiff_t>(i) - pad;
              if (iy < 0 || iy >= ih) continue;
              for (std::size_t l = 0; l < lanes; ++l) {
                src[l] = in.plane(n0 + l, c_base + c) + iy * iw + x0 + j0;
              }
              dot_chunked_lanes(src, wc + i * ws.w + j0, static_cast<std::size_t>(j1 - j0), width,
                                lanes, acc);
            }
          }
        }
        for (std::size_t l = 0; l < lanes; ++l) {
          const float v = acc[l] + p.bias[k];
          out.plane(n0 + l, k)[y * os.w + x] = fused_relu ? relu_value(v) : v;
        }
      }
    }
  });
  return out;
}

/// Unpadded max or mean pooling. Windows must tile the input exactly.
inline Tensor pool_forward(const Tensor& in, std::size_t kh, std::size_t kw,
                           std::size_t stride, PoolMode mode, const ExecMode& m,
                           bool fused_relu = false) {
  const Shape4 is = in.shape();
  const Shape4 os = pool_output_shape(is, kh, kw, stride);
  Tensor out(os);
  const float window = static_cast<float>(kh * kw);

  m.for_each(os.n * os.c, [&](std::size_t item) {
    const std::size_t n = item / os.c;
    const std::size_t c = item % os.c;
    const float* src = in.plane(n, c);
    float* dst = out.plane(n, c);
    for (std::size_t y = 0; y < os.h; ++y) {
      for (std::size_t x = 0; x < os.w; ++x) {
        const float* base = src + y * stride * is.w + x * stride;
        float v;
        if (mode == PoolMode::max) {
          v = base[0];
          for (std::size_t i = 0; i < kh; ++i)
            for (std::size_t j = 0; j < kw; ++j) v = std::max(v, base[i * is.w + j]);
        } else {
          float sum = 0.0f;
          for (std::size_t i = 0; i < kh; ++i)
            for (std::size_t j = 0; j < kw; ++j) sum += base[i * is.w + j];
          v = sum / window;
        }
        dst[y * os.w + x] = fused_relu ? relu_value(v) : v;
      }
    }
  });
  return out;
}

/// Fully connected layer over the flattened (c, h, w) of each image.
inline Tensor fc_forward(const Tensor& in, const LayerParams& p, bool fused_relu,
                         const ExecMode& m) {
  const Shape4 is = in.shape();
  const Shape4 ws = p.weight.shape();
  const std::size_t features = is.per_image();
  if (ws.c * ws.h * ws.w != features) {
    throw ShapeError("fc: weight " + ws.str() + " expects " +
                     std::to_string(ws.c * ws.h * ws.w) + " input features, input " +
                     is.str() + " has " + std::to_string(features));
  }
  if (p.bias.size() != ws.n) {
    throw ShapeError("fc: bias has " + std::to_string(p.bias.size()) + " values for " +
                     std::to_string(ws.n) + " outputs");
  }
  Tensor out({is.n, ws.n, 1, 1});
  const std::size_t per_item = std::max<std::size_t>(1, m.profile.fc_outputs_per_item);
  const std::size_t blocks = detail::ceil_div(ws.n, per_item);
  const std::size_t width = m.profile.vec_width;

  // One item is a block of outputs for the whole batch, so each weight row
  // is streamed once and reused for every image while it is in cache.
  m.for_each(blocks, [&](std::size_t item) {
    const std::size_t first = item * per_item;
    const std::size_t last = std::min(ws.n, first + per_item);
    for (std::size_t o = first; o < last; ++o) {
      const float* row = p.weight.data().data() + o * features;
      for (std::size_t n = 0; n < is.n; ++n) {
        const float* x = in.data().data() + n * features;
        const float v = dot_chunked(row, x, features, width) + p.bias[o];
        out.data()[n * ws.n + o] = fused_relu ? relu_value(v) : v;
      }
    }
  });
  return out;
}

inline Tensor relu(const Tensor& in, const ExecMode& m) {
  Tensor out(in.shape());
  constexpr std::size_t kChunk = 4096;
  const std::size_t total = in.size();
  m.for_each(detail::ceil_div(total, kChunk), [&](std::size_t item) {
    const std::size_t end = std::min(total, (item + 1) * kChunk);
    for (std::size_t i = item * kChunk; i < end; ++i) {
      out.data()[i] = relu_value(in.data()[i]);
    }
  });
  return out;
}

/// Across-channel local response normalization:
///   out = in / (k + alpha / n_size * sum of squares over the channel window)^beta
inline Tensor lrn_forward(const Tensor& in, std::size_t n_size, float alpha, float beta,
                          float k, const ExecMode& m) {
  if (n_size == 0 || n_size % 2 == 0) {
    throw Error("lrn: window size must be odd and >= 1, got " + std::to_string(n_size));
  }
  if (!(alpha >= 0.0f) || !(k > 0.0f) || !std::isfinite(beta) || !std::isfinite(alpha) ||
      !std::isfinite(k)) {
    throw Error("lrn: need finite alpha >= 0, k > 0 and finite beta");
  }
  const Shape4 s = in.shape();
  Tensor out(s);
  const std::size_t half = (n_size - 1) / 2;
  const std::size_t plane = s.h * s.w;
  const float scale = alpha / static_cast<float>(n_size);

  m.for_each(s.n * s.c, [&](std::size_t item) {
    const std::size_t n = item / s.c;
    const std::size_t c = item % s.c;
    const std::size_t lo = c >= half ? c - half : 0;
    const std::size_t hi = std::min(s.c - 1, c + half);
    const float* src = in.plane(n, c);
    float* dst = out.plane(n, c);
    for (std::size_t i = 0; i < plane; ++i) {
      float sq = 0.0f;
      for (std::size_t j = lo; j <= hi; ++j) {
        const float v = in.plane(n, j)[i];
        sq += v * v;
      }
      dst[i] = src[i] / std::pow(k + scale * sq, beta);
    }
  });
  return out;
}

/// Softmax over channels, independently for every (image, row, column).
inline Tensor softmax(const Tensor& in, const ExecMode& m) {
  const Shape4 s = in.shape();
  Tensor out(s);
  const std::size_t plane = s.h * s.w;
  if (s.c == 0) return out;

  m.for_each(s.n, [&](std::size_t n) {
    for (std::size_t i = 0; i < plane; ++i) {
      float peak = in.plane(n, 0)[i];
      for (std::size_t c = 1; c < s.c; ++c) peak = std::max(peak, in.plane(n, c)[i]);
      float sum = 0.0f;
      for (std::size_t c = 0; c < s.c; ++c) {
        const float e = std::exp(in.plane(n, c)[i] - peak);
        out.plane(n, c)[i] = e;
        sum += e;
      }
      for (std::size_t c = 0; c < s.c; ++c) out.plane(n, c)[i] /= sum;
    }
  });
  return out;
}

}  // namespace cnnd
