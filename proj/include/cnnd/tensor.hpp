// Copyright 2026 The cnnd Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cnnd/errors.hpp"

namespace cnnd {

/// Batch-channel-height-width extent of a tensor.
struct Shape4 {
  std::size_t n = 0;
  std::size_t c = 0;
  std::size_t h = 0;
  std::size_t w = 0;

  /// Element count; throws ShapeError if the product overflows size_t.
  std::size_t count() const {
    std::size_t total = 1;
    for (std::size_t d : {n, c, h, w}) {
      if (d != 0 && total > std::numeric_limits<std::size_t>::max() / d) {
        throw ShapeError("shape " + str() + " overflows the addressable range");
      }
      total *= d;
    }
    return total;
  }

  std::size_t per_image() const { return Shape4{1, c, h, w}.count(); }

  std::string str() const {
    return "(" + std::to_string(n) + "," + std::to_string(c) + "," +
           std::to_string(h) + "," + std::to_string(w) + ")";
  }

  friend bool operator==(const Shape4&, const Shape4&) = default;
};

/// Dense float32 tensor stored row-major in (n, c, h, w) order.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape4 shape) : shape_(shape), data_(shape.count(), 0.0f) {}

  Tensor(Shape4 shape, std::vector<float> data)
      : shape_(shape), data_(std::move(data)) {
    if (data_.size() != shape_.count()) {
      throw ShapeError("tensor " + shape_.str() + " needs " +
                       std::to_string(shape_.count()) + " values, got " +
                       std::to_string(data_.size()));
    }
  }

  const Shape4& shape() const noexcept { return shape_; }
  std::size_t size() const noexcept { return data_.size(); }

  std::span<const float> data() const noexcept { return data_; }
  std::span<float> data() noexcept { return data_; }

  std::size_t offset(std::size_t n, std::size_t c, std::size_t y,
                     std::size_t x) const {
    if (n >= shape_.n || c >= shape_.c || y >= shape_.h || x >= shape_.w) {
      throw BoundsError("index (" + std::to_string(n) + "," + std::to_string(c) +
                        "," + std::to_string(y) + "," + std::to_string(x) +
                        ") outside " + shape_.str());
    }
    return ((n * shape_.c + c) * shape_.h + y) * shape_.w + x;
  }

  float at(std::size_t n, std::size_t c, std::size_t y, std::size_t x) const {
    return data_[offset(n, c, y, x)];
  }
  float& at(std::size_t n, std::size_t c, std::size_t y, std::size_t x) {
    return data_[offset(n, c, y, x)];
  }

  // Unchecked pointer to the start of plane (n, c).
  const float* plane(std::size_t n, std::size_t c) const noexcept {
    return data_.data() + (n * shape_.c + c) * shape_.h * shape_.w;
  }
  float* plane(std::size_t n, std::size_t c) noexcept {
    return data_.data() + (n * shape_.c + c) * shape_.h * shape_.w;
  }

  /// Copies image `n` out as a single-image tensor.
  Tensor image(std::size_t n) const {
    if (n >= shape_.n) {
      throw BoundsError("image " + std::to_string(n) + " outside " + shape_.str());
    }
    const std::size_t len = shape_.per_image();
    auto first = data_.begin() + static_cast<std::ptrdiff_t>(n * len);
    return Tensor({1, shape_.c, shape_.h, shape_.w},
                  std::vector<float>(first, first + static_cast<std::ptrdiff_t>(len)));
  }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape4 shape_{};
  std::vector<float> data_;
};

/// Stacks single- or multi-image tensors of equal (c, h, w) along the batch axis.
inline Tensor concat_batch(std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("concat_batch: no tensors");
  Shape4 shape = parts.front().shape();
  shape.n = 0;
  std::vector<float> data;
  for (const Tensor& t : parts) {
    const Shape4& s = t.shape();
    if (s.c != shape.c || s.h != shape.h || s.w != shape.w) {
      throw ShapeError("concat_batch: " + s.str() + " does not match " + shape.str());
    }
    shape.n += s.n;
    data.insert(data.end(), t.data().begin(), t.data().end());
  }
  return Tensor(shape, std::move(data));
}

namespace detail {

inline std::size_t fit_extent(const char* dim, std::size_t in, std::size_t window,
                              std::size_t pad, std::size_t stride) {
  if (stride == 0) throw ShapeError(std::string(dim) + ": stride must be >= 1");
  if (window == 0) throw ShapeError(std::string(dim) + ": window must be >= 1");
  const std::size_t padded = in + 2 * pad;
  if (padded < window) {
    throw ShapeError(std::string(dim) + ": window " + std::to_string(window) +
                     " exceeds padded extent " + std::to_string(padded));
  }
  if ((padded - window) % stride != 0) {
    throw ShapeError(std::string(dim) + ": (" + std::to_string(in) + " + 2*" +
                     std::to_string(pad) + " - " + std::to_string(window) +
                     ") is not divisible by stride " + std::to_string(stride));
  }
  return (padded - window) / stride + 1;
}

}  // namespace detail

/// Output extent of a convolution. Geometry must tile the padded input exactly.
inline Shape4 conv_output_shape(Shape4 in, std::size_t kernels, std::size_t kh,
                                std::size_t kw, std::size_t pad, std::size_t stride) {
  if (kernels == 0) throw ShapeError("kernels: count must be >= 1");
  return {in.n, kernels, detail::fit_extent("height", in.h, kh, pad, stride),
          detail::fit_extent("width", in.w, kw, pad, stride)};
}

/// Output extent of an unpadded pooling window.
inline Shape4 pool_output_shape(Shape4 in, std::size_t kh, std::size_t kw,
                                std::size_t stride) {
  return {in.n, in.c, detail::fit_extent("height", in.h, kh, 0, stride),
          detail::fit_extent("width", in.w, kw, 0, stride)};
}

}  // namespace cnnd
