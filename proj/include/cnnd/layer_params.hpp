// Copyright 2026 The cnnd Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <vector>

#include "cnnd/tensor.hpp"

namespace cnnd {

/// Trained weights of one conv or fc layer.
///
/// conv weight: (kernels, in_channels / group, kh, kw)
/// fc weight:   (out_features, in_features, 1, 1)
struct LayerParams {
  Tensor weight;
  std::vector<float> bias;

  /// Bytes held by weight and bias, the unit the cache planner budgets.
  std::size_t bytes() const { return (weight.size() + bias.size()) * sizeof(float); }

  friend bool operator==(const LayerParams&, const LayerParams&) = default;
};

}  // namespace cnnd
