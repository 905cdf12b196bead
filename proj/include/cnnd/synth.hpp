// Copyright 2026 The cnnd Authors
// SPDX-License-Identifier: Apache-2.0

// Seeded random parameters and inputs, for demos, benchmarks and tests.

#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "cnnd/errors.hpp"
#include "cnnd/layer_params.hpp"
#include "cnnd/model_store.hpp"
#include "cnnd/netfile.hpp"
#include "cnnd/tensor.hpp"

namespace cnnd {

/// Uniform values in [lo, hi).
inline Tensor random_tensor(Shape4 shape, std::uint64_t seed, float lo = -1.0f, float hi = 1.0f) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> dist(lo, hi);
  Tensor t(shape);
  for (float& v : t.data()) v = dist(rng);
  return t;
}

/// Weights uniform in +-1/sqrt(fan_in), biases in +-0.1, so activations stay O(1).
inline LayerParams random_params(Shape4 weight_shape, std::uint64_t seed) {
  const std::size_t fan_in = weight_shape.c * weight_shape.h * weight_shape.w;
  const float bound = 1.0f / std::sqrt(static_cast<float>(fan_in == 0 ? 1 : fan_in));
  LayerParams p{random_tensor(weight_shape, seed, -bound, bound), {}};
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ull);
  std::uniform_real_distribution<float> dist(-0.1f, 0.1f);
  p.bias.resize(weight_shape.n);
  for (float& b : p.bias) b = dist(rng);
  return p;
}

/// Writes random parameter files for every conv/fc layer of `cfg`, using the
/// NetFile's input_shape and num_output / kernel declarations. Returns the
/// weight shapes written.
inline WeightShapes write_random_model(const NetConfig& cfg, const std::filesystem::path& dir,
                                       std::uint64_t seed) {
  if (!cfg.input_shape) throw Error("NetFile has no input_shape; cannot size parameters");
  const auto& in = *cfg.input_shape;
  const WeightShapes shapes = declared_weight_shapes(cfg, {1, in[0], in[1], in[2]});
  std::filesystem::create_directories(dir);
  std::uint64_t layer_seed = seed;
  for (const LayerSpec& l : cfg.layers) {
    if (!has_params(l.kind)) continue;
    auto it = shapes.find(l.name);
    if (it == shapes.end()) {
      throw Error("layer '" + l.name + "' does not declare num_output (and kernel_h/kernel_w)");
    }
    write_layer_params(dir / *l.params_file, random_params(it->second, ++layer_seed));
  }
  return shapes;
}

}  // namespace cnnd
