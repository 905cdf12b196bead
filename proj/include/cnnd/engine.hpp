// Copyright 2026 The cnnd Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <new>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cnnd/errors.hpp"
#include "cnnd/exec.hpp"
#include "cnnd/layers.hpp"
#include "cnnd/model_store.hpp"
#include "cnnd/netfile.hpp"
#include "cnnd/profile_file.hpp"
#include "cnnd/tensor.hpp"

namespace cnnd {

/// Folds every standalone relu that directly follows a conv or fc layer into
/// that layer's fused_relu flag. Other relu layers are kept.
inline NetConfig fuse_relu(NetConfig cfg) {
  std::vector<LayerSpec> out;
  out.reserve(cfg.layers.size());
  for (LayerSpec& l : cfg.layers) {
    if (l.kind == LayerKind::relu && !out.empty() && has_params(out.back().kind)) {
      out.back().fused_relu = true;
      continue;
    }
    out.push_back(std::move(l));
  }
  cfg.layers = std::move(out);
  return cfg;
}

/// Runs one layer. `params` is required for conv and fc and ignored otherwise.
inline Tensor run_layer(const LayerSpec& l, const Tensor& in, const LayerParams* params,
                        const ExecMode& m) {
  switch (l.kind) {
    case LayerKind::conv:
      return conv_forward(in, *params, {l.pad, l.stride, l.group}, l.fused_relu, m);
    case LayerKind::fc:
      return fc_forward(in, *params, l.fused_relu, m);
    case LayerKind::pool:
      return pool_forward(in, l.kernel_h, l.kernel_w, l.stride, l.pool_mode, m, l.fused_relu);
    case LayerKind::relu:
      return relu(in, m);
    case LayerKind::lrn:
      return lrn_forward(in, l.lrn_n, l.lrn_alpha, l.lrn_beta, l.lrn_k, m);
    case LayerKind::softmax:
      return softmax(in, m);
  }
  throw Error("unknown layer kind");
}

struct LayerTiming {
  std::string name;
  LayerKind kind = LayerKind::relu;
  std::int64_t compute_ns = 0;
  std::int64_t load_ns = 0;  // parameter fetch, excluded from compute_ns
};

struct ComputeOptions {
  std::optional<ExecutionMode> mode;     // defaults to the NetFile's execution_mode
  std::optional<TuningProfile> profile;  // defaults to the network's profile
  ThreadPool* pool = nullptr;            // defaults to default_pool()
  std::vector<LayerTiming>* timings = nullptr;
};

/// A NetFile bound to parameters, an input extent, a cache plan and a profile.
/// Immutable once built; compute() may be called concurrently.
class Network {
 public:
  const NetConfig& config() const noexcept { return cfg_; }
  const std::vector<LayerSpec>& layers() const noexcept { return cfg_.layers; }
  const CachePlan& plan() const noexcept { return cache_->plan(); }
  const ParamCache& cache() const noexcept { return *cache_; }
  const TuningProfile& profile() const noexcept { return profile_; }
  bool profile_tuned() const noexcept { return tuned_; }
  /// Per-image input extent (n == 1).
  Shape4 input_shape() const noexcept { return input_; }
  /// Output extent of every layer for a single image.
  const std::vector<Shape4>& shapes() const noexcept { return shapes_; }

  std::shared_ptr<const LayerParams> params(const std::string& layer) const {
    return cache_->fetch(layer);
  }

  ExecMode exec_mode(const ComputeOptions& opt = {}) const {
    return {opt.mode.value_or(cfg_.execution_mode), opt.profile.value_or(profile_), opt.pool};
  }

 private:
  friend Network build_network(const NetConfig&, std::shared_ptr<const ParamSource>, Shape4,
                               std::optional<LoadedProfile>);

  NetConfig cfg_;
  std::shared_ptr<ParamCache> cache_;
  TuningProfile profile_{};
  bool tuned_ = false;
  Shape4 input_{};
  std::vector<Shape4> shapes_;
};

/// Builds a network over an arbitrary parameter source.
inline Network build_network(const NetConfig& cfg, std::shared_ptr<const ParamSource> source,
                             Shape4 input_shape, std::optional<LoadedProfile> profile = {}) {
  Network net;
  net.cfg_ = fuse_relu(cfg);
  net.input_ = {1, input_shape.c, input_shape.h, input_shape.w};

  WeightShapes weights;
  std::vector<std::pair<std::string, std::size_t>> sizes;
  std::vector<std::string> param_layers;
  for (const LayerSpec& l : net.cfg_.layers) {
    if (!has_params(l.kind)) continue;
    const Shape4 ws = source->weight_shape(l.name);
    weights[l.name] = ws;
    sizes.emplace_back(l.name, param_bytes(ws));
    param_layers.push_back(l.name);
  }
  net.shapes_ = validate_shapes(net.cfg_, net.input_, weights);
  net.cache_ = std::make_shared<ParamCache>(std::move(source),
                                            plan_cache(sizes, net.cfg_.allocated_ram_mb),
                                            param_layers);
  if (profile) {
    net.profile_ = profile->profile;
    net.tuned_ = profile->tuned;
  }
  return net;
}

/// Builds a network from parameter files in `model_dir`, picking up
/// <model_dir>/tuning.profile when present.
inline Network build_network(const NetConfig& cfg, const std::filesystem::path& model_dir,
                             Shape4 input_shape) {
  auto source = std::make_shared<FileParamSource>(model_dir, cfg);
  return build_network(cfg, std::move(source), input_shape,
                       load_profile(model_dir / kProfileFileName));
}

/// Runs the network on a batch of any size n >= 1.
///
/// Non-resident parameters are fetched right before their layer and released
/// right after it.
inline Tensor compute(const Network& net, const Tensor& batch, const ComputeOptions& opt = {}) {
  const Shape4 in = net.input_shape();
  const Shape4 bs = batch.shape();
  if (bs.n == 0 || bs.c != in.c || bs.h != in.h || bs.w != in.w) {
    throw ShapeError("batch " + bs.str() + " does not match network input (n," +
                     std::to_string(in.c) + "," + std::to_string(in.h) + "," +
                     std::to_string(in.w) + ")");
  }
  const ExecMode mode = net.exec_mode(opt);
  using clock = std::chrono::steady_clock;
  auto ns = [](clock::duration d) {
    return std::chrono::duration_cast<std::chrono::nanoseconds>(d).count();
  };

  Tensor cur = batch;
  for (const LayerSpec& l : net.layers()) {
    try {
      const auto t0 = clock::now();
      std::shared_ptr<const LayerParams> params;
      if (has_params(l.kind)) params = net.params(l.name);
      const auto t1 = clock::now();
      cur = run_layer(l, cur, params.get(), mode);
      const auto t2 = clock::now();
      if (opt.timings) opt.timings->push_back({l.name, l.kind, ns(t2 - t1), ns(t1 - t0)});
    } catch (const std::bad_alloc&) {
      throw Error("layer '" + l.name + "': out of memory");
    } catch (const ShapeError& e) {
      throw ShapeError("layer '" + l.name + "': " + e.what());
    }
  }
  return cur;
}

/// Mean squared difference, accumulated in double.
inline double mse(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("mse: shapes " + a.shape().str() + " and " + b.shape().str() + " differ");
  }
  if (a.size() == 0) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a.data()[i]) - static_cast<double>(b.data()[i]);
    sum += d * d;
  }
  return sum / static_cast<double>(a.size());
}

}  // namespace cnnd
