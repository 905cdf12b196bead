// Copyright 2026 The cnnd Authors
// SPDX-License-Identifier: Apache-2.0

// Parameter files and the RAM-budgeted parameter cache.
//
// Each conv/fc layer's parameters live in one MessagePack file holding a map
//   "shape":  [n, c, h, w]     (unsigned ints)
//   "weight": [float32 ...]    (n*c*h*w values)
//   "bias":   [float32 ...]    (n values)
// conventionally named model_param_<layer>.msg.

#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <memory>
#include <mutex>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "cnnd/errors.hpp"
#include "cnnd/layer_params.hpp"
#include "cnnd/netfile.hpp"
#include "cnnd/tensor.hpp"

namespace cnnd {

inline std::string param_file_name(const std::string& layer) {
  return "model_param_" + layer + ".msg";
}

namespace detail {

using json = nlohmann::json;

// Streams a parameter payload straight into LayerParams without building
// a DOM. Stops early once "shape" is read when shape_only is set.
class ParamReader : public nlohmann::json_sax<json> {
 public:
  explicit ParamReader(bool shape_only) : shape_only_(shape_only) {}

  std::optional<std::vector<std::uint64_t>> shape;
  std::optional<std::vector<float>> weight;
  std::optional<std::vector<float>> bias;
  std::string error;
  bool stopped_early = false;

  bool null() override { return fail("unexpected nil"); }
  bool boolean(bool) override { return fail("unexpected boolean"); }
  bool number_integer(number_integer_t v) override {
    if (field_ == Field::shape && depth_ == 2 && v >= 0) {
      shape->push_back(static_cast<std::uint64_t>(v));
      return true;
    }
    return fail("unexpected integer");
  }
  bool number_unsigned(number_unsigned_t v) override {
    if (field_ == Field::shape && depth_ == 2) {
      shape->push_back(v);
      return true;
    }
    return fail("unexpected unsigned integer");
  }
  bool number_float(number_float_t v, const string_t&) override {
    if (depth_ != 2 || (field_ != Field::weight && field_ != Field::bias)) {
      return fail("unexpected float");
    }
    if (!std::isfinite(v)) return fail(std::string("non-finite value in ") + field_name());
    (field_ == Field::weight ? *weight : *bias).push_back(static_cast<float>(v));
    return true;
  }
  bool string(string_t&) override { return fail("unexpected string"); }
  bool binary(binary_t&) override { return fail("unexpected binary"); }

  bool start_object(std::size_t) override {
    if (depth_ != 0) return fail("nested map");
    ++depth_;
    return true;
  }
  bool key(string_t& k) override {
    if (k == "shape") {
      field_ = Field::shape;
    } else if (k == "weight") {
      field_ = Field::weight;
    } else if (k == "bias") {
      field_ = Field::bias;
    } else {
      return fail("unknown key '" + k + "'");
    }
    return true;
  }
  bool end_object() override {
    --depth_;
    return true;
  }
  bool start_array(std::size_t len) override {
    if (depth_ != 1 || field_ == Field::none) return fail("unexpected array");
    ++depth_;
    auto open = [&](auto& slot) {
      if (slot) return fail(std::string("duplicate key '") + field_name() + "'");
      slot.emplace();
      if (len != static_cast<std::size_t>(-1)) slot->reserve(std::min<std::size_t>(len, 1u << 26));
      return true;
    };
    switch (field_) {
      case Field::shape: return open(shape);
      case Field::weight: return open(weight);
      case Field::bias: return open(bias);
      default: return false;
    }
  }
  bool end_array() override {
    --depth_;
    if (shape_only_ && field_ == Field::shape) {
      stopped_early = true;
      return false;
    }
    field_ = Field::none;
    return true;
  }
  bool parse_error(std::size_t, const std::string&,
                   const nlohmann::detail::exception& ex) override {
    if (error.empty()) error = ex.what();
    return false;
  }

 private:
  enum class Field { none, shape, weight, bias };

  bool fail(const std::string& why) {
    if (error.empty()) error = why;
    return false;
  }
  const char* field_name() const {
    switch (field_) {
      case Field::shape: return "shape";
      case Field::weight: return "weight";
      case Field::bias: return "bias";
      default: return "?";
    }
  }

  bool shape_only_;
  Field field_ = Field::none;
  int depth_ = 0;
};

inline std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path.string() + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                  std::istreambuf_iterator<char>());
  if (f.bad()) throw IoError("cannot read '" + path.string() + "'");
  return bytes;
}

inline Shape4 shape_from(const std::vector<std::uint64_t>& s) {
  if (s.size() != 4) {
    throw FormatError("shape must have 4 entries, got " + std::to_string(s.size()));
  }
  return {static_cast<std::size_t>(s[0]), static_cast<std::size_t>(s[1]),
          static_cast<std::size_t>(s[2]), static_cast<std::size_t>(s[3])};
}

}  // namespace detail

/// Encodes parameters in the MessagePack schema (float32 arrays).
inline std::vector<std::uint8_t> encode_layer_params(const LayerParams& p) {
  const Shape4 s = p.weight.shape();
  if (p.bias.size() != s.n) {
    throw ShapeError("bias has " + std::to_string(p.bias.size()) + " values, expected " +
                     std::to_string(s.n));
  }
  auto finite = [](float v) { return std::isfinite(v); };
  if (!std::all_of(p.weight.data().begin(), p.weight.data().end(), finite) ||
      !std::all_of(p.bias.begin(), p.bias.end(), finite)) {
    throw FormatError("refusing to encode non-finite parameter values");
  }
  detail::json j;
  j["shape"] = {s.n, s.c, s.h, s.w};
  j["weight"] = std::vector<float>(p.weight.data().begin(), p.weight.data().end());
  j["bias"] = p.bias;
  return detail::json::to_msgpack(j);
}

/// Decodes a parameter payload; `expected`, when given, must equal the weight shape.
inline LayerParams decode_layer_params(const std::vector<std::uint8_t>& bytes,
                                       std::optional<Shape4> expected = std::nullopt) {
  detail::ParamReader reader(false);
  const bool ok = detail::json::sax_parse(bytes, &reader, detail::json::input_format_t::msgpack);
  if (!ok) {
    throw FormatError("malformed parameter payload: " +
                      (reader.error.empty() ? std::string("parse failed") : reader.error));
  }
  if (!reader.shape || !reader.weight || !reader.bias) {
    throw FormatError("malformed parameter payload: needs keys shape, weight and bias");
  }
  const Shape4 shape = detail::shape_from(*reader.shape);
  if (reader.weight->size() != shape.count()) {
    throw ShapeError("weight has " + std::to_string(reader.weight->size()) +
                     " values, expected " + std::to_string(shape.count()) + " for shape " +
                     shape.str());
  }
  if (reader.bias->size() != shape.n) {
    throw ShapeError("bias has " + std::to_string(reader.bias->size()) + " values, expected " +
                     std::to_string(shape.n));
  }
  if (expected && *expected != shape) {
    throw ShapeError("parameter shape " + shape.str() + " does not match expected " +
                     expected->str());
  }
  return LayerParams{Tensor(shape, std::move(*reader.weight)), std::move(*reader.bias)};
}

inline void write_layer_params(const std::filesystem::path& path, const LayerParams& p) {
  const auto bytes = encode_layer_params(p);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write '" + path.string() + "'");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("cannot write '" + path.string() + "'");
}

inline LayerParams load_layer_params(const std::filesystem::path& path,
                                     std::optional<Shape4> expected = std::nullopt) {
  const auto bytes = detail::read_file(path);
  try {
    return decode_layer_params(bytes, expected);
  } catch (const ShapeError& e) {
    throw ShapeError("'" + path.string() + "': " + e.what());
  } catch (const FormatError& e) {
    throw FormatError("'" + path.string() + "': " + e.what());
  }
}

/// Reads only the declared weight shape of a parameter file.
inline Shape4 read_param_shape(const std::filesystem::path& path) {
  const auto bytes = detail::read_file(path);
  detail::ParamReader reader(true);
  detail::json::sax_parse(bytes, &reader, detail::json::input_format_t::msgpack);
  if (!reader.stopped_early || !reader.shape) {
    throw FormatError("'" + path.string() + "': malformed parameter payload: " +
                      (reader.error.empty() ? std::string("no shape") : reader.error));
  }
  return detail::shape_from(*reader.shape);
}

/// Bytes a layer with this weight shape occupies (weight plus one bias per row).
inline std::size_t param_bytes(Shape4 weight) {
  return (weight.count() + weight.n) * sizeof(float);
}

// ---------------------------------------------------------------------------
// Cache planning

struct CachePlan {
  std::set<std::string, std::less<>> resident;
  std::size_t resident_bytes = 0;

  bool is_resident(std::string_view layer) const { return resident.contains(layer); }
  friend bool operator==(const CachePlan&, const CachePlan&) = default;
};

/// Largest-first greedy residency under `budget_mb` MiB.
///
/// `layer_sizes` is in NetFile order, which breaks ties between equal sizes.
/// A layer that does not fit in what is left of the budget is skipped and
/// smaller ones are still considered.
inline CachePlan plan_cache(const std::vector<std::pair<std::string, std::size_t>>& layer_sizes,
                            std::size_t budget_mb) {
  const std::size_t budget = budget_mb << 20;
  std::vector<std::size_t> order(layer_sizes.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return layer_sizes[a].second > layer_sizes[b].second;
  });

  CachePlan plan;
  for (std::size_t i : order) {
    const auto& [name, bytes] = layer_sizes[i];
    if (bytes <= budget - plan.resident_bytes) {
      plan.resident.insert(name);
      plan.resident_bytes += bytes;
    }
  }
  return plan;
}

// ---------------------------------------------------------------------------
// Parameter sources

/// Where layer parameters come from.
class ParamSource {
 public:
  virtual ~ParamSource() = default;
  virtual LayerParams read(const std::string& layer) const = 0;
  virtual Shape4 weight_shape(const std::string& layer) const = 0;
};

/// Reads <model_dir>/<params_file> for each conv/fc layer of a NetFile.
class FileParamSource : public ParamSource {
 public:
  FileParamSource(std::filesystem::path model_dir, const NetConfig& cfg)
      : dir_(std::move(model_dir)) {
    for (const LayerSpec& l : cfg.layers) {
      if (l.params_file) files_[l.name] = *l.params_file;
    }
  }

  LayerParams read(const std::string& layer) const override { return load_layer_params(path(layer)); }
  Shape4 weight_shape(const std::string& layer) const override {
    return read_param_shape(path(layer));
  }

  std::filesystem::path path(const std::string& layer) const {
    auto it = files_.find(layer);
    if (it == files_.end()) throw Error("layer '" + layer + "' has no parameter file");
    const auto p = dir_ / it->second;
    if (!std::filesystem::exists(p)) {
      throw IoError("layer '" + layer + "': parameter file '" + p.string() + "' not found");
    }
    return p;
  }

 private:
  std::filesystem::path dir_;
  std::map<std::string, std::string, std::less<>> files_;
};

/// Serves parameters according to a CachePlan.
///
/// Resident layers are read from the source once, on first fetch, and kept;
/// concurrent first fetches wait for the single read. Other layers are read
/// on every fetch and freed when the caller drops the returned pointer.
class ParamCache {
 public:
  ParamCache(std::shared_ptr<const ParamSource> source, CachePlan plan,
             const std::vector<std::string>& layers)
      : source_(std::move(source)), plan_(std::move(plan)) {
    for (const auto& name : layers) slots_.try_emplace(name);
  }

  std::shared_ptr<const LayerParams> fetch(const std::string& layer) const {
    auto it = slots_.find(layer);
    if (it == slots_.end()) throw Error("layer '" + layer + "' has no parameters");
    Slot& slot = it->second;
    if (!plan_.is_resident(layer)) {
      slot.reads.fetch_add(1, std::memory_order_relaxed);
      return std::make_shared<const LayerParams>(source_->read(layer));
    }
    std::call_once(slot.once, [&] {
      slot.reads.fetch_add(1, std::memory_order_relaxed);
      slot.value = std::make_shared<const LayerParams>(source_->read(layer));
    });
    return slot.value;
  }

  /// Storage reads issued for `layer` so far.
  std::size_t reads(const std::string& layer) const {
    auto it = slots_.find(layer);
    return it == slots_.end() ? 0 : it->second.reads.load();
  }

  std::size_t total_reads() const {
    std::size_t total = 0;
    for (const auto& [name, slot] : slots_) total += slot.reads.load();
    return total;
  }

  const CachePlan& plan() const noexcept { return plan_; }
  const ParamSource& source() const noexcept { return *source_; }

 private:
  struct Slot {
    std::once_flag once;
    std::shared_ptr<const LayerParams> value;
    mutable std::atomic<std::size_t> reads{0};
  };

  std::shared_ptr<const ParamSource> source_;
  CachePlan plan_;
  mutable std::map<std::string, Slot, std::less<>> slots_;
};

}  // namespace cnnd
