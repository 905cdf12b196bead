// Copyright 2026 The cnnd Authors
// SPDX-License-Identifier: Apache-2.0

// NetFile: the text description of a network's layers and runtime settings.
//
// Grammar (line oriented, `#` starts a comment, keys are lowercase):
//
//   allocated_ram: 120            # MiB of parameters kept resident
//   execution_mode: parallel      # sequential | parallel
//   auto_tuning: off              # on | off
//   input_shape: 3 227 227        # optional, c h w of one image
//
//   layer {
//     type: conv                  # conv | pool | fc | relu | lrn | softmax
//     name: conv1
//     params_file: "model_param_conv1.msg"
//     stride: 4
//     fused_relu: true
//   }
//
// See docs/netfile.md for the per-kind key table.

#pragma once

#include <array>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <system_error>
#include <utility>
#include <vector>

#include "cnnd/errors.hpp"
#include "cnnd/exec.hpp"
#include "cnnd/layers.hpp"
#include "cnnd/tensor.hpp"

namespace cnnd {

enum class LayerKind { conv, pool, fc, relu, lrn, softmax };

inline const char* to_string(LayerKind k) {
  switch (k) {
    case LayerKind::conv: return "conv";
    case LayerKind::pool: return "pool";
    case LayerKind::fc: return "fc";
    case LayerKind::relu: return "relu";
    case LayerKind::lrn: return "lrn";
    case LayerKind::softmax: return "softmax";
  }
  return "?";
}

inline bool has_params(LayerKind k) { return k == LayerKind::conv || k == LayerKind::fc; }

struct LayerSpec {
  LayerKind kind = LayerKind::relu;
  std::string name;
  std::optional<std::string> params_file;  // conv, fc
  std::size_t pad = 0;                     // conv
  std::size_t stride = 1;                  // conv, pool
  std::size_t group = 1;                   // conv
  std::size_t kernel_h = 0;                // pool (required), conv (optional declaration)
  std::size_t kernel_w = 0;
  PoolMode pool_mode = PoolMode::max;
  std::size_t lrn_n = 1;
  float lrn_alpha = 0.0f;
  float lrn_beta = 0.0f;
  float lrn_k = 1.0f;
  bool fused_relu = false;                 // conv, fc, pool
  std::optional<std::size_t> num_output;   // conv, fc (optional declaration)

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

/// Per-image input extent (c, h, w).
using ImageShape = std::array<std::size_t, 3>;

struct NetConfig {
  std::vector<LayerSpec> layers;
  std::size_t allocated_ram_mb = 0;
  ExecutionMode execution_mode = ExecutionMode::parallel;
  bool auto_tuning = false;
  std::optional<ImageShape> input_shape;

  friend bool operator==(const NetConfig&, const NetConfig&) = default;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\f\v");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\f\v");
  return s.substr(first, last - first + 1);
}

// Drops a trailing `#` comment that is not inside double quotes.
inline std::string_view strip_comment(std::string_view s) {
  bool quoted = false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '"') quoted = !quoted;
    if (s[i] == '#' && !quoted) return s.substr(0, i);
  }
  return s;
}

inline bool is_key(std::string_view k) {
  if (k.empty() || !((k[0] >= 'a' && k[0] <= 'z') || k[0] == '_')) return false;
  for (char ch : k) {
    if (!((ch >= 'a' && ch <= 'z') || (ch >= '0' && ch <= '9') || ch == '_')) return false;
  }
  return true;
}

struct Entry {
  std::string value;
  std::size_t line = 0;
};

inline std::size_t parse_uint(const Entry& e, std::string_view key) {
  std::size_t v = 0;
  const char* first = e.value.data();
  const char* last = first + e.value.size();
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last || e.value.empty()) {
    throw ParseError(e.line, std::string(key) + ": expected a non-negative integer, got '" +
                                 e.value + "'");
  }
  return v;
}

inline std::size_t parse_positive(const Entry& e, std::string_view key) {
  const std::size_t v = parse_uint(e, key);
  if (v == 0) throw ParseError(e.line, std::string(key) + ": must be >= 1");
  return v;
}

inline float parse_float(const Entry& e, std::string_view key) {
  float v = 0.0f;
  const char* first = e.value.data();
  const char* last = first + e.value.size();
  if (first != last && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last || first == last || !std::isfinite(v)) {
    throw ParseError(e.line, std::string(key) + ": expected a finite number, got '" +
                                 e.value + "'");
  }
  return v;
}

inline bool parse_bool(const Entry& e, std::string_view key) {
  if (e.value == "true") return true;
  if (e.value == "false") return false;
  throw ParseError(e.line, std::string(key) + ": expected true or false, got '" + e.value + "'");
}

inline std::optional<LayerKind> kind_from(std::string_view s) {
  if (s == "conv") return LayerKind::conv;
  if (s == "pool") return LayerKind::pool;
  if (s == "fc") return LayerKind::fc;
  if (s == "relu") return LayerKind::relu;
  if (s == "lrn") return LayerKind::lrn;
  if (s == "softmax") return LayerKind::softmax;
  return std::nullopt;
}

// Which keys each kind accepts.
inline bool key_allowed(LayerKind kind, std::string_view key) {
  using K = LayerKind;
  if (key == "type" || key == "name") return true;
  if (key == "params_file" || key == "num_output") return kind == K::conv || kind == K::fc;
  if (key == "pad" || key == "group") return kind == K::conv;
  if (key == "stride" || key == "kernel_h" || key == "kernel_w")
    return kind == K::conv || kind == K::pool;
  if (key == "pool_mode") return kind == K::pool;
  if (key == "lrn_n" || key == "lrn_alpha" || key == "lrn_beta" || key == "lrn_k")
    return kind == K::lrn;
  if (key == "fused_relu") return kind == K::conv || kind == K::fc || kind == K::pool;
  return false;
}

inline bool known_layer_key(std::string_view key) {
  for (LayerKind k : {LayerKind::conv, LayerKind::pool, LayerKind::fc, LayerKind::relu,
                      LayerKind::lrn, LayerKind::softmax}) {
    if (key_allowed(k, key)) return true;
  }
  return false;
}

struct Block {
  std::size_t open_line = 0;
  std::map<std::string, Entry, std::less<>> entries;
};

inline LayerSpec build_layer(const Block& b, std::size_t close_line) {
  auto find = [&](std::string_view key) -> const Entry* {
    auto it = b.entries.find(key);
    return it == b.entries.end() ? nullptr : &it->second;
  };
  auto require = [&](std::string_view key, std::string_view what) -> const Entry& {
    const Entry* e = find(key);
    if (!e) {
      throw ParseError(close_line, std::string(what) + " is missing required key '" +
                                       std::string(key) + "'");
    }
    return *e;
  };

  const Entry& type = require("type", "layer block opened on line " + std::to_string(b.open_line));
  const auto kind = kind_from(type.value);
  if (!kind) throw ParseError(type.line, "unknown layer kind '" + type.value + "'");

  LayerSpec spec;
  spec.kind = *kind;
  const std::string what = std::string(to_string(spec.kind)) + " layer";
  const Entry& name = require("name", what);
  if (name.value.empty()) throw ParseError(name.line, "name: must not be empty");
  spec.name = name.value;

  for (const auto& [key, e] : b.entries) {
    if (!key_allowed(spec.kind, key)) {
      throw ParseError(e.line, "key '" + key + "' is not valid for a " + what);
    }
  }

  switch (spec.kind) {
    case LayerKind::conv:
    case LayerKind::fc: {
      const Entry& pf = require("params_file", what + " '" + spec.name + "'");
      if (pf.value.empty()) throw ParseError(pf.line, "params_file: must not be empty");
      spec.params_file = pf.value;
      if (const Entry* e = find("num_output")) spec.num_output = parse_positive(*e, "num_output");
      break;
    }
    case LayerKind::pool: {
      spec.kernel_h = parse_positive(require("kernel_h", what), "kernel_h");
      spec.kernel_w = parse_positive(require("kernel_w", what), "kernel_w");
      const Entry& mode = require("pool_mode", what);
      if (mode.value == "max") {
        spec.pool_mode = PoolMode::max;
      } else if (mode.value == "mean") {
        spec.pool_mode = PoolMode::mean;
      } else {
        throw ParseError(mode.line, "pool_mode: expected max or mean, got '" + mode.value + "'");
      }
      break;
    }
    case LayerKind::lrn: {
      const Entry& n = require("lrn_n", what);
      spec.lrn_n = parse_positive(n, "lrn_n");
      if (spec.lrn_n % 2 == 0) throw ParseError(n.line, "lrn_n: must be odd");
      const Entry& alpha = require("lrn_alpha", what);
      spec.lrn_alpha = parse_float(alpha, "lrn_alpha");
      if (spec.lrn_alpha < 0.0f) throw ParseError(alpha.line, "lrn_alpha: must be >= 0");
      spec.lrn_beta = parse_float(require("lrn_beta", what), "lrn_beta");
      if (const Entry* e = find("lrn_k")) {
        spec.lrn_k = parse_float(*e, "lrn_k");
        if (spec.lrn_k <= 0.0f) throw ParseError(e->line, "lrn_k: must be > 0");
      }
      break;
    }
    case LayerKind::relu:
    case LayerKind::softmax:
      break;
  }

  if (spec.kind == LayerKind::conv) {
    if (const Entry* e = find("pad")) spec.pad = parse_uint(*e, "pad");
    if (const Entry* e = find("group")) spec.group = parse_positive(*e, "group");
    const Entry* kh = find("kernel_h");
    const Entry* kw = find("kernel_w");
    if ((kh == nullptr) != (kw == nullptr)) {
      throw ParseError((kh ? kh : kw)->line, "conv kernel_h and kernel_w must be given together");
    }
    if (kh) {
      spec.kernel_h = parse_positive(*kh, "kernel_h");
      spec.kernel_w = parse_positive(*kw, "kernel_w");
    }
  }
  if (const Entry* e = find("stride")) spec.stride = parse_positive(*e, "stride");
  if (const Entry* e = find("fused_relu")) spec.fused_relu = parse_bool(*e, "fused_relu");
  return spec;
}

}  // namespace detail

/// Parses NetFile text. Every failure is a ParseError carrying a line number.
inline NetConfig parse_netfile(std::string_view text) {
  using detail::Entry;
  NetConfig cfg;
  std::optional<detail::Block> block;
  std::set<std::string, std::less<>> top_keys;
  std::map<std::string, std::size_t, std::less<>> names;  // name -> line
  std::size_t line_no = 0;

  std::size_t pos = 0;
  while (pos < text.size()) {
    const std::size_t eol = text.find('\n', pos);
    const std::string_view raw =
        text.substr(pos, eol == std::string_view::npos ? std::string_view::npos : eol - pos);
    pos = eol == std::string_view::npos ? text.size() : eol + 1;
    ++line_no;

    const std::string_view line = detail::trim(detail::strip_comment(raw));
    if (line.empty()) continue;

    if (line.starts_with("layer") && detail::trim(line.substr(5)) == "{") {
      if (block) throw ParseError(line_no, "nested layer block");
      block = detail::Block{line_no, {}};
      continue;
    }
    if (line == "}") {
      if (!block) throw ParseError(line_no, "'}' without an open layer block");
      LayerSpec spec = detail::build_layer(*block, line_no);
      if (auto it = names.find(spec.name); it != names.end()) {
        throw ParseError(block->entries.at("name").line,
                         "duplicate layer name '" + spec.name + "' (first defined on line " +
                             std::to_string(it->second) + ")");
      }
      names.emplace(spec.name, block->entries.at("name").line);
      cfg.layers.push_back(std::move(spec));
      block.reset();
      continue;
    }

    const std::size_t colon = line.find(':');
    if (colon == std::string_view::npos) {
      throw ParseError(line_no, "expected 'key: value', 'layer {' or '}'");
    }
    const std::string key(detail::trim(line.substr(0, colon)));
    std::string value(detail::trim(line.substr(colon + 1)));
    if (!detail::is_key(key)) throw ParseError(line_no, "invalid key '" + key + "'");
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') {
      value = value.substr(1, value.size() - 2);
      if (value.find('"') != std::string::npos) {
        throw ParseError(line_no, key + ": stray quote in value");
      }
    } else if (value.find('"') != std::string::npos) {
      throw ParseError(line_no, key + ": unbalanced quote in value");
    } else if (value.empty()) {
      throw ParseError(line_no, key + ": missing value");
    }
    const Entry entry{value, line_no};

    if (block) {
      if (!detail::known_layer_key(key)) throw ParseError(line_no, "unknown layer key '" + key + "'");
      if (!block->entries.emplace(key, entry).second) {
        throw ParseError(line_no, "duplicate key '" + key + "' in layer block");
      }
      continue;
    }

    if (!top_keys.insert(key).second) throw ParseError(line_no, "duplicate key '" + key + "'");
    if (key == "allocated_ram") {
      cfg.allocated_ram_mb = detail::parse_uint(entry, key);
    } else if (key == "execution_mode") {
      if (value == "sequential") {
        cfg.execution_mode = ExecutionMode::sequential;
      } else if (value == "parallel") {
        cfg.execution_mode = ExecutionMode::parallel;
      } else {
        throw ParseError(line_no, "execution_mode: expected sequential or parallel, got '" +
                                      value + "'");
      }
    } else if (key == "auto_tuning") {
      if (value == "on") {
        cfg.auto_tuning = true;
      } else if (value == "off") {
        cfg.auto_tuning = false;
      } else {
        throw ParseError(line_no, "auto_tuning: expected on or off, got '" + value + "'");
      }
    } else if (key == "input_shape") {
      ImageShape shape{};
      std::size_t filled = 0;
      std::string_view rest = value;
      while (!(rest = detail::trim(rest)).empty()) {
        const std::size_t sp = rest.find_first_of(" \t");
        const Entry part{std::string(rest.substr(0, sp)), line_no};
        if (filled == 3) throw ParseError(line_no, "input_shape: expected 3 values (c h w)");
        shape[filled++] = detail::parse_positive(part, key);
        rest = sp == std::string_view::npos ? std::string_view{} : rest.substr(sp);
      }
      if (filled != 3) throw ParseError(line_no, "input_shape: expected 3 values (c h w)");
      cfg.input_shape = shape;
    } else {
      throw ParseError(line_no, "unknown key '" + key + "'");
    }
  }

  if (block) throw ParseError(block->open_line, "layer block is never closed");
  if (cfg.layers.empty()) throw ParseError(std::max<std::size_t>(1, line_no), "no layers defined");
  return cfg;
}

namespace detail {

inline std::string format_float(float v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

}  // namespace detail

/// Canonical NetFile text; parse_netfile(to_netfile_text(cfg)) == cfg.
inline std::string to_netfile_text(const NetConfig& cfg) {
  std::string out;
  auto kv = [&out](std::string_view indent, std::string_view key, const std::string& value) {
    out.append(indent).append(key).append(": ").append(value).append("\n");
  };
  kv("", "allocated_ram", std::to_string(cfg.allocated_ram_mb));
  kv("", "execution_mode", to_string(cfg.execution_mode));
  kv("", "auto_tuning", cfg.auto_tuning ? "on" : "off");
  if (cfg.input_shape) {
    const auto& s = *cfg.input_shape;
    kv("", "input_shape",
       std::to_string(s[0]) + " " + std::to_string(s[1]) + " " + std::to_string(s[2]));
  }
  for (const LayerSpec& l : cfg.layers) {
    const std::string_view in = "  ";
    out += "\nlayer {\n";
    kv(in, "type", to_string(l.kind));
    kv(in, "name", l.name);
    if (l.params_file) kv(in, "params_file", "\"" + *l.params_file + "\"");
    if (l.num_output) kv(in, "num_output", std::to_string(*l.num_output));
    switch (l.kind) {
      case LayerKind::conv:
        if (l.kernel_h != 0) {
          kv(in, "kernel_h", std::to_string(l.kernel_h));
          kv(in, "kernel_w", std::to_string(l.kernel_w));
        }
        kv(in, "pad", std::to_string(l.pad));
        kv(in, "stride", std::to_string(l.stride));
        kv(in, "group", std::to_string(l.group));
        break;
      case LayerKind::pool:
        kv(in, "kernel_h", std::to_string(l.kernel_h));
        kv(in, "kernel_w", std::to_string(l.kernel_w));
        kv(in, "stride", std::to_string(l.stride));
        kv(in, "pool_mode", l.pool_mode == PoolMode::max ? "max" : "mean");
        break;
      case LayerKind::lrn:
        kv(in, "lrn_n", std::to_string(l.lrn_n));
        kv(in, "lrn_alpha", detail::format_float(l.lrn_alpha));
        kv(in, "lrn_beta", detail::format_float(l.lrn_beta));
        kv(in, "lrn_k", detail::format_float(l.lrn_k));
        break;
      default:
        break;
    }
    if (l.kind == LayerKind::conv || l.kind == LayerKind::fc || l.kind == LayerKind::pool) {
      kv(in, "fused_relu", l.fused_relu ? "true" : "false");
    }
    out += "}\n";
  }
  return out;
}

/// Weight shape of each conv/fc layer, keyed by layer name.
using WeightShapes = std::map<std::string, Shape4, std::less<>>;

/// Weight shapes implied by the NetFile's own num_output / kernel_h / kernel_w
/// declarations, propagated from `input`. Layers without a declaration are omitted.
WeightShapes declared_weight_shapes(const NetConfig& cfg, Shape4 input);

/// Output shape of every layer for `input`; throws ShapeError naming the layer.
///
/// Weight shapes come from `weights`; a conv/fc layer missing there falls back
/// to its declaration in the NetFile. When both exist they must agree.
inline std::vector<Shape4> validate_shapes(const NetConfig& cfg, Shape4 input,
                                           const WeightShapes& weights = {}) {
  std::vector<Shape4> shapes;
  shapes.reserve(cfg.layers.size());
  Shape4 cur = input;
  for (const LayerSpec& l : cfg.layers) {
    const std::string where = "layer '" + l.name + "': ";
    try {
      if (has_params(l.kind)) {
        std::optional<Shape4> declared;
        if (l.num_output) {
          if (l.kind == LayerKind::fc) {
            declared = Shape4{*l.num_output, cur.per_image(), 1, 1};
          } else if (l.kernel_h != 0 && l.group != 0 && cur.c % l.group == 0) {
            declared = Shape4{*l.num_output, cur.c / l.group, l.kernel_h, l.kernel_w};
          }
        }
        std::optional<Shape4> ws;
        if (auto it = weights.find(l.name); it != weights.end()) ws = it->second;
        if (ws && declared && *ws != *declared) {
          throw ShapeError("parameter file shape " + ws->str() +
                           " disagrees with the NetFile declaration " + declared->str());
        }
        if (!ws) ws = declared;
        if (!ws) throw ShapeError("no weight shape available (parameter file or num_output)");

        if (l.kind == LayerKind::conv) {
          if (cur.c % l.group != 0 || ws->n % l.group != 0) {
            throw ShapeError("group " + std::to_string(l.group) +
                             " does not divide input channels " + std::to_string(cur.c) +
                             " and kernel count " + std::to_string(ws->n));
          }
          if (ws->c * l.group != cur.c) {
            throw ShapeError("weight " + ws->str() + " expects " +
                             std::to_string(ws->c * l.group) + " input channels, got " +
                             std::to_string(cur.c));
          }
          cur = conv_output_shape(cur, ws->n, ws->h, ws->w, l.pad, l.stride);
        } else {
          if (ws->c * ws->h * ws->w != cur.per_image()) {
            throw ShapeError("weight " + ws->str() + " expects " +
                             std::to_string(ws->c * ws->h * ws->w) + " input features, got " +
                             std::to_string(cur.per_image()));
          }
          cur = Shape4{cur.n, ws->n, 1, 1};
        }
      } else if (l.kind == LayerKind::pool) {
        cur = pool_output_shape(cur, l.kernel_h, l.kernel_w, l.stride);
      }
    } catch (const ShapeError& e) {
      throw ShapeError(where + e.what());
    }
    shapes.push_back(cur);
  }
  return shapes;
}

inline WeightShapes declared_weight_shapes(const NetConfig& cfg, Shape4 input) {
  WeightShapes out;
  Shape4 cur = input;
  for (std::size_t i = 0; i < cfg.layers.size(); ++i) {
    const LayerSpec& l = cfg.layers[i];
    if (has_params(l.kind) && l.num_output) {
      if (l.kind == LayerKind::fc) {
        out[l.name] = Shape4{*l.num_output, cur.per_image(), 1, 1};
      } else if (l.kernel_h != 0 && l.group != 0 && cur.c % l.group == 0) {
        out[l.name] = Shape4{*l.num_output, cur.c / l.group, l.kernel_h, l.kernel_w};
      }
    }
    // Propagate through this single layer using what is known so far.
    NetConfig one;
    one.layers = {l};
    cur = validate_shapes(one, cur, out).back();
  }
  return out;
}

}  // namespace cnnd
