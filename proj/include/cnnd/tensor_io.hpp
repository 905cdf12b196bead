// Copyright 2026 The cnnd Authors
// SPDX-License-Identifier: Apache-2.0

// Tensor file: four little-endian uint32 (n, c, h, w) followed by
// n*c*h*w little-endian float32 values. Nothing else.

#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>
#include <string>
#include <vector>

#include "cnnd/errors.hpp"
#include "cnnd/tensor.hpp"

namespace cnnd {

namespace detail {

inline void put_u32(std::vector<char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

inline std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

}  // namespace detail

inline std::vector<char> encode_tensor(const Tensor& t) {
  const Shape4 s = t.shape();
  for (std::size_t d : {s.n, s.c, s.h, s.w}) {
    if (d > std::numeric_limits<std::uint32_t>::max()) {
      throw ShapeError("tensor " + s.str() + " does not fit the uint32 header");
    }
  }
  std::vector<char> out;
  out.reserve(16 + 4 * t.size());
  for (std::size_t d : {s.n, s.c, s.h, s.w}) detail::put_u32(out, static_cast<std::uint32_t>(d));
  for (float v : t.data()) detail::put_u32(out, std::bit_cast<std::uint32_t>(v));
  return out;
}

inline Tensor decode_tensor(const std::vector<char>& bytes) {
  if (bytes.size() < 16) {
    throw FormatError("tensor file has " + std::to_string(bytes.size()) +
                      " bytes, shorter than its 16-byte header");
  }
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  const Shape4 s{detail::get_u32(p), detail::get_u32(p + 4), detail::get_u32(p + 8),
                 detail::get_u32(p + 12)};
  const std::size_t count = s.count();
  if (count > (bytes.size() - 16) / 4 || bytes.size() != 16 + 4 * count) {
    throw FormatError("tensor file declares " + s.str() + " (" + std::to_string(count) +
                      " values) but carries " + std::to_string(bytes.size() - 16) +
                      " payload bytes");
  }
  std::vector<float> data(count);
  for (std::size_t i = 0; i < count; ++i) {
    data[i] = std::bit_cast<float>(detail::get_u32(p + 16 + 4 * i));
  }
  return Tensor(s, std::move(data));
}

inline void write_tensor_file(const std::filesystem::path& path, const Tensor& t) {
  const auto bytes = encode_tensor(t);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write '" + path.string() + "'");
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("cannot write '" + path.string() + "'");
}

inline Tensor read_tensor_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path.string() + "'");
  std::vector<char> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  try {
    return decode_tensor(bytes);
  } catch (const FormatError& e) {
    throw FormatError("'" + path.string() + "': " + e.what());
  }
}

}  // namespace cnnd
