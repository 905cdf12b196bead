// Copyright 2026 The cnnd Authors
// SPDX-License-Identifier: Apache-2.0

// Persisted tuning profile: a small key=value text file
//
//   rows_per_item=4
//   vec_width=8
//   fc_outputs_per_item=4
//   host=build-box threads=8

#pragma once

#include <charconv>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>

#include "cnnd/errors.hpp"
#include "cnnd/exec.hpp"

namespace cnnd {

inline constexpr const char* kProfileFileName = "tuning.profile";

struct LoadedProfile {
  TuningProfile profile{};
  bool tuned = false;  // false when no profile file existed
  std::string host;
};

inline void save_profile(const std::filesystem::path& path, const TuningProfile& p,
                         const std::string& host) {
  if (!in_grid(p)) throw Error("profile " + to_string(p) + " is not in the candidate grid");
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot write '" + path.string() + "'");
  f << "rows_per_item=" << p.rows_per_item << "\n"
    << "vec_width=" << p.vec_width << "\n"
    << "fc_outputs_per_item=" << p.fc_outputs_per_item << "\n"
    << "host=" << host << "\n";
  if (!f) throw IoError("cannot write '" + path.string() + "'");
}

/// Missing file yields the default profile with tuned == false. A file that
/// exists but is malformed or off-grid throws ParseError.
inline LoadedProfile load_profile(const std::filesystem::path& path) {
  LoadedProfile out;
  if (!std::filesystem::exists(path)) return out;
  std::ifstream f(path);
  if (!f) throw IoError("cannot open '" + path.string() + "'");

  bool seen[3] = {false, false, false};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError(line_no, "expected key=value");
    const std::string key = line.substr(0, eq);
    const std::string value = line.substr(eq + 1);
    if (key == "host") {
      out.host = value;
      continue;
    }
    std::size_t v = 0;
    auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
    if (ec != std::errc() || ptr != value.data() + value.size() || value.empty()) {
      throw ParseError(line_no, key + ": expected an integer, got '" + value + "'");
    }
    int slot = -1;
    if (key == "rows_per_item") {
      out.profile.rows_per_item = v;
      slot = 0;
    } else if (key == "vec_width") {
      out.profile.vec_width = v;
      slot = 1;
    } else if (key == "fc_outputs_per_item") {
      out.profile.fc_outputs_per_item = v;
      slot = 2;
    } else {
      throw ParseError(line_no, "unknown key '" + key + "'");
    }
    if (seen[slot]) throw ParseError(line_no, "duplicate key '" + key + "'");
    seen[slot] = true;
  }
  if (!(seen[0] && seen[1] && seen[2])) {
    throw ParseError(line_no + 1, "profile needs rows_per_item, vec_width and fc_outputs_per_item");
  }
  if (!in_grid(out.profile)) {
    throw ParseError(line_no, "profile " + to_string(out.profile) + " is not in the candidate grid");
  }
  out.tuned = true;
  return out;
}

}  // namespace cnnd
