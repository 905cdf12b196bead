// Copyright 2026 The cnnd Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "cnnd/thread_pool.hpp"

namespace cnnd {

enum class ExecutionMode { sequential, parallel };

inline const char* to_string(ExecutionMode m) {
  return m == ExecutionMode::sequential ? "sequential" : "parallel";
}

/// Granularity knobs of the parallel kernels.
///
/// None of them changes the order in which any output element is
/// accumulated, so every profile yields bitwise-identical results.
struct TuningProfile {
  std::size_t rows_per_item = 1;        // conv output rows per work item
  std::size_t vec_width = 4;            // dot-product chunk length (conv, fc)
  std::size_t fc_outputs_per_item = 1;  // fc outputs per work item

  friend bool operator==(const TuningProfile&, const TuningProfile&) = default;
};

inline constexpr std::array<std::size_t, 4> kRowsPerItemGrid{1, 2, 4, 8};
inline constexpr std::array<std::size_t, 3> kVecWidthGrid{4, 8, 16};
inline constexpr std::array<std::size_t, 3> kFcOutputsGrid{1, 4, 16};

inline bool in_grid(const TuningProfile& p) {
  auto has = [](const auto& grid, std::size_t v) {
    for (std::size_t g : grid) {
      if (g == v) return true;
    }
    return false;
  };
  return has(kRowsPerItemGrid, p.rows_per_item) && has(kVecWidthGrid, p.vec_width) &&
         has(kFcOutputsGrid, p.fc_outputs_per_item);
}

/// Full cartesian grid, rows_per_item outermost, fc_outputs_per_item innermost.
inline std::vector<TuningProfile> candidate_profiles() {
  std::vector<TuningProfile> out;
  for (std::size_t r : kRowsPerItemGrid)
    for (std::size_t v : kVecWidthGrid)
      for (std::size_t f : kFcOutputsGrid) out.push_back({r, v, f});
  return out;
}

inline std::string to_string(const TuningProfile& p) {
  return "(" + std::to_string(p.rows_per_item) + "," + std::to_string(p.vec_width) +
         "," + std::to_string(p.fc_outputs_per_item) + ")";
}

/// How a kernel runs: on the calling thread, or split across a pool.
struct ExecMode {
  ExecutionMode mode = ExecutionMode::sequential;
  TuningProfile profile{};
  ThreadPool* pool = nullptr;  // parallel only; nullptr selects default_pool()

  static ExecMode sequential() { return {}; }
  static ExecMode parallel(TuningProfile profile = {}, ThreadPool* pool = nullptr) {
    return {ExecutionMode::parallel, profile, pool};
  }

  /// Runs fn(0..count-1). Items must touch disjoint outputs.
  void for_each(std::size_t count, const std::function<void(std::size_t)>& fn) const {
    if (mode == ExecutionMode::sequential) {
      for (std::size_t i = 0; i < count; ++i) fn(i);
    } else {
      (pool ? *pool : default_pool()).parallel_for(count, fn);
    }
  }
};

}  // namespace cnnd
