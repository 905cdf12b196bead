// Copyright 2026 The cnnd Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <vector>

#include "cnnd/engine.hpp"

namespace cnnd {

struct BenchStats {
  std::vector<std::int64_t> runs_ns;  // one entry per timed repetition
  std::size_t batch = 1;

  double mean_ns() const {
    if (runs_ns.empty()) return 0.0;
    return static_cast<double>(std::accumulate(runs_ns.begin(), runs_ns.end(), std::int64_t{0})) /
           static_cast<double>(runs_ns.size());
  }
  double median_ns() const {
    if (runs_ns.empty()) return 0.0;
    std::vector<std::int64_t> s = runs_ns;
    std::sort(s.begin(), s.end());
    const std::size_t m = s.size() / 2;
    return s.size() % 2 ? static_cast<double>(s[m])
                        : 0.5 * static_cast<double>(s[m - 1] + s[m]);
  }
  double mean_per_image_ns() const { return mean_ns() / static_cast<double>(batch); }
  double median_per_image_ns() const { return median_ns() / static_cast<double>(batch); }
};

/// Times `reps` forward passes after one untimed warm-up. A pass's time is
/// the sum of its layers' compute times; parameter fetching is added only
/// when include_io is set.
inline BenchStats benchmark_network(const Network& net, const Tensor& batch, int reps,
                                    ComputeOptions opt = {}, bool include_io = false) {
  BenchStats stats;
  stats.batch = batch.shape().n;
  opt.timings = nullptr;
  (void)compute(net, batch, opt);
  for (int r = 0; r < reps; ++r) {
    std::vector<LayerTiming> timings;
    opt.timings = &timings;
    (void)compute(net, batch, opt);
    std::int64_t total = 0;
    for (const LayerTiming& t : timings) total += t.compute_ns + (include_io ? t.load_ns : 0);
    stats.runs_ns.push_back(total);
  }
  return stats;
}

}  // namespace cnnd
