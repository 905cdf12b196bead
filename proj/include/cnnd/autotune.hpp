// Copyright 2026 The cnnd Authors
// SPDX-License-Identifier: Apache-2.0

// First-run auto-tuner: time every candidate TuningProfile on the conv and
// fc layers of a network and keep the fastest.

#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <unistd.h>

#include "cnnd/engine.hpp"
#include "cnnd/exec.hpp"

namespace cnnd {

/// Monotonic time source in nanoseconds. Injectable so selection can be tested.
using Clock = std::function<std::int64_t()>;

inline Clock steady_clock_ns() {
  return [] {
    return std::chrono::duration_cast<std::chrono::nanoseconds>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
  };
}

struct CandidateTiming {
  TuningProfile profile;
  std::int64_t median_ns = 0;
};

struct TuneReport {
  std::vector<CandidateTiming> timings;  // grid order
  TuningProfile chosen;
  std::string host;
};

inline std::string host_descriptor() {
  char name[256] = {};
  if (gethostname(name, sizeof name - 1) != 0) name[0] = '\0';
  return std::string(name[0] ? name : "unknown") +
         " threads=" + std::to_string(std::max(1u, std::thread::hardware_concurrency()));
}

/// Median of an odd-length sample.
inline std::int64_t median(std::vector<std::int64_t> samples) {
  if (samples.empty()) throw std::invalid_argument("median of an empty sample");
  const auto mid = samples.begin() + static_cast<std::ptrdiff_t>(samples.size() / 2);
  std::nth_element(samples.begin(), mid, samples.end());
  return *mid;
}

/// Profile with the smallest median; the earliest one wins ties.
inline TuningProfile select_profile(std::span<const CandidateTiming> timings) {
  if (timings.empty()) throw std::invalid_argument("select_profile: no timings");
  const CandidateTiming* best = &timings.front();
  for (const CandidateTiming& t : timings) {
    if (t.median_ns < best->median_ns) best = &t;
  }
  return best->profile;
}

/// Times every candidate profile on the network's conv and fc layers.
///
/// The sample is pushed through the whole network once to capture each
/// conv/fc layer's input; parameters are fetched up front so loading is never
/// timed. Each candidate gets one warm-up pass and `repetitions` timed
/// passes in parallel mode; a pass brackets all conv/fc layers with two
/// clock reads.
inline TuneReport tune(const Network& net, const Tensor& sample, int repetitions,
                       const Clock& clock = steady_clock_ns(), ThreadPool* pool = nullptr) {
  if (repetitions < 3 || repetitions % 2 == 0) {
    throw std::invalid_argument("tune: repetitions must be odd and >= 3, got " +
                                std::to_string(repetitions));
  }

  struct Stage {
    const LayerSpec* layer;
    std::shared_ptr<const LayerParams> params;
    Tensor input;
  };
  std::vector<Stage> stages;
  {
    ComputeOptions capture;
    capture.mode = ExecutionMode::parallel;
    capture.pool = pool;
    const ExecMode mode = net.exec_mode(capture);
    Tensor cur = sample;
    for (const LayerSpec& l : net.layers()) {
      std::shared_ptr<const LayerParams> params;
      if (has_params(l.kind)) {
        params = net.params(l.name);
        stages.push_back({&l, params, cur});
      }
      cur = run_layer(l, cur, params.get(), mode);
    }
  }

  TuneReport report;
  report.host = host_descriptor();
  for (const TuningProfile& candidate : candidate_profiles()) {
    const ExecMode mode = ExecMode::parallel(candidate, pool);
    auto pass = [&] {
      for (const Stage& s : stages) (void)run_layer(*s.layer, s.input, s.params.get(), mode);
    };
    pass();
    std::vector<std::int64_t> samples;
    samples.reserve(static_cast<std::size_t>(repetitions));
    for (int r = 0; r < repetitions; ++r) {
      const std::int64_t t0 = clock();
      pass();
      const std::int64_t t1 = clock();
      samples.push_back(t1 - t0);
    }
    report.timings.push_back({candidate, median(std::move(samples))});
  }
  report.chosen = select_profile(report.timings);
  return report;
}

}  // namespace cnnd
