// Copyright 2026 The cnnd Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <filesystem>
#include <random>
#include <thread>

#include "cases.hpp"
#include "cnnd/model_store.hpp"

namespace cnnd {
namespace {

namespace fs = std::filesystem;

constexpr std::size_t kMiB = std::size_t{1} << 20;

std::vector<std::string> names(const CachePlan& p) { return {p.resident.begin(), p.resident.end()}; }

using cases::TempDir;

TEST(ParamFileTest, NameFollowsLayer) {
  EXPECT_EQ(param_file_name("conv1"), "model_param_conv1.msg");
}

TEST(ParamFileTest, EncodeDecodeRoundTripsBitwise) {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 30; ++i) {
    const Shape4 s{cases::pick(rng, 1, 8), cases::pick(rng, 1, 5), cases::pick(rng, 1, 4),
                   cases::pick(rng, 1, 4)};
    const LayerParams p = random_params(s, rng());
    const LayerParams back = decode_layer_params(encode_layer_params(p), s);
    EXPECT_TRUE(cases::same_bits(back.weight, p.weight));
    EXPECT_EQ(back.bias, p.bias);
  }
}

TEST(ParamFileTest, FileRoundTripAndShapeOnlyRead) {
  TempDir dir;
  const LayerParams p = random_params({4, 3, 3, 3}, 9);
  const fs::path f = dir.path() / param_file_name("c");
  write_layer_params(f, p);
  EXPECT_EQ(read_param_shape(f), (Shape4{4, 3, 3, 3}));
  EXPECT_EQ(load_layer_params(f, Shape4{4, 3, 3, 3}), p);
}

TEST(ParamFileTest, TruncatedFileIsFormatError) {
  const auto bytes = encode_layer_params(random_params({2, 2, 2, 2}, 3));
  for (std::size_t cut : {std::size_t{0}, std::size_t{1}, bytes.size() / 2, bytes.size() - 1}) {
    EXPECT_THROW(decode_layer_params({bytes.begin(), bytes.begin() + static_cast<long>(cut)}),
                 FormatError)
        << cut;
  }
}

TEST(ParamFileTest, WrongElementCountIsShapeErrorWithBothCounts) {
  // Hand-built map whose shape claims 4*3*3*3 = 108 weights but carries 100.
  detail::json j;
  j["shape"] = {4, 3, 3, 3};
  j["weight"] = std::vector<float>(100, 0.5f);
  j["bias"] = std::vector<float>(4, 0.0f);
  try {
    decode_layer_params(detail::json::to_msgpack(j));
    FAIL();
  } catch (const ShapeError& e) {
    const std::string what = e.what();
    EXPECT_NE(what.find("100"), std::string::npos) << what;
    EXPECT_NE(what.find("108"), std::string::npos) << what;
  }
}

TEST(ParamFileTest, ExpectedShapeMismatchIsShapeError) {
  const auto bytes = encode_layer_params(random_params({2, 1, 1, 1}, 2));
  EXPECT_THROW(decode_layer_params(bytes, Shape4{3, 1, 1, 1}), ShapeError);
}

TEST(ParamFileTest, MissingFieldsAndWrongTypesAreFormatErrors) {
  detail::json j;
  j["shape"] = {1, 1, 1, 1};
  j["weight"] = {1.0};
  EXPECT_THROW(decode_layer_params(detail::json::to_msgpack(j)), FormatError);
  j["bias"] = "oops";
  EXPECT_THROW(decode_layer_params(detail::json::to_msgpack(j)), FormatError);
}

TEST(ParamFileTest, NonFiniteValuesAreNotWritten) {
  LayerParams p = random_params({1, 1, 1, 2}, 1);
  p.weight.data()[0] = std::numeric_limits<float>::quiet_NaN();
  EXPECT_THROW(encode_layer_params(p), Error);
}

TEST(CachePlanTest, SkipsTooLargeAndKeepsSmaller) {
  const CachePlan p =
      plan_cache({{"A", 100 * kMiB}, {"B", 50 * kMiB}, {"C", 30 * kMiB}}, 140);
  EXPECT_EQ(names(p), (std::vector<std::string>{"A", "C"}));
  EXPECT_EQ(p.resident_bytes, 130 * kMiB);
}

TEST(CachePlanTest, ZeroBudgetCachesNothing) {
  EXPECT_TRUE(plan_cache({{"A", 1}, {"B", 2}}, 0).resident.empty());
}

TEST(CachePlanTest, LargeBudgetCachesEverything) {
  EXPECT_EQ(names(plan_cache({{"A", 100 * kMiB}, {"B", 50 * kMiB}}, 1000)),
            (std::vector<std::string>{"A", "B"}));
}

TEST(CachePlanTest, EqualSizesPreferEarlierLayer) {
  EXPECT_EQ(names(plan_cache({{"z", kMiB}, {"a", kMiB}}, 1)), (std::vector<std::string>{"z"}));
}

std::vector<std::pair<std::string, std::size_t>> random_sizes(std::mt19937_64& rng,
                                                              std::size_t count,
                                                              std::size_t max_bytes) {
  std::vector<std::pair<std::string, std::size_t>> sizes;
  for (std::size_t i = 0; i < count; ++i) {
    // Coarse sizes make ties common.
    sizes.emplace_back("L" + std::to_string(i), cases::pick(rng, 1, 6) * max_bytes / 6);
  }
  return sizes;
}

TEST(CachePlanTest, AgreesWithReferenceAndRespectsBudget) {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto sizes = random_sizes(rng, cases::pick(rng, 1, 12), 64 * kMiB);
    const std::size_t budget = cases::pick(rng, 0, 400);
    const CachePlan p = plan_cache(sizes, budget);
    ASSERT_EQ(names(p), oracle::greedy_plan(sizes, budget * kMiB));
    ASSERT_LE(p.resident_bytes, budget * kMiB);
  }
}

// Networks of 0-8 layers, every whole-MiB budget from 0 past the total size.
TEST(CachePlanTest, ExhaustiveSmallNetworks) {
  std::mt19937_64 rng(4);
  for (std::size_t count = 0; count <= 8; ++count) {
    for (int shape = 0; shape < 20; ++shape) {
      const auto sizes = random_sizes(rng, count, 6 * kMiB);
      for (std::size_t budget = 0; budget <= 6 * count + 1; ++budget) {
        ASSERT_EQ(names(plan_cache(sizes, budget)), oracle::greedy_plan(sizes, budget * kMiB));
      }
    }
  }
}

TEST(CachePlanTest, ResidentBytesMonotoneInBudget) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 200; ++trial) {
    const auto sizes = random_sizes(rng, cases::pick(rng, 1, 10), 20 * kMiB);
    std::size_t prev = 0;
    std::size_t total = 0;
    for (const auto& [n, b] : sizes) total += b;
    for (std::size_t budget = 0; budget <= 220; budget += 3) {
      const CachePlan p = plan_cache(sizes, budget);
      ASSERT_GE(p.resident_bytes, prev);
      prev = p.resident_bytes;
      if (budget * kMiB >= total) ASSERT_EQ(p.resident.size(), sizes.size());
    }
  }
}

class CountingSource : public ParamSource {
 public:
  mutable std::atomic<int> reads{0};
  LayerParams read(const std::string&) const override {
    ++reads;
    return random_params({1, 1, 1, 1}, 1);
  }
  Shape4 weight_shape(const std::string&) const override { return {1, 1, 1, 1}; }
};

TEST(ParamCacheTest, ResidentLayersAreReadOnce) {
  auto src = std::make_shared<CountingSource>();
  CachePlan plan;
  plan.resident.insert("a");
  ParamCache cache(src, plan, {"a", "b"});
  for (int run = 1; run <= 3; ++run) {
    cache.fetch("a");
    cache.fetch("b");
    EXPECT_EQ(cache.reads("a"), 1u);
    EXPECT_EQ(cache.reads("b"), static_cast<std::size_t>(run));
  }
}

TEST(ParamCacheTest, ConcurrentFirstFetchReadsOnce) {
  auto src = std::make_shared<CountingSource>();
  CachePlan plan;
  plan.resident.insert("a");
  ParamCache cache(src, plan, {"a"});
  std::vector<std::thread> threads;
  for (int i = 0; i < 8; ++i) threads.emplace_back([&] { cache.fetch("a"); });
  for (auto& t : threads) t.join();
  EXPECT_EQ(src->reads.load(), 1);
}

TEST(ParamCacheTest, MissingFileErrorNamesLayer) {
  TempDir dir;
  NetConfig cfg;
  LayerSpec l;
  l.kind = LayerKind::fc;
  l.name = "ip7";
  l.params_file = "model_param_ip7.msg";
  cfg.layers.push_back(l);
  FileParamSource src(dir.path(), cfg);
  try {
    src.read("ip7");
    FAIL();
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("ip7"), std::string::npos);
  }
}

}  // namespace
}  // namespace cnnd
