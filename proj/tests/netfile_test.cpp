// Copyright 2026 The cnnd Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <random>
#include <string>
#include <vector>

#include "cases.hpp"
#include "cnnd/netfile.hpp"

namespace cnnd {
namespace {

std::vector<LayerKind> kinds(const NetConfig& cfg) {
  std::vector<LayerKind> out;
  for (const auto& l : cfg.layers) out.push_back(l.kind);
  return out;
}

TEST(NetfileTest, RuntimeParametersAndOneConvLayer) {
  const NetConfig cfg = parse_netfile(R"(
allocated_ram: 120
execution_mode: parallel
auto_tuning: off

layer {
  type: conv
  name: conv1
  params_file: "model_param_conv1.msg"
  pad: 0
  stride: 4
}
)");
  EXPECT_EQ(cfg.allocated_ram_mb, 120u);
  EXPECT_EQ(cfg.execution_mode, ExecutionMode::parallel);
  EXPECT_FALSE(cfg.auto_tuning);
  ASSERT_EQ(cfg.layers.size(), 1u);
  EXPECT_EQ(cfg.layers[0].kind, LayerKind::conv);
  EXPECT_EQ(cfg.layers[0].name, "conv1");
  EXPECT_EQ(cfg.layers[0].params_file, "model_param_conv1.msg");
  EXPECT_EQ(cfg.layers[0].stride, 4u);
  EXPECT_EQ(cfg.layers[0].group, 1u);
  EXPECT_FALSE(cfg.layers[0].fused_relu);
}

TEST(NetfileTest, EmptyInputHasNoLayers) {
  try {
    parse_netfile("");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("no layers defined"), std::string::npos);
    EXPECT_EQ(e.line(), 1u);
  }
}

TEST(NetfileTest, DefaultsWhenRuntimeParametersAreMissing) {
  const NetConfig cfg = parse_netfile("layer {\n type: softmax\n name: prob\n}\n");
  EXPECT_EQ(cfg.allocated_ram_mb, 0u);
  EXPECT_EQ(cfg.execution_mode, ExecutionMode::parallel);
  EXPECT_FALSE(cfg.auto_tuning);
}

TEST(NetfileTest, CommentsAndWhitespaceAreInsignificant) {
  const NetConfig a = parse_netfile("layer{\n\ttype:relu # act\n   name :  r1\n}");
  const NetConfig b = parse_netfile("# header\n\nlayer {\n  type: relu\n  name: r1\n}\n");
  EXPECT_EQ(a, b);
}

TEST(NetfileTest, GoldenAlexNetLayerSequence) {
  const NetConfig cfg = cases::load_golden("alexnet.netfile");
  using K = LayerKind;
  EXPECT_EQ(kinds(cfg), (std::vector<K>{K::conv, K::lrn, K::pool, K::conv, K::lrn, K::pool, K::conv,
                                        K::conv, K::conv, K::pool, K::fc, K::fc, K::fc}));
  EXPECT_EQ(cfg.allocated_ram_mb, 120u);
  EXPECT_TRUE(cfg.auto_tuning);
  const std::vector<bool> relu{true, false, false, true, false, false, true,
                               true, true, false, true, true, false};
  for (std::size_t i = 0; i < relu.size(); ++i) EXPECT_EQ(cfg.layers[i].fused_relu, relu[i]) << i;
}

TEST(NetfileTest, GoldenShapesPropagate) {
  const NetConfig lenet = cases::load_golden("lenet.netfile");
  EXPECT_EQ(lenet.layers.size(), 6u);
  EXPECT_EQ(validate_shapes(lenet, {1, 1, 28, 28}, declared_weight_shapes(lenet, {1, 1, 28, 28})).back(),
            (Shape4{1, 10, 1, 1}));

  const NetConfig cifar = cases::load_golden("cifar10_quick.netfile");
  EXPECT_EQ(cifar.layers.size(), 8u);
  EXPECT_EQ(validate_shapes(cifar, {1, 3, 32, 32}).back(), (Shape4{1, 10, 1, 1}));

  const NetConfig alex = cases::load_golden("alexnet.netfile");
  const auto shapes = validate_shapes(alex, {1, 3, 227, 227});
  EXPECT_EQ(shapes[0], (Shape4{1, 96, 55, 55}));
  EXPECT_EQ(shapes[2], (Shape4{1, 96, 27, 27}));
  EXPECT_EQ(shapes[5], (Shape4{1, 256, 13, 13}));
  EXPECT_EQ(shapes[9], (Shape4{1, 256, 6, 6}));
  EXPECT_EQ(shapes.back(), (Shape4{1, 1000, 1, 1}));
}

// Hand propagation of LeNet: 28 -conv5-> 24 -pool2-> 12 -conv5-> 8 -pool2-> 4,
// 50*4*4 = 800 features -> 500 -> 10.
TEST(NetfileTest, LenetShapesFromParameterFileShapes) {
  const NetConfig cfg = parse_netfile(R"(
layer {
  type: conv
  name: conv1
  params_file: "c1.msg"
}
layer {
  type: pool
  name: pool1
  pool_mode: max
  kernel_h: 2
  kernel_w: 2
  stride: 2
}
layer {
  type: conv
  name: conv2
  params_file: "c2.msg"
}
layer {
  type: pool
  name: pool2
  pool_mode: max
  kernel_h: 2
  kernel_w: 2
  stride: 2
}
layer {
  type: fc
  name: ip1
  params_file: "i1.msg"
  fused_relu: true
}
layer {
  type: fc
  name: ip2
  params_file: "i2.msg"
}
)");
  const WeightShapes w{{"conv1", {20, 1, 5, 5}},
                       {"conv2", {50, 20, 5, 5}},
                       {"ip1", {500, 800, 1, 1}},
                       {"ip2", {10, 500, 1, 1}}};
  const auto shapes = validate_shapes(cfg, {1, 1, 28, 28}, w);
  const std::vector<Shape4> want{{1, 20, 24, 24}, {1, 20, 12, 12}, {1, 50, 8, 8},
                                 {1, 50, 4, 4},   {1, 500, 1, 1},  {1, 10, 1, 1}};
  EXPECT_EQ(shapes, want);
}

TEST(NetfileTest, ChannelMismatchIsAShapeErrorNamingTheLayer) {
  const NetConfig cfg = parse_netfile("layer {\n type: conv\n name: c1\n params_file: \"x\"\n}\n");
  try {
    validate_shapes(cfg, {1, 3, 8, 8}, {{"c1", {4, 2, 3, 3}}});
    FAIL();
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("'c1'"), std::string::npos) << e.what();
  }
}

TEST(NetfileTest, DeclarationMustAgreeWithParameterFile) {
  const NetConfig cfg = parse_netfile(
      "layer {\n type: fc\n name: f\n params_file: \"x\"\n num_output: 3\n}\n");
  EXPECT_NO_THROW(validate_shapes(cfg, {1, 2, 1, 1}, {{"f", {3, 2, 1, 1}}}));
  EXPECT_THROW(validate_shapes(cfg, {1, 2, 1, 1}, {{"f", {4, 2, 1, 1}}}), ShapeError);
}

TEST(NetfileTest, IdentityNetKeepsShape) {
  const NetConfig cfg = parse_netfile("layer {\n type: relu\n name: r\n}\n");
  EXPECT_EQ(validate_shapes(cfg, {2, 3, 4, 5}).back(), (Shape4{2, 3, 4, 5}));
}

TEST(NetfileTest, GroupMustDivideChannels) {
  const NetConfig cfg = parse_netfile(
      "layer {\n type: conv\n name: c\n params_file: \"x\"\n group: 2\n}\n");
  EXPECT_THROW(validate_shapes(cfg, {1, 3, 4, 4}, {{"c", {4, 1, 1, 1}}}), ShapeError);
}

TEST(NetfileTest, PoolWindowMustTile) {
  const NetConfig cfg = parse_netfile(
      "layer {\n type: pool\n name: p\n pool_mode: max\n kernel_h: 3\n kernel_w: 3\n stride: 2\n}\n");
  EXPECT_THROW(validate_shapes(cfg, {1, 1, 6, 6}), ShapeError);
  EXPECT_NO_THROW(validate_shapes(cfg, {1, 1, 7, 7}));
}

struct Malformed {
  const char* file;
  std::size_t line;
};

void PrintTo(const Malformed& m, std::ostream* os) { *os << m.file; }

class MalformedNetfileTest : public ::testing::TestWithParam<Malformed> {};

TEST_P(MalformedNetfileTest, ReportsLineNumber) {
  const Malformed m = GetParam();
  std::ifstream f(cases::fixtures_dir() / "malformed" / m.file);
  ASSERT_TRUE(f) << m.file;
  std::stringstream ss;
  ss << f.rdbuf();
  try {
    parse_netfile(ss.str());
    FAIL() << m.file << " parsed";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), m.line) << m.file << ": " << e.what();
    EXPECT_EQ(std::string(e.what()).rfind("line " + std::to_string(m.line) + ":", 0), 0u);
  }
}

INSTANTIATE_TEST_SUITE_P(
    Fixtures, MalformedNetfileTest,
    ::testing::Values(Malformed{"01_empty.netfile", 1}, Malformed{"02_unknown_kind.netfile", 3},
                      Malformed{"03_missing_type.netfile", 3},
                      Malformed{"04_missing_params_file.netfile", 5},
                      Malformed{"05_duplicate_name.netfile", 7},
                      Malformed{"06_bad_execution_mode.netfile", 2},
                      Malformed{"07_bad_auto_tuning.netfile", 1},
                      Malformed{"08_unclosed_block.netfile", 3},
                      Malformed{"09_stray_brace.netfile", 5}, Malformed{"10_nested_block.netfile", 3},
                      Malformed{"11_no_colon.netfile", 2}, Malformed{"12_unknown_top_key.netfile", 1},
                      Malformed{"13_negative_stride.netfile", 7},
                      Malformed{"14_even_lrn.netfile", 4}, Malformed{"15_key_wrong_kind.netfile", 4},
                      Malformed{"16_bad_pool_mode.netfile", 4},
                      Malformed{"17_uppercase_key.netfile", 1},
                      Malformed{"18_duplicate_key.netfile", 6}, Malformed{"19_bad_bool.netfile", 5},
                      Malformed{"20_unbalanced_quote.netfile", 4},
                      Malformed{"21_comments_only.netfile", 3}, Malformed{"22_bad_ram.netfile", 1}),
    [](const auto& info) {
      std::string name = info.param.file;
      name = name.substr(0, name.find('.'));
      return "f" + name;
    });

// Random NetConfigs survive print -> parse unchanged.
TEST(NetfileTest, PrettyPrintRoundTrips) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    NetConfig cfg;
    cfg.allocated_ram_mb = cases::pick(rng, 0, 1000);
    cfg.execution_mode = cases::pick(rng, 0, 1) ? ExecutionMode::parallel : ExecutionMode::sequential;
    cfg.auto_tuning = cases::pick(rng, 0, 1) == 1;
    if (cases::pick(rng, 0, 1)) {
      cfg.input_shape = ImageShape{cases::pick(rng, 1, 9), cases::pick(rng, 1, 300),
                                   cases::pick(rng, 1, 300)};
    }
    const std::size_t count = cases::pick(rng, 1, 8);
    for (std::size_t i = 0; i < count; ++i) {
      LayerSpec l;
      l.kind = static_cast<LayerKind>(cases::pick(rng, 0, 5));
      l.name = "layer_" + std::to_string(i);
      std::uniform_real_distribution<float> f(0.0f, 3.0f);
      switch (l.kind) {
        case LayerKind::conv:
          l.pad = cases::pick(rng, 0, 3);
          l.stride = cases::pick(rng, 1, 4);
          l.group = cases::pick(rng, 1, 3);
          if (cases::pick(rng, 0, 1)) {
            l.kernel_h = cases::pick(rng, 1, 11);
            l.kernel_w = cases::pick(rng, 1, 11);
          }
          [[fallthrough]];
        case LayerKind::fc:
          l.params_file = "model_param_" + l.name + ".msg";
          if (cases::pick(rng, 0, 1)) l.num_output = cases::pick(rng, 1, 4096);
          l.fused_relu = cases::pick(rng, 0, 1) == 1;
          break;
        case LayerKind::pool:
          l.kernel_h = cases::pick(rng, 1, 5);
          l.kernel_w = cases::pick(rng, 1, 5);
          l.stride = cases::pick(rng, 1, 3);
          l.pool_mode = cases::pick(rng, 0, 1) ? PoolMode::max : PoolMode::mean;
          l.fused_relu = cases::pick(rng, 0, 1) == 1;
          break;
        case LayerKind::lrn:
          l.lrn_n = 2 * cases::pick(rng, 0, 4) + 1;
          l.lrn_alpha = f(rng) * 1e-3f;
          l.lrn_beta = f(rng);
          l.lrn_k = f(rng) + 0.1f;
          break;
        default:
          break;
      }
      cfg.layers.push_back(l);
    }
    const std::string text = to_netfile_text(cfg);
    ASSERT_EQ(parse_netfile(text), cfg) << text;
  }
}

// Byte-level fuzz: arbitrary input yields a config or a line-numbered
// ParseError, never anything else.
TEST(NetfileTest, ParseIsTotalOnRandomInput) {
  std::mt19937_64 rng(5);
  const std::string golden = to_netfile_text(cases::load_golden("alexnet.netfile"));
  const std::string alphabet = "layer{}: \n#\"abcdefghijklmnopqrstuvwxyz_0123456789-.+\t";
  for (int trial = 0; trial < 2000; ++trial) {
    std::string text = golden;
    const std::size_t edits = cases::pick(rng, 1, 8);
    for (std::size_t e = 0; e < edits; ++e) {
      const std::size_t pos = cases::pick(rng, 0, text.size() - 1);
      switch (cases::pick(rng, 0, 2)) {
        case 0: text[pos] = alphabet[cases::pick(rng, 0, alphabet.size() - 1)]; break;
        case 1: text.erase(pos, cases::pick(rng, 1, 20)); break;
        default: text.insert(pos, 1, static_cast<char>(cases::pick(rng, 0, 255))); break;
      }
      if (text.empty()) text = "x";
    }
    try {
      (void)parse_netfile(text);
    } catch (const ParseError& e) {
      EXPECT_GE(e.line(), 1u);
    }
  }
}

}  // namespace
}  // namespace cnnd
