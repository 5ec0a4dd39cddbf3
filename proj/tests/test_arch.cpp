// Copyright 2026 The ivusnet Authors
//
// Licensed under the Apache License, Version 2.0 (the "License"); you may not use this file
// except in compliance with the License. You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software distributed under the License
// is distributed on an "AS IS" BASIS WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and limitations under the License.

#include <gtest/gtest.h>

#include <set>

#include "ivusnet/arch.hpp"
#include "ivusnet/gradcheck.hpp"

using namespace ivus;

namespace {

// Closed-form parameter count, written out independently of the layer code.
std::size_t expected_params(const ArchConfig& c) {
  auto conv = [](std::size_t k, std::size_t i, std::size_t o) { return k * k * i * o + o; };
  auto main_layer = [&](std::size_t i, std::size_t o) { return conv(3, i, o) + o + 2 * o; };
  auto branch = [&](std::size_t i, std::size_t o) {
    std::size_t n = main_layer(i, o);
    for (std::size_t l = 1; l < c.main_convs_per_block; ++l) n += main_layer(o, o);
    return n;
  };
  auto refine = [&](std::size_t i, std::size_t o) { return c.refine ? conv(3, i, o) + o + conv(1, o, o) : 0; };
  const auto& d = c.block_depths;
  std::size_t n = branch(c.input_channels, d[0]) + refine(c.input_channels, d[0]);
  for (std::size_t b = 1; b < 4; ++b) n += conv(2, d[b - 1], d[b - 1]) + branch(2 * d[b - 1], d[b]) + refine(2 * d[b - 1], d[b]);
  for (std::size_t j = 0; j < 3; ++j) {
    const std::size_t prev = d[3 - j], out = d[2 - j];
    n += 4 * prev * out + out + branch(2 * out, out) + refine(out, out);
  }
  return n + conv(5, d[0], 1);
}

Tensor<float> image(std::size_t n, std::size_t h, std::size_t w, std::uint64_t seed) {
  return random_tensor(Shape{n, 1, h, w}, seed).cast<float>();
}

}  // namespace

TEST(Arch, ParameterCountMatchesClosedForm) {
  EXPECT_EQ(build_network(ArchConfig::tiny(), 1).parameter_count(), expected_params(ArchConfig::tiny()));
  EXPECT_EQ(build_network(ArchConfig::tiny(), 1).parameter_count(), 219417u);
  ArchConfig three = ArchConfig::tiny();
  three.main_convs_per_block = 3;
  EXPECT_EQ(build_network(three, 1).parameter_count(), expected_params(three));
}

TEST(Arch, PaperPresetParameterCount) {
  const ArchConfig paper = ArchConfig::paper();
  EXPECT_EQ(build_network(paper, 1).parameter_count(), expected_params(paper));
}

TEST(Arch, AblationHasFewerParameters) {
  ArchConfig c = ArchConfig::tiny();
  c.refine = false;
  auto net = build_network(c, 1);
  EXPECT_EQ(net.parameter_count(), expected_params(c));
  EXPECT_LT(net.parameter_count(), build_network(ArchConfig::tiny(), 1).parameter_count());
  std::size_t refining = 0;
  net.visit_parameters([&](const std::string& name, Parameter<float>&) {
    refining += name.find("refine") != std::string::npos;
  });
  EXPECT_EQ(refining, 0u);
}

TEST(Arch, ParameterNamesAreUniqueAndHierarchical) {
  auto net = build_network(ArchConfig::tiny(), 1);
  std::set<std::string> names;
  net.visit_parameters([&](const std::string& name, Parameter<float>&) { EXPECT_TRUE(names.insert(name).second) << name; });
  EXPECT_TRUE(names.count("enc1.main0.conv.weight"));
  EXPECT_TRUE(names.count("enc2.down.weight"));
  EXPECT_TRUE(names.count("dec1.up.weight"));
  EXPECT_TRUE(names.count("dec3.refine.conv1.bias"));
  EXPECT_TRUE(names.count("head.weight"));
}

TEST(Arch, SameSeedSameWeightsDifferentSeedDifferent) {
  auto a = build_network(ArchConfig::tiny(), 7), b = build_network(ArchConfig::tiny(), 7),
       c = build_network(ArchConfig::tiny(), 8);
  const auto pa = a.parameters(), pb = b.parameters(), pc = c.parameters();
  bool differs = false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    EXPECT_EQ(pa[i]->value, pb[i]->value);
    differs = differs || !(pa[i]->value == pc[i]->value);
  }
  EXPECT_TRUE(differs);
}

TEST(Arch, OutputShapeAndRange) {
  auto net = build_network(ArchConfig::tiny(), 3);
  for (auto [h, w] : {std::pair<std::size_t, std::size_t>{64, 64}, {32, 48}, {8, 8}}) {
    const auto y = net.predict(image(2, h, w, h + w));
    ASSERT_EQ(y.shape(), (Shape{2, 1, h, w}));
    for (float v : y.data()) {
      EXPECT_GT(v, 0.0f);
      EXPECT_LT(v, 1.0f);
    }
  }
}

TEST(Arch, RejectsSizesNotDivisibleByEight) {
  auto net = build_network(ArchConfig::tiny(), 3);
  try {
    net.predict(image(1, 60, 60, 1));
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    EXPECT_NE(std::string(e.what()).find("divisible by 8"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("60x60"), std::string::npos);
  }
  EXPECT_THROW(net.predict(random_tensor(Shape{1, 2, 8, 8}, 1).cast<float>()), DimensionError);
}

TEST(Arch, InferenceIsDeterministicAndPerSample) {
  auto net = build_network(ArchConfig::tiny(), 5);
  const auto x = image(3, 16, 16, 9);
  const auto y1 = net.predict(x), y2 = net.predict(x);
  EXPECT_EQ(y1, y2);
  Tensor<float> one(Shape{1, 1, 16, 16});
  std::copy(x.ptr() + 256, x.ptr() + 512, one.ptr());
  const auto ys = net.predict(one);
  for (std::size_t i = 0; i < 256; ++i) EXPECT_EQ(ys[i], y1[256 + i]);
}

TEST(Arch, TrainingForwardUpdatesOnlyRunningStats) {
  auto net = build_network(ArchConfig::tiny(), 5);
  std::vector<Tensor<float>> before;
  for (auto* p : net.parameters()) before.push_back(p->value);
  Tape<float> t;
  auto out = net.forward(t, t.constant(image(2, 16, 16, 1)), Mode::train);
  EXPECT_EQ(out.shape(), (Shape{2, 1, 16, 16}));
  const auto ps = net.parameters();
  for (std::size_t i = 0; i < ps.size(); ++i) EXPECT_EQ(ps[i]->value, before[i]);
  bool moved = false;
  net.visit_buffers([&](const std::string&, std::vector<float>& buf) {
    for (float v : buf) moved = moved || (v != 0.0f && v != 1.0f);
  });
  EXPECT_TRUE(moved);
}

TEST(Arch, ConfigRoundTripAndPresets) {
  ArchConfig c = ArchConfig::tiny();
  c.refine = false;
  c.main_convs_per_block = 3;
  const auto back = ArchConfig::from_kv(c.to_kv());
  EXPECT_EQ(back.block_depths, c.block_depths);
  EXPECT_EQ(back.main_convs_per_block, 3u);
  EXPECT_FALSE(back.refine);
  EXPECT_EQ(ArchConfig::preset("paper").block_depths, (std::array<std::size_t, 4>{64, 128, 256, 512}));
  EXPECT_THROW(ArchConfig::preset("huge"), ConfigError);
  ArchConfig bad;
  bad.block_depths[2] = 0;
  EXPECT_THROW(build_network(bad, 1), ConfigError);
}
