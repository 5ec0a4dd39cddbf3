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

#include <cstring>

#include "ivusnet/checkpoint.hpp"
#include "ivusnet/gradcheck.hpp"
#include "test_util.hpp"

using namespace ivus;

namespace {

Network<float> warmed_network(const ArchConfig& cfg, std::uint64_t seed) {
  auto net = build_network(cfg, seed);
  Tape<float> t;
  net.forward(t, t.constant(random_tensor(Shape{2, 1, 16, 16}, seed).cast<float>()), Mode::train);
  return net;
}

std::size_t error_offset(const std::vector<char>& bytes) {
  try {
    decode_checkpoint(bytes);
  } catch (const FormatError& e) {
    return e.offset();
  }
  ADD_FAILURE() << "no FormatError";
  return 0;
}

}  // namespace

TEST(Checkpoint, RoundTripIsBitIdentical) {
  auto net = warmed_network(ArchConfig::tiny(), 3);
  const auto bytes = encode_checkpoint(net);
  auto back = decode_checkpoint(bytes);
  EXPECT_EQ(encode_checkpoint(back), bytes);
  const auto pa = net.parameters(), pb = back.parameters();
  ASSERT_EQ(pa.size(), pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i)
    EXPECT_EQ(std::memcmp(pa[i]->value.ptr(), pb[i]->value.ptr(), pa[i]->value.numel() * sizeof(float)), 0);
  const auto x = random_tensor(Shape{2, 1, 24, 16}, 11).cast<float>();
  const auto ya = net.predict(x), yb = back.predict(x);
  EXPECT_EQ(std::memcmp(ya.ptr(), yb.ptr(), ya.numel() * sizeof(float)), 0);
}

TEST(Checkpoint, FileRoundTripKeepsConfig) {
  testutil::TempDir dir("ckpt");
  ArchConfig cfg = ArchConfig::tiny();
  cfg.refine = false;
  auto net = warmed_network(cfg, 4);
  save_checkpoint(net, dir / "m.ivn");
  auto back = load_checkpoint(dir / "m.ivn");
  EXPECT_FALSE(back.config().refine);
  EXPECT_EQ(back.config().block_depths, cfg.block_depths);
  EXPECT_EQ(back.parameter_count(), net.parameter_count());
}

TEST(Checkpoint, EveryTruncationIsFormatError) {
  auto net = build_network(ArchConfig::tiny(), 1);
  const auto bytes = encode_checkpoint(net);
  for (std::size_t len : {std::size_t{0}, std::size_t{3}, std::size_t{7}, std::size_t{20}, bytes.size() / 2,
                          bytes.size() - 1}) {
    std::vector<char> cut(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(len));
    EXPECT_THROW(decode_checkpoint(cut), FormatError) << len;
  }
}

TEST(Checkpoint, CorruptHeadersReportOffsets) {
  auto net = build_network(ArchConfig::tiny(), 1);
  const auto bytes = encode_checkpoint(net);

  auto magic = bytes;
  magic[2] = 'X';
  EXPECT_EQ(error_offset(magic), 2u);

  auto version = bytes;
  version[4] = 2;
  EXPECT_EQ(error_offset(version), 4u);

  auto trailing = bytes;
  trailing.push_back(0);
  EXPECT_EQ(error_offset(trailing), bytes.size());
}

TEST(Checkpoint, ConfigMismatchIsRejected) {
  ArchConfig other = ArchConfig::tiny();
  other.block_depths = {8, 16, 32, 32};
  auto a = build_network(ArchConfig::tiny(), 1);
  auto b = build_network(other, 1);
  // Swap the config block of b into a's bytes: tensor shapes no longer agree.
  auto ba = encode_checkpoint(a), bb = encode_checkpoint(b);
  const std::string cfg_a = ArchConfig::tiny().to_kv(), cfg_b = other.to_kv();
  ASSERT_EQ(cfg_a.size(), cfg_b.size());
  std::copy(cfg_b.begin(), cfg_b.end(), ba.begin() + 12);
  try {
    decode_checkpoint(ba);
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_GT(e.offset(), 12u);
    EXPECT_NE(std::string(e.what()).find("shape"), std::string::npos);
  }
  auto broken = bb;
  broken[12] = '#';
  EXPECT_THROW(decode_checkpoint(broken), FormatError);
}

TEST(Checkpoint, MissingFileIsError) {
  EXPECT_THROW(load_checkpoint("/nonexistent/dir/m.ivn"), Error);
}
