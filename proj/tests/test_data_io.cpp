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

#include <fstream>
#include <sstream>

#include "ivusnet/augment.hpp"
#include "ivusnet/binary_io.hpp"
#include "ivusnet/phantom.hpp"
#include "test_util.hpp"

using namespace ivus;

namespace {

void write_bytes(const std::filesystem::path& p, const std::string& s) {
  std::ofstream(p, std::ios::binary) << s;
}

GrayImage random_8bit(std::mt19937_64& rng, std::size_t w, std::size_t h) {
  GrayImage img(w, h);
  for (auto& v : img.pixels) v = static_cast<float>(rng() % 256) / 255.0f;
  return img;
}

}  // namespace

TEST(Pgm, EightBitRoundTripIsIdentity) {
  testutil::TempDir dir("pgm");
  std::mt19937_64 rng(1);
  const auto img = random_8bit(rng, 13, 9);
  write_pgm(img, dir / "a.pgm");
  EXPECT_EQ(read_pgm(dir / "a.pgm"), img);
}

TEST(Pgm, HeaderCommentsAreSkipped) {
  testutil::TempDir dir("pgm");
  write_bytes(dir / "c.pgm", std::string("P5\n# made by hand\n2 1\n255\n") + '\x00' + '\xff');
  const auto img = read_pgm(dir / "c.pgm");
  EXPECT_EQ(img.width, 2u);
  EXPECT_EQ(img.pixels, (std::vector<float>{0.0f, 1.0f}));
}

TEST(Pgm, MalformedFilesAreFormatErrors) {
  testutil::TempDir dir("pgm");
  write_bytes(dir / "ascii.pgm", "P2\n2 2\n255\n0 1 2 3\n");
  write_bytes(dir / "empty.pgm", "");
  write_bytes(dir / "max.pgm", "P5\n1 1\n65535\n\x01\x02");
  write_bytes(dir / "short.pgm", "P5\n4 4\n255\n\x01\x02");
  for (const char* name : {"ascii.pgm", "empty.pgm", "max.pgm", "short.pgm"})
    EXPECT_THROW(read_pgm(dir / name), FormatError) << name;
  EXPECT_THROW(read_pgm(dir / "missing.pgm"), Error);
}

TEST(Mask, AnyNonzeroByteIsForeground) {
  testutil::TempDir dir("mask");
  write_bytes(dir / "m.pgm", std::string("P5\n4 1\n255\n") + '\x00' + '\x01' + '\x80' + '\xff');
  const auto m = read_mask(dir / "m.pgm");
  EXPECT_EQ(m.pixels, (std::vector<std::uint8_t>{0, 1, 1, 1}));
  write_mask(m, dir / "n.pgm");
  EXPECT_EQ(read_mask(dir / "n.pgm"), m);
}

TEST(Manifest, ThreeLinesInOrderWithRelativePaths) {
  testutil::TempDir dir("man");
  write_bytes(dir / "m.tsv",
              "# header\n"
              "a.pgm\ta_l.pgm\ta_m.pgm\tnone\ttrain\n"
              "b.pgm\tb_l.pgm\tb_m.pgm\tshadow\ttest\n"
              "\n"
              "sub/c.pgm\tc_l.pgm\tc_m.pgm\tside_vessel\ttrain\n");
  const auto r = load_manifest(dir / "m.tsv");
  ASSERT_EQ(r.size(), 3u);
  EXPECT_EQ(r[0].image_path, dir / "a.pgm");
  EXPECT_EQ(r[1].category, Category::shadow);
  EXPECT_EQ(r[1].split, Split::test);
  EXPECT_EQ(r[2].image_path, dir / "sub/c.pgm");
  EXPECT_EQ(r[2].category, Category::side_vessel);
}

TEST(Manifest, UnknownCategoryNamesTheLine) {
  std::istringstream in(
      "a\tb\tc\tnone\ttrain\n"
      "a\tb\tc\tsidevessel\ttrain\n");
  try {
    parse_manifest(in, "");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("sidevessel"), std::string::npos);
  }
}

TEST(Manifest, ColumnCountAndSplitErrors) {
  std::istringstream four("a\tb\tc\tnone\n");
  EXPECT_THROW(parse_manifest(four, ""), ParseError);
  std::istringstream six("a\tb\tc\tnone\ttrain\textra\n");
  EXPECT_THROW(parse_manifest(six, ""), ParseError);
  std::istringstream split("a\tb\tc\tnone\tvalidation\n");
  EXPECT_THROW(parse_manifest(split, ""), ParseError);
}

TEST(Manifest, CommentOnlyFileIsEmpty) {
  std::istringstream in("# nothing\n# here\n");
  EXPECT_TRUE(parse_manifest(in, "").empty());
}

TEST(Manifest, WriteThenLoadRoundTrip) {
  testutil::TempDir dir("man");
  std::vector<FrameRecord> recs;
  for (auto c : kCategories) recs.push_back({dir / "x.pgm", dir / "l.pgm", dir / "m.pgm", c, Split::test});
  write_manifest(recs, dir / "m.tsv");
  const auto back = load_manifest(dir / "m.tsv");
  ASSERT_EQ(back.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(back[i].category, recs[i].category);
    EXPECT_EQ(back[i].split, Split::test);
    EXPECT_EQ(back[i].media_mask_path.lexically_normal(), recs[i].media_mask_path.lexically_normal());
  }
}

TEST(Downsize, BlockMeanExample) {
  GrayImage img(2, 2);
  img.pixels = {1 / 255.0f, 2 / 255.0f, 3 / 255.0f, 4 / 255.0f};
  const auto d = downsize_half(img);
  ASSERT_EQ(d.size(), 1u);
  EXPECT_NEAR(d.pixels[0], 2.5 / 255.0, 1e-7);
}

TEST(Downsize, ShapesAndConstants) {
  const auto d = downsize_half(GrayImage(384, 384, 0.25f));
  EXPECT_EQ(d.width, 192u);
  EXPECT_EQ(d.height, 192u);
  EXPECT_EQ(d, GrayImage(192, 192, 0.25f));
  EXPECT_THROW(downsize_half(GrayImage(5, 4)), DimensionError);
  EXPECT_THROW(downsize_half(BinaryMask(4, 3)), DimensionError);
}

TEST(Downsize, MaskMajorityWithForegroundTies) {
  BinaryMask m(6, 2);
  m.pixels = {1, 0, 1, 1, 0, 0,
              0, 0, 1, 0, 0, 1};
  EXPECT_EQ(downsize_half(m).pixels, (std::vector<std::uint8_t>{0, 1, 0}));
  m.pixels = {1, 0, 0, 0, 1, 1,
              1, 0, 0, 0, 1, 1};
  EXPECT_EQ(downsize_half(m).pixels, (std::vector<std::uint8_t>{1, 0, 1}));
}

TEST(Downsize, CommutesWithHorizontalFlip) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    const auto img = random_8bit(rng, 2 * (1 + rng() % 12), 2 * (1 + rng() % 12));
    EXPECT_EQ(downsize_half(flip(img, Flip::lr)), flip(downsize_half(img), Flip::lr));
    const auto m = testutil::random_mask(rng, img.width, img.height, 0.5);
    EXPECT_EQ(downsize_half(flip(m, Flip::lr)), flip(downsize_half(m), Flip::lr));
  }
}

TEST(Phantom, LumenInsideMediaAndIntensitiesInRange) {
  for (bool artifacts : {false, true}) {
    PhantomOptions opt;
    opt.artifacts = artifacts;
    for (std::uint64_t i = 0; i < 12; ++i) {
      const auto ph = make_phantom(3, i, 64, opt);
      const auto& f = ph.frame;
      ASSERT_EQ(f.image.width, 64u);
      std::size_t lum = 0;
      for (std::size_t k = 0; k < f.image.size(); ++k) {
        EXPECT_LE(f.lumen.pixels[k], f.media.pixels[k]) << "pixel " << k;
        EXPECT_GE(f.image.pixels[k], 0.0f);
        EXPECT_LE(f.image.pixels[k], 1.0f);
        lum += f.lumen.pixels[k];
      }
      EXPECT_GT(lum, 20u);
      EXPECT_LT(lum, count_foreground(f.media));
      EXPECT_EQ(f.lumen, ellipse_to_mask(ph.lumen, 64, 64));
      EXPECT_EQ(f.media, ellipse_to_mask(ph.media, 64, 64));
    }
  }
}

TEST(Phantom, ArtifactCategoriesCycle) {
  PhantomOptions opt;
  opt.artifacts = true;
  for (std::uint64_t i = 0; i < 8; ++i) EXPECT_EQ(make_phantom(1, i, 64, opt).frame.category, kCategories[i % 4]);
  EXPECT_EQ(make_phantom(1, 3, 64).frame.category, Category::none);
}

TEST(Phantom, SameSeedGivesBitIdenticalFiles) {
  testutil::TempDir a("pha"), b("phb");
  const auto ra = synth_phantoms(a.path(), 9, 4, 32);
  const auto rb = synth_phantoms(b.path(), 9, 4, 32);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(detail::read_file(ra[i].image_path), detail::read_file(rb[i].image_path));
    EXPECT_EQ(detail::read_file(ra[i].media_mask_path), detail::read_file(rb[i].media_mask_path));
  }
  EXPECT_NE(make_phantom(9, 0, 32).frame.image, make_phantom(10, 0, 32).frame.image);
}

TEST(Phantom, SixteenRecordsAtSixtyFour) {
  testutil::TempDir dir("ph16");
  const auto recs = synth_phantoms(dir.path(), 1, 16, 64);
  ASSERT_EQ(recs.size(), 16u);
  EXPECT_TRUE(std::filesystem::exists(dir / "img_0015.pgm"));
  EXPECT_TRUE(std::filesystem::exists(dir / "lum_0000.pgm"));
  EXPECT_TRUE(std::filesystem::exists(dir / "med_0007.pgm"));
  const auto loaded = load_manifest(dir / "manifest.tsv");
  ASSERT_EQ(loaded.size(), 16u);
  const auto f = load_frame(loaded[5]);
  EXPECT_EQ(f.image.width, 64u);
  EXPECT_EQ(f.image.height, 64u);
  EXPECT_EQ(f.lumen, make_phantom(1, 5, 64).frame.lumen);
}

TEST(Phantom, SizeMustBeMultipleOfEight) {
  testutil::TempDir dir("phbad");
  EXPECT_THROW(synth_phantoms(dir.path(), 1, 2, 60), ConfigError);
  EXPECT_THROW(synth_phantoms(dir.path(), 1, 0, 64), ConfigError);
  EXPECT_THROW(make_phantom(1, 0, 60), ConfigError);
}

TEST(Frame, MismatchedMaskIsDimensionError) {
  testutil::TempDir dir("frame");
  write_pgm(GrayImage(8, 8), dir / "i.pgm");
  write_mask(BinaryMask(8, 8), dir / "l.pgm");
  write_mask(BinaryMask(8, 16), dir / "m.pgm");
  EXPECT_THROW(load_frame({dir / "i.pgm", dir / "l.pgm", dir / "m.pgm"}), DimensionError);
}
