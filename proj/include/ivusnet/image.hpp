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

#pragma once

// Frame data model and file I/O: binary PGM images and masks, the TSV frame
// manifest, and half-resolution preprocessing.

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "ivusnet/errors.hpp"

namespace ivus {

/// Row-major 2-D grid of pixels.
template <class P>
struct Grid {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<P> pixels;

  Grid() = default;
  Grid(std::size_t w, std::size_t h, P fill = P{}) : width(w), height(h), pixels(w * h, fill) {}

  P& operator()(std::size_t x, std::size_t y) { return pixels[y * width + x]; }
  const P& operator()(std::size_t x, std::size_t y) const { return pixels[y * width + x]; }
  std::size_t size() const noexcept { return pixels.size(); }
  bool same_dims(const auto& o) const noexcept { return width == o.width && height == o.height; }

  friend bool operator==(const Grid&, const Grid&) = default;
};

/// Intensities in [0, 1].
using GrayImage = Grid<float>;
/// One byte per pixel, 0 or 1.
using BinaryMask = Grid<std::uint8_t>;
/// Per-pixel foreground probability.
using ProbMap = Grid<float>;

inline std::size_t count_foreground(const BinaryMask& m) {
  return static_cast<std::size_t>(std::count(m.pixels.begin(), m.pixels.end(), std::uint8_t{1}));
}

enum class Category { none, bifurcation, side_vessel, shadow };
enum class Split { train, test };
enum class Target { lumen, media };

inline constexpr std::array<Category, 4> kCategories = {Category::none, Category::bifurcation,
                                                        Category::side_vessel, Category::shadow};

inline std::string_view to_string(Category c) {
  switch (c) {
    case Category::none: return "none";
    case Category::bifurcation: return "bifurcation";
    case Category::side_vessel: return "side_vessel";
    case Category::shadow: return "shadow";
  }
  return "?";
}
inline std::string_view to_string(Split s) { return s == Split::train ? "train" : "test"; }
inline std::string_view to_string(Target t) { return t == Target::lumen ? "lumen" : "media"; }

inline bool parse_category(std::string_view s, Category& out) {
  for (auto c : kCategories)
    if (s == to_string(c)) {
      out = c;
      return true;
    }
  return false;
}

inline Target parse_target(std::string_view s) {
  if (s == "lumen") return Target::lumen;
  if (s == "media") return Target::media;
  throw ConfigError("unknown target '" + std::string(s) + "' (expected lumen or media)");
}

/// One manifest row. Paths are absolute or relative to the working directory
/// after loading.
struct FrameRecord {
  std::filesystem::path image_path;
  std::filesystem::path lumen_mask_path;
  std::filesystem::path media_mask_path;
  Category category = Category::none;
  Split split = Split::train;
};

/// A frame held in memory with both ground-truth masks.
struct Frame {
  GrayImage image;
  BinaryMask lumen;
  BinaryMask media;
  Category category = Category::none;

  const BinaryMask& mask(Target t) const { return t == Target::lumen ? lumen : media; }
};

// ---------------------------------------------------------------------------
// PGM (P5, maxval 255)

namespace detail {

struct PgmRaster {
  std::size_t width, height;
  std::vector<std::uint8_t> bytes;
};

inline PgmRaster read_pgm_raw(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  const std::vector<char> data{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  std::size_t pos = 0;
  const std::string name = path.string();
  if (data.size() < 2 || data[0] != 'P' || data[1] != '5')
    throw FormatError(name + ": not a binary PGM (expected magic P5)", 0);
  pos = 2;

  auto skip_space = [&] {
    while (pos < data.size()) {
      if (data[pos] == '#') {
        while (pos < data.size() && data[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(data[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto number = [&](const char* what) {
    skip_space();
    const std::size_t start = pos;
    std::size_t v = 0;
    while (pos < data.size() && std::isdigit(static_cast<unsigned char>(data[pos]))) {
      v = v * 10 + static_cast<std::size_t>(data[pos] - '0');
      if (v > (1u << 24)) throw FormatError(name + ": " + what + " out of range", start);
      ++pos;
    }
    if (pos == start) throw FormatError(name + ": missing " + what, start);
    return v;
  };

  const std::size_t w = number("width");
  const std::size_t h = number("height");
  const std::size_t maxval_at = pos;
  const std::size_t maxval = number("maxval");
  if (maxval != 255)
    throw FormatError(name + ": maxval " + std::to_string(maxval) + " unsupported (need 255)",
                      maxval_at);
  if (pos >= data.size() || !std::isspace(static_cast<unsigned char>(data[pos])))
    throw FormatError(name + ": header must end with one whitespace byte", pos);
  ++pos;
  if (w == 0 || h == 0) throw FormatError(name + ": zero image dimension", pos);
  if (data.size() - pos < w * h)
    throw FormatError(name + ": truncated pixel data (" + std::to_string(data.size() - pos) +
                          " of " + std::to_string(w * h) + " bytes)",
                      data.size());
  PgmRaster r{w, h, {}};
  r.bytes.assign(data.begin() + static_cast<std::ptrdiff_t>(pos),
                 data.begin() + static_cast<std::ptrdiff_t>(pos + w * h));
  return r;
}

inline void write_pgm_raw(const std::filesystem::path& path, std::size_t w, std::size_t h,
                          const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << "P5\n" << w << ' ' << h << "\n255\n";
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("short write to " + path.string());
}

}  // namespace detail

/// Reads a P5 image; intensities are divided by 255.
inline GrayImage read_pgm(const std::filesystem::path& path) {
  auto r = detail::read_pgm_raw(path);
  GrayImage img(r.width, r.height);
  for (std::size_t i = 0; i < img.size(); ++i) img.pixels[i] = static_cast<float>(r.bytes[i]) / 255.0f;
  return img;
}

/// Writes intensities clamped to [0, 1] and rounded to 8 bits.
inline void write_pgm(const GrayImage& img, const std::filesystem::path& path) {
  std::vector<std::uint8_t> bytes(img.size());
  for (std::size_t i = 0; i < img.size(); ++i)
    bytes[i] = static_cast<std::uint8_t>(std::lround(std::clamp(img.pixels[i], 0.0f, 1.0f) * 255.0f));
  detail::write_pgm_raw(path, img.width, img.height, bytes);
}

/// Any nonzero byte is foreground.
inline BinaryMask read_mask(const std::filesystem::path& path) {
  auto r = detail::read_pgm_raw(path);
  BinaryMask m(r.width, r.height);
  for (std::size_t i = 0; i < m.size(); ++i) m.pixels[i] = r.bytes[i] != 0 ? 1 : 0;
  return m;
}

/// Foreground as 255, background as 0.
inline void write_mask(const BinaryMask& m, const std::filesystem::path& path) {
  std::vector<std::uint8_t> bytes(m.size());
  for (std::size_t i = 0; i < m.size(); ++i) bytes[i] = m.pixels[i] ? 255 : 0;
  detail::write_pgm_raw(path, m.width, m.height, bytes);
}

// ---------------------------------------------------------------------------
// Manifest: image, lumen mask, media mask, category, split (tab separated).

inline std::vector<FrameRecord> parse_manifest(std::istream& in, const std::filesystem::path& base) {
  std::vector<FrameRecord> records;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cols;
    std::stringstream ss(line);
    std::string col;
    while (std::getline(ss, col, '\t')) cols.push_back(col);
    if (!line.empty() && line.back() == '\t') cols.emplace_back();
    if (cols.size() != 5)
      throw ParseError("expected 5 tab-separated columns, found " + std::to_string(cols.size()),
                       lineno);
    FrameRecord r;
    r.image_path = base / cols[0];
    r.lumen_mask_path = base / cols[1];
    r.media_mask_path = base / cols[2];
    if (!parse_category(cols[3], r.category))
      throw ParseError("unknown category '" + cols[3] +
                           "' (expected none, bifurcation, side_vessel or shadow)",
                       lineno);
    if (cols[4] == "train") {
      r.split = Split::train;
    } else if (cols[4] == "test") {
      r.split = Split::test;
    } else {
      throw ParseError("unknown split '" + cols[4] + "' (expected train or test)", lineno);
    }
    records.push_back(std::move(r));
  }
  return records;
}

/// Records in file order with paths resolved against the manifest's directory.
inline std::vector<FrameRecord> load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open manifest " + path.string());
  return parse_manifest(in, path.parent_path());
}

/// Writes records with paths relative to the manifest's directory when possible.
inline void write_manifest(const std::vector<FrameRecord>& records,
                           const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write manifest " + path.string());
  const auto base = path.parent_path();
  auto rel = [&](const std::filesystem::path& p) {
    return base.empty() ? p.generic_string() : p.lexically_relative(base).generic_string();
  };
  out << "# image\tlumen_mask\tmedia_mask\tcategory\tsplit\n";
  for (const auto& r : records)
    out << rel(r.image_path) << '\t' << rel(r.lumen_mask_path) << '\t' << rel(r.media_mask_path)
        << '\t' << to_string(r.category) << '\t' << to_string(r.split) << '\n';
}

inline Frame load_frame(const FrameRecord& r) {
  Frame f{read_pgm(r.image_path), read_mask(r.lumen_mask_path), read_mask(r.media_mask_path),
          r.category};
  if (!f.lumen.same_dims(f.image) || !f.media.same_dims(f.image))
    throw DimensionError("masks of " + r.image_path.string() + " do not match the image size");
  return f;
}

// ---------------------------------------------------------------------------
// Half-resolution preprocessing

/// Mean of each disjoint 2x2 block.
inline GrayImage downsize_half(const GrayImage& img) {
  if (img.width % 2 != 0 || img.height % 2 != 0)
    throw DimensionError("downsize_half needs even dimensions, got " + std::to_string(img.width) +
                         "x" + std::to_string(img.height));
  GrayImage out(img.width / 2, img.height / 2);
  for (std::size_t y = 0; y < out.height; ++y)
    for (std::size_t x = 0; x < out.width; ++x)
      // Pairwise sums are symmetric under either flip, so flipping commutes exactly.
      out(x, y) = ((img(2 * x, 2 * y) + img(2 * x + 1, 2 * y)) +
                   (img(2 * x, 2 * y + 1) + img(2 * x + 1, 2 * y + 1))) *
                  0.25f;
  return out;
}

/// Majority vote over each 2x2 block; a 2-2 tie is foreground.
inline BinaryMask downsize_half(const BinaryMask& m) {
  if (m.width % 2 != 0 || m.height % 2 != 0)
    throw DimensionError("downsize_half needs even dimensions, got " + std::to_string(m.width) +
                         "x" + std::to_string(m.height));
  BinaryMask out(m.width / 2, m.height / 2);
  for (std::size_t y = 0; y < out.height; ++y)
    for (std::size_t x = 0; x < out.width; ++x) {
      const int votes = m(2 * x, 2 * y) + m(2 * x + 1, 2 * y) + m(2 * x, 2 * y + 1) +
                        m(2 * x + 1, 2 * y + 1);
      out(x, y) = votes >= 2 ? 1 : 0;
    }
  return out;
}

inline Frame downsize_half(const Frame& f) {
  return {downsize_half(f.image), downsize_half(f.lumen), downsize_half(f.media), f.category};
}

}  // namespace ivus
