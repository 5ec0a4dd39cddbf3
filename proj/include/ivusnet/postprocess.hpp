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

// Probability map -> vessel contour:
//   binarize -> largest 8-connected component -> Moore boundary trace ->
//   ellipse fit -> ellipse contour and rasterized ellipse mask.

#include <algorithm>
#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "ivusnet/binary_io.hpp"
#include "ivusnet/ellipse.hpp"
#include "ivusnet/errors.hpp"
#include "ivusnet/image.hpp"

namespace ivus {

inline constexpr float kDefaultThreshold = 0.5f;
inline constexpr std::size_t kDefaultContourPoints = 360;

inline BinaryMask binarize(const ProbMap& p, float threshold = kDefaultThreshold) {
  BinaryMask m(p.width, p.height);
  for (std::size_t i = 0; i < p.size(); ++i) m.pixels[i] = p.pixels[i] >= threshold ? 1 : 0;
  return m;
}

namespace detail {

// Clockwise in image coordinates (y down), starting west.
inline constexpr std::array<std::array<int, 2>, 8> kMoore = {
    {{-1, 0}, {-1, -1}, {0, -1}, {1, -1}, {1, 0}, {1, 1}, {0, 1}, {-1, 1}}};

inline bool fg(const BinaryMask& m, long x, long y) {
  return x >= 0 && y >= 0 && x < static_cast<long>(m.width) && y < static_cast<long>(m.height) &&
         m(static_cast<std::size_t>(x), static_cast<std::size_t>(y)) != 0;
}

inline int moore_index(long dx, long dy) {
  for (int k = 0; k < 8; ++k)
    if (kMoore[k][0] == dx && kMoore[k][1] == dy) return k;
  return -1;
}

}  // namespace detail

/// Keeps the largest 8-connected foreground component. Equal sizes go to the
/// component whose first pixel comes earliest in row-major order.
inline BinaryMask largest_component(const BinaryMask& m) {
  const std::size_t w = m.width, h = m.height;
  std::vector<std::int32_t> label(m.size(), -1);
  std::vector<std::size_t> stack;
  std::int32_t best = -1, next = 0;
  std::size_t best_size = 0;
  for (std::size_t seed = 0; seed < m.size(); ++seed) {
    if (!m.pixels[seed] || label[seed] >= 0) continue;
    const std::int32_t id = next++;
    std::size_t size = 0;
    label[seed] = id;
    stack.push_back(seed);
    while (!stack.empty()) {
      const std::size_t i = stack.back();
      stack.pop_back();
      ++size;
      const long x = static_cast<long>(i % w), y = static_cast<long>(i / w);
      for (const auto& d : detail::kMoore) {
        const long nx = x + d[0], ny = y + d[1];
        if (!detail::fg(m, nx, ny)) continue;
        const std::size_t j = static_cast<std::size_t>(ny) * w + static_cast<std::size_t>(nx);
        if (label[j] < 0) {
          label[j] = id;
          stack.push_back(j);
        }
      }
    }
    if (size > best_size) {
      best_size = size;
      best = id;
    }
  }
  if (best < 0) throw EmptyRegionError("mask has no foreground pixels");
  BinaryMask out(w, h);
  for (std::size_t i = 0; i < m.size(); ++i) out.pixels[i] = label[i] == best ? 1 : 0;
  return out;
}

/// Moore-neighbor boundary of the component containing the first foreground
/// pixel in row-major order, traced clockwise. Tracing stops when the start
/// pixel is about to be left by the same move that first left it.
/// Points are pixel centers; the closing edge back to the start is implicit.
inline Contour trace_boundary(const BinaryMask& m) {
  const auto first = std::find(m.pixels.begin(), m.pixels.end(), std::uint8_t{1});
  if (first == m.pixels.end()) throw EmptyRegionError("cannot trace an empty mask");
  const std::size_t s = static_cast<std::size_t>(first - m.pixels.begin());
  const long sx = static_cast<long>(s % m.width), sy = static_cast<long>(s / m.width);

  Contour out{{static_cast<double>(sx), static_cast<double>(sy)}};
  long cx = sx, cy = sy;
  int back = 0;  // start is entered from the west, which is background by construction
  int first_move = -1;
  const std::size_t limit = 4 * m.size() + 8;
  for (std::size_t step = 0; step < limit; ++step) {
    int found = -1;
    for (int k = 1; k <= 8; ++k) {
      const int d = (back + k) % 8;
      if (detail::fg(m, cx + detail::kMoore[d][0], cy + detail::kMoore[d][1])) {
        found = d;
        break;
      }
    }
    if (found < 0) return out;  // isolated pixel
    if (cx == sx && cy == sy) {
      if (first_move < 0)
        first_move = found;
      else if (found == first_move)
        return out;
      else
        out.push_back({static_cast<double>(sx), static_cast<double>(sy)});
    }

    const int prev = (found + 7) % 8;
    const long bx = cx + detail::kMoore[prev][0], by = cy + detail::kMoore[prev][1];
    cx += detail::kMoore[found][0];
    cy += detail::kMoore[found][1];
    back = detail::moore_index(bx - cx, by - cy);
    if (cx == sx && cy == sy) continue;
    out.push_back({static_cast<double>(cx), static_cast<double>(cy)});
  }
  throw ContractError("boundary trace did not close");
}

/// Midpoints between boundary pixels and their 4-neighbors outside the mask.
/// These lie on the pixel-region outline, where a rasterized ellipse's true
/// curve passes, instead of half a pixel inside it.
inline std::vector<Point> crack_points(const BinaryMask& m, const Contour& boundary) {
  std::set<std::pair<long, long>> seen;  // doubled coordinates
  std::vector<Point> out;
  static constexpr std::array<std::array<int, 2>, 4> k4 = {{{1, 0}, {-1, 0}, {0, 1}, {0, -1}}};
  for (const auto& p : boundary) {
    const long x = static_cast<long>(p.x), y = static_cast<long>(p.y);
    for (const auto& d : k4) {
      if (detail::fg(m, x + d[0], y + d[1])) continue;
      if (seen.emplace(2 * x + d[0], 2 * y + d[1]).second)
        out.push_back({x + 0.5 * d[0], y + 0.5 * d[1]});
    }
  }
  return out;
}

struct ContourResult {
  Contour contour;         // sampled fitted ellipse
  EllipseParams ellipse;
  BinaryMask mask;         // rasterized fitted ellipse, the final segmentation
  Contour raw_boundary;    // traced boundary of the selected component
  BinaryMask component;
};

inline ContourResult extract_contour(const ProbMap& p, float threshold = kDefaultThreshold,
                                     std::size_t contour_points = kDefaultContourPoints) {
  ContourResult r;
  try {
    r.component = largest_component(binarize(p, threshold));
  } catch (const EmptyRegionError& e) {
    throw EmptyRegionError(std::string("component stage: ") + e.what());
  }
  r.raw_boundary = trace_boundary(r.component);
  try {
    r.ellipse = fit_ellipse(crack_points(r.component, r.raw_boundary));
  } catch (const FitError& e) {
    throw FitError(std::string("ellipse stage: ") + e.what());
  }
  r.contour = ellipse_to_contour(r.ellipse, contour_points);
  r.mask = ellipse_to_mask(r.ellipse, p.width, p.height);
  return r;
}

// Probability map file: "IVPM" | u32 height | u32 width | height*width f32, little-endian.

inline void write_prob_map(const ProbMap& p, const std::filesystem::path& path) {
  detail::ByteWriter w;
  w.bytes("IVPM");
  w.u32(static_cast<std::uint32_t>(p.height));
  w.u32(static_cast<std::uint32_t>(p.width));
  for (float v : p.pixels) w.f32(v);
  detail::write_file(path, w.buffer());
}

inline ProbMap read_prob_map(const std::filesystem::path& path) {
  detail::ByteReader r(detail::read_file(path));
  if (r.bytes(4) != "IVPM") throw FormatError("bad probability map magic", 0);
  const std::size_t h = r.u32(), w = r.u32();
  if (h == 0 || w == 0) throw FormatError("probability map with zero dimension", 4);
  ProbMap p(w, h);
  for (auto& v : p.pixels) v = r.f32();
  if (!r.at_end()) throw FormatError("trailing bytes after probability map", r.offset());
  return p;
}

inline void write_contour_csv(const Contour& c, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << "x,y\n" << std::setprecision(17);
  for (const auto& p : c) out << p.x << ',' << p.y << '\n';
  if (!out) throw Error("write failed: " + path.string());
}

}  // namespace ivus
