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

// Synthetic vessel cross-sections: a bright media ring around a dark lumen,
// both ellipses, with multiplicative speckle and additive background noise.
// Ground truth is the exact rasterization of the two ellipses.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "ivusnet/ellipse.hpp"
#include "ivusnet/errors.hpp"
#include "ivusnet/image.hpp"

namespace ivus {

struct PhantomOptions {
  double speckle_std = 0.15;
  double noise_std = 0.03;
  /// Cycle categories none/bifurcation/side_vessel/shadow and draw the
  /// matching artifact. Otherwise every phantom is artifact-free.
  bool artifacts = false;
};

struct Phantom {
  Frame frame;
  EllipseParams lumen;
  EllipseParams media;
};

namespace detail {

inline std::mt19937_64 phantom_rng(std::uint64_t seed, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32), 0x9e37u};
  return std::mt19937_64(seq);
}

// Largest implicit value of `outer` over points of `inner`.
inline double max_implicit_on(const EllipseParams& outer, const EllipseParams& inner) {
  double worst = 0.0;
  for (const auto& p : ellipse_to_contour(inner, 720))
    worst = std::max(worst, ellipse_implicit(outer, p.x, p.y));
  return worst;
}

}  // namespace detail

/// Phantom `index` of the family `seed`, with side length `size`.
inline Phantom make_phantom(std::uint64_t seed, std::uint64_t index, std::size_t size,
                            const PhantomOptions& opt = {}) {
  if (size == 0 || size % 8 != 0)
    throw ConfigError("phantom size must be a positive multiple of 8, got " + std::to_string(size));
  auto rng = detail::phantom_rng(seed, index);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  auto uni = [&](double lo, double hi) { return lo + (hi - lo) * U(rng); };
  const double S = static_cast<double>(size);
  const double mid = (S - 1.0) / 2.0;

  Phantom ph;
  ph.media.a = uni(0.25, 0.36) * S;
  ph.media.b = ph.media.a * uni(0.7, 1.0);
  ph.media.theta = uni(0.0, std::numbers::pi);
  ph.media.cx = mid + uni(-0.07, 0.07) * S;
  ph.media.cy = mid + uni(-0.07, 0.07) * S;

  for (int attempt = 0;; ++attempt) {
    if (attempt == 1000) throw ConfigError("could not place a lumen inside the media");
    EllipseParams l;
    l.a = ph.media.b * uni(0.5, 0.75);
    l.b = l.a * uni(0.7, 1.0);
    l.theta = uni(0.0, std::numbers::pi);
    l.cx = ph.media.cx + uni(-0.1, 0.1) * ph.media.b;
    l.cy = ph.media.cy + uni(-0.1, 0.1) * ph.media.b;
    if (detail::max_implicit_on(ph.media, l) <= 0.8) {
      ph.lumen = l;
      break;
    }
  }

  const Category cat = opt.artifacts ? kCategories[index % 4] : Category::none;
  Frame& f = ph.frame;
  f.category = cat;
  f.lumen = ellipse_to_mask(ph.lumen, size, size);
  f.media = ellipse_to_mask(ph.media, size, size);

  // Artifact geometry.
  const double shadow_dir = uni(0.0, 2.0 * std::numbers::pi);
  EllipseParams blob;
  {
    const double ang = uni(0.0, 2.0 * std::numbers::pi);
    const double r = cat == Category::bifurcation ? 1.0 : 1.35;
    blob.a = ph.media.b * (cat == Category::bifurcation ? 0.45 : 0.3);
    blob.b = blob.a * uni(0.6, 1.0);
    blob.theta = uni(0.0, std::numbers::pi);
    blob.cx = ph.media.cx + r * ph.media.a * std::cos(ang) * 0.9;
    blob.cy = ph.media.cy + r * ph.media.b * std::sin(ang) * 0.9;
  }

  const double background = uni(0.30, 0.40);
  const double ring = uni(0.70, 0.85);
  const double lumen = uni(0.08, 0.15);
  std::normal_distribution<double> N(0.0, 1.0);
  f.image = GrayImage(size, size);
  for (std::size_t y = 0; y < size; ++y)
    for (std::size_t x = 0; x < size; ++x) {
      const double px = static_cast<double>(x), py = static_cast<double>(y);
      double v = f.lumen(x, y) ? lumen : f.media(x, y) ? ring : background;
      if (cat == Category::shadow && !f.lumen(x, y)) {
        double d = std::atan2(py - ph.lumen.cy, px - ph.lumen.cx) - shadow_dir;
        d = std::remainder(d, 2.0 * std::numbers::pi);
        if (std::abs(d) < 0.3) v *= 0.25;
      }
      if ((cat == Category::side_vessel || cat == Category::bifurcation) && !f.lumen(x, y) &&
          ellipse_implicit(blob, px, py) <= 1.0)
        v = lumen;
      v *= 1.0 + opt.speckle_std * N(rng);
      v += opt.noise_std * N(rng);
      f.image(x, y) = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
  return ph;
}

/// Writes img_NNNN.pgm, lum_NNNN.pgm, med_NNNN.pgm and manifest.tsv into `dir`.
inline std::vector<FrameRecord> synth_phantoms(const std::filesystem::path& dir, std::uint64_t seed,
                                               std::size_t count, std::size_t size,
                                               const PhantomOptions& opt = {}, Split split = Split::train) {
  if (count == 0) throw ConfigError("phantom count must be at least 1");
  if (size == 0 || size % 8 != 0)
    throw ConfigError("phantom size must be a positive multiple of 8, got " + std::to_string(size));
  std::filesystem::create_directories(dir);
  std::vector<FrameRecord> records;
  for (std::size_t i = 0; i < count; ++i) {
    const Phantom ph = make_phantom(seed, i, size, opt);
    char stem[32];
    std::snprintf(stem, sizeof stem, "%04zu.pgm", i);
    FrameRecord r{dir / ("img_" + std::string(stem)), dir / ("lum_" + std::string(stem)),
                  dir / ("med_" + std::string(stem)), ph.frame.category, split};
    write_pgm(ph.frame.image, r.image_path);
    write_mask(ph.frame.lumen, r.lumen_mask_path);
    write_mask(ph.frame.media, r.media_mask_path);
    records.push_back(std::move(r));
  }
  write_manifest(records, dir / "manifest.tsv");
  return records;
}

}  // namespace ivus
