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

#include <algorithm>
#include <array>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "ivusnet/errors.hpp"
#include "ivusnet/image.hpp"

namespace ivus {

enum class Flip { none, lr, ud, both };
inline constexpr std::array<Flip, 4> kFlips = {Flip::none, Flip::lr, Flip::ud, Flip::both};

template <class P>
Grid<P> flip(const Grid<P>& g, Flip f) {
  const bool fx = f == Flip::lr || f == Flip::both;
  const bool fy = f == Flip::ud || f == Flip::both;
  Grid<P> out(g.width, g.height);
  for (std::size_t y = 0; y < g.height; ++y)
    for (std::size_t x = 0; x < g.width; ++x)
      out(x, y) = g(fx ? g.width - 1 - x : x, fy ? g.height - 1 - y : y);
  return out;
}

template <class P>
Grid<P> flip_lr(const Grid<P>& g) { return flip(g, Flip::lr); }
template <class P>
Grid<P> flip_ud(const Grid<P>& g) { return flip(g, Flip::ud); }
template <class P>
Grid<P> flip_both(const Grid<P>& g) { return flip(g, Flip::both); }

/// Image and both masks flipped together.
inline Frame flip(const Frame& f, Flip k) {
  return {flip(f.image, k), flip(f.lumen, k), flip(f.media, k), f.category};
}
inline Frame flip_lr(const Frame& f) { return flip(f, Flip::lr); }
inline Frame flip_ud(const Frame& f) { return flip(f, Flip::ud); }
inline Frame flip_both(const Frame& f) { return flip(f, Flip::both); }

/// Adds i.i.d. N(0, sigma^2) per pixel and clamps to [0, 1].
inline GrayImage add_gaussian_noise(const GrayImage& img, double sigma, std::uint64_t seed) {
  if (sigma < 0.0) throw ConfigError("noise sigma must be >= 0");
  if (sigma == 0.0) return img;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> N(0.0, sigma);
  GrayImage out = img;
  for (auto& v : out.pixels) v = static_cast<float>(std::clamp(static_cast<double>(v) + N(rng), 0.0, 1.0));
  return out;
}

inline GrayImage blackout(const GrayImage& img) { return GrayImage(img.width, img.height, 0.0f); }

struct AugmentConfig {
  double noise_sigma = 0.10;
  double blackout_prob = 0.05;
  double noise_prob = 0.5;
  std::uint64_t seed = 1;

  void validate() const {
    if (!(noise_sigma >= 0.0)) throw ConfigError("noise_sigma must be >= 0");
    if (!(blackout_prob >= 0.0 && blackout_prob <= 1.0)) throw ConfigError("blackout_prob must be in [0,1]");
    if (!(noise_prob >= 0.0 && noise_prob <= 1.0)) throw ConfigError("noise_prob must be in [0,1]");
  }
};

/// One entry of an epoch stream: which record, which flip, which corruption.
struct AugSample {
  std::size_t record = 0;
  Flip flip = Flip::none;
  bool noise = false;
  std::uint64_t noise_seed = 0;
  bool blackout = false;

  friend bool operator==(const AugSample&, const AugSample&) = default;
};

/// The four flip variants of each of `record_count` records, each corrupted
/// independently, then shuffled. Depends only on (cfg, epoch, record_count).
inline std::vector<AugSample> build_epoch_stream(std::size_t record_count, const AugmentConfig& cfg,
                                                 std::uint64_t epoch) {
  if (record_count == 0) throw ContractError("epoch stream needs at least one record");
  cfg.validate();
  std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32),
                    static_cast<std::uint32_t>(epoch), static_cast<std::uint32_t>(epoch >> 32)};
  std::mt19937_64 rng(seq);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  std::vector<AugSample> out;
  out.reserve(4 * record_count);
  for (std::size_t r = 0; r < record_count; ++r)
    for (Flip f : kFlips) {
      AugSample s{r, f};
      s.noise = U(rng) < cfg.noise_prob;
      s.noise_seed = rng();
      s.blackout = U(rng) < cfg.blackout_prob;
      out.push_back(s);
    }
  std::shuffle(out.begin(), out.end(), rng);
  return out;
}

/// Unaugmented originals in a per-epoch shuffled order.
inline std::vector<AugSample> build_plain_stream(std::size_t record_count, std::uint64_t seed,
                                                 std::uint64_t epoch) {
  if (record_count == 0) throw ContractError("epoch stream needs at least one record");
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(epoch), static_cast<std::uint32_t>(epoch >> 32), 1u};
  std::mt19937_64 rng(seq);
  std::vector<AugSample> out(record_count);
  for (std::size_t r = 0; r < record_count; ++r) out[r].record = r;
  std::shuffle(out.begin(), out.end(), rng);
  return out;
}

/// Materializes a stream entry. Masks only see the flip.
inline Frame apply_sample(const Frame& src, const AugSample& s, const AugmentConfig& cfg) {
  Frame f = flip(src, s.flip);
  if (s.noise) f.image = add_gaussian_noise(f.image, cfg.noise_sigma, s.noise_seed);
  if (s.blackout) f.image = blackout(f.image);
  return f;
}

}  // namespace ivus
