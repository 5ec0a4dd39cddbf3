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

#include <filesystem>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "ivusnet/ellipse.hpp"
#include "ivusnet/image.hpp"

namespace testutil {

/// Directory removed on scope exit.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("ivusnet_" + tag + "_" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::vector<std::pair<double, double>> pairs(const ivus::Contour& c) {
  std::vector<std::pair<double, double>> out;
  for (const auto& p : c) out.emplace_back(p.x, p.y);
  return out;
}

inline ivus::BinaryMask random_mask(std::mt19937_64& rng, std::size_t w, std::size_t h, double density) {
  std::bernoulli_distribution b(density);
  ivus::BinaryMask m(w, h);
  for (auto& v : m.pixels) v = b(rng) ? 1 : 0;
  return m;
}

}  // namespace testutil
