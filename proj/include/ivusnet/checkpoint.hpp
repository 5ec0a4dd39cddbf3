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

// Checkpoint layout, all integers little-endian:
//
//   "IVN1" | u32 version | u32 config length | config (key=value lines)
//   u32 tensor count
//   per tensor: u16 name length | name | u8 ndim | ndim x u32 dims | f32 values
//
// Tensors are the trainable parameters followed by the batch-norm running
// statistics, in the network's visiting order.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "ivusnet/arch.hpp"
#include "ivusnet/binary_io.hpp"
#include "ivusnet/errors.hpp"

namespace ivus {

inline constexpr char kCheckpointMagic[4] = {'I', 'V', 'N', '1'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Serializes parameters and batch-norm statistics of `net`.
inline std::vector<char> encode_checkpoint(Network<float>& net) {
  detail::ByteWriter w;
  for (char c : kCheckpointMagic) w.u8(static_cast<std::uint8_t>(c));
  w.u32(kCheckpointVersion);
  const std::string cfg = net.config().to_kv();
  w.u32(static_cast<std::uint32_t>(cfg.size()));
  w.bytes(cfg);

  struct Entry {
    std::string name;
    Shape shape;
    const float* data;
  };
  std::vector<Entry> entries;
  net.visit_parameters([&](const std::string& name, Parameter<float>& p) {
    entries.push_back({name, p.value.shape(), p.value.ptr()});
  });
  net.visit_buffers([&](const std::string& name, std::vector<float>& b) {
    entries.push_back({name, Shape{b.size()}, b.data()});
  });
  w.u32(static_cast<std::uint32_t>(entries.size()));
  for (const auto& e : entries) {
    w.u16(static_cast<std::uint16_t>(e.name.size()));
    w.bytes(e.name);
    w.u8(static_cast<std::uint8_t>(e.shape.size()));
    for (auto d : e.shape) w.u32(static_cast<std::uint32_t>(d));
    const std::size_t n = shape_numel(e.shape);
    for (std::size_t i = 0; i < n; ++i) w.f32(e.data[i]);
  }
  return w.buffer();
}

/// Rebuilds a network from checkpoint bytes. Every tensor the configuration
/// implies must be present exactly once with a matching shape.
inline Network<float> decode_checkpoint(std::vector<char> bytes) {
  detail::ByteReader r(std::move(bytes));
  for (char c : kCheckpointMagic) {
    const std::size_t at = r.offset();
    if (r.u8() != static_cast<std::uint8_t>(c)) throw FormatError("bad checkpoint magic", at);
  }
  {
    const std::size_t at = r.offset();
    const auto version = r.u32();
    if (version != kCheckpointVersion)
      throw FormatError("unsupported checkpoint version " + std::to_string(version), at);
  }
  const std::size_t cfg_at = r.offset();
  const auto cfg_len = r.u32();
  ArchConfig cfg;
  try {
    cfg = ArchConfig::from_kv(r.bytes(cfg_len));
  } catch (const ConfigError& e) {
    throw FormatError(std::string("bad config block: ") + e.what(), cfg_at);
  }
  Network<float> net(cfg, 0);

  struct Slot {
    Shape shape;
    float* data;
    bool seen = false;
  };
  std::map<std::string, Slot> slots;
  net.visit_parameters([&](const std::string& name, Parameter<float>& p) {
    slots[name] = Slot{p.value.shape(), p.value.ptr()};
  });
  net.visit_buffers([&](const std::string& name, std::vector<float>& b) {
    slots[name] = Slot{Shape{b.size()}, b.data()};
  });

  const std::size_t count_at = r.offset();
  const auto count = r.u32();
  if (count != slots.size())
    throw FormatError("checkpoint holds " + std::to_string(count) + " tensors, configuration needs " +
                          std::to_string(slots.size()),
                      count_at);
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::size_t at = r.offset();
    const std::string name = r.bytes(r.u16());
    auto it = slots.find(name);
    if (it == slots.end() || it->second.seen)
      throw FormatError("unexpected tensor '" + name + "'", at);
    const auto ndim = r.u8();
    Shape shape;
    for (std::uint8_t d = 0; d < ndim; ++d) shape.push_back(r.u32());
    if (shape != it->second.shape)
      throw FormatError("tensor '" + name + "' has shape " + shape_str(shape) + ", expected " +
                            shape_str(it->second.shape),
                        at);
    const std::size_t n = shape_numel(shape);
    for (std::size_t k = 0; k < n; ++k) it->second.data[k] = r.f32();
    it->second.seen = true;
  }
  if (!r.at_end()) throw FormatError("trailing bytes after last tensor", r.offset());
  return net;
}

inline void save_checkpoint(Network<float>& net, const std::filesystem::path& path) {
  detail::write_file(path, encode_checkpoint(net));
}

inline Network<float> load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(detail::read_file(path));
}

}  // namespace ivus
