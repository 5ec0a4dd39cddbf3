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

// Encoder/decoder segmentation network.
//
//   enc1 ─────────────────────────────────────────────── skip ──► dec3 ─► head
//    └► enc2 ─────────────────────────────── skip ──► dec2 ──┘
//        └► enc3 ─────────────── skip ──► dec1 ──┘
//            └► enc4 ──── up ─────────┘
//
// Encoding block (enc2..enc4):
//   x ─► [avgpool 2x2 ‖ conv 2x2/2] ─► d ─► main(d) + refine(d)
// Decoding block:
//   prev ─► deconv 2x2 ─► u ─► main([u ‖ skip]) + refine(u)
// main   = main_convs_per_block x (conv 3x3 ─► PReLU ─► BN)
// refine = conv 3x3 ─► PReLU ─► conv 1x1
// head   = conv 5x5 to one channel ─► sigmoid

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "ivusnet/autograd.hpp"
#include "ivusnet/errors.hpp"
#include "ivusnet/nn_ops.hpp"
#include "ivusnet/tensor.hpp"

namespace ivus {

struct ArchConfig {
  /// Output channels of encoding blocks 1-4. Decoding block i outputs block_depths[3 - i].
  std::array<std::size_t, 4> block_depths{64, 128, 256, 512};
  std::size_t main_convs_per_block = 2;
  std::size_t input_channels = 1;
  /// false builds the ablated network without refining branches.
  bool refine = true;

  static ArchConfig paper() { return {}; }
  static ArchConfig tiny() {
    ArchConfig c;
    c.block_depths = {8, 16, 32, 64};
    return c;
  }
  static ArchConfig preset(const std::string& name) {
    if (name == "paper") return paper();
    if (name == "tiny") return tiny();
    throw ConfigError("unknown architecture preset '" + name + "' (expected paper or tiny)");
  }

  void validate() const {
    for (auto d : block_depths)
      if (d == 0) throw ConfigError("block depths must be positive");
    if (main_convs_per_block == 0) throw ConfigError("main_convs_per_block must be positive");
    if (input_channels == 0) throw ConfigError("input_channels must be positive");
  }

  /// key=value lines, the checkpoint's config block.
  std::string to_kv() const {
    std::ostringstream os;
    os << "block_depths=" << block_depths[0] << ',' << block_depths[1] << ',' << block_depths[2]
       << ',' << block_depths[3] << '\n'
       << "main_convs_per_block=" << main_convs_per_block << '\n'
       << "input_channels=" << input_channels << '\n'
       << "refine=" << (refine ? 1 : 0) << '\n';
    return os.str();
  }

  static ArchConfig from_kv(const std::string& text) {
    std::map<std::string, std::string> kv;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw ConfigError("config line without '=': " + line);
      kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
    auto need = [&](const std::string& k) -> const std::string& {
      auto it = kv.find(k);
      if (it == kv.end()) throw ConfigError("config is missing key '" + k + "'");
      return it->second;
    };
    auto to_size = [](const std::string& s) -> std::size_t {
      std::size_t pos = 0;
      unsigned long long v = 0;
      try {
        v = std::stoull(s, &pos);
      } catch (const std::exception&) {
        throw ConfigError("expected an integer, got '" + s + "'");
      }
      if (pos != s.size()) throw ConfigError("expected an integer, got '" + s + "'");
      return static_cast<std::size_t>(v);
    };
    ArchConfig c;
    std::istringstream ds(need("block_depths"));
    std::string tok;
    std::size_t i = 0;
    while (std::getline(ds, tok, ',')) {
      if (i == 4) throw ConfigError("block_depths needs exactly 4 entries");
      c.block_depths[i++] = to_size(tok);
    }
    if (i != 4) throw ConfigError("block_depths needs exactly 4 entries");
    c.main_convs_per_block = to_size(need("main_convs_per_block"));
    c.input_channels = to_size(need("input_channels"));
    c.refine = to_size(need("refine")) != 0;
    c.validate();
    return c;
  }

  friend bool operator==(const ArchConfig&, const ArchConfig&) = default;
};

namespace layers {

/// Glorot-uniform initializer shared by every layer of one network. Kernels
/// are (out, in, kh, kw); fans count the receptive field on both sides.
class Initializer {
 public:
  explicit Initializer(std::uint64_t seed) : rng_(seed) {}

  template <class T>
  Tensor<T> glorot_uniform(Shape shape) {
    const std::size_t field = shape[2] * shape[3];
    const double fans = static_cast<double>((shape[0] + shape[1]) * field);
    const double bound = std::sqrt(6.0 / fans);
    std::uniform_real_distribution<double> u(-bound, bound);
    Tensor<T> t(std::move(shape));
    for (auto& v : t.data()) v = static_cast<T>(u(rng_));
    return t;
  }

 private:
  std::mt19937_64 rng_;
};

template <class T>
using ParamVisitor = std::function<void(const std::string&, Parameter<T>&)>;
template <class T>
using BufferVisitor = std::function<void(const std::string&, std::vector<T>&)>;

template <class T>
struct Conv2d {
  Parameter<T> weight;
  Parameter<T> bias;
  ConvSpec spec;

  Conv2d() = default;
  Conv2d(Initializer& init, std::size_t in, std::size_t out, std::size_t k, ConvSpec s = {})
      : weight(init.glorot_uniform<T>(Shape{out, in, k, k})),
        bias(Tensor<T>::zeros(Shape{out})),
        spec(s) {}

  Var<T> operator()(Tape<T>& t, const Var<T>& x) {
    return conv2d(x, t.parameter(weight), t.parameter(bias), spec);
  }
  void visit(const std::string& p, const ParamVisitor<T>& f) {
    f(p + ".weight", weight);
    f(p + ".bias", bias);
  }
};

template <class T>
struct Deconv2x2 {
  Parameter<T> weight;
  Parameter<T> bias;

  Deconv2x2() = default;
  Deconv2x2(Initializer& init, std::size_t in, std::size_t out)
      : weight(init.glorot_uniform<T>(Shape{out, in, 2, 2})), bias(Tensor<T>::zeros(Shape{out})) {}

  Var<T> operator()(Tape<T>& t, const Var<T>& x) {
    return deconv2d_2x2(x, t.parameter(weight), t.parameter(bias));
  }
  void visit(const std::string& p, const ParamVisitor<T>& f) {
    f(p + ".weight", weight);
    f(p + ".bias", bias);
  }
};

template <class T>
struct PReLU {
  Parameter<T> alpha;

  PReLU() = default;
  explicit PReLU(std::size_t channels) : alpha(Tensor<T>(Shape{channels}, T(0.25))) {}

  Var<T> operator()(Tape<T>& t, const Var<T>& x) { return prelu(x, t.parameter(alpha)); }
  void visit(const std::string& p, const ParamVisitor<T>& f) { f(p + ".alpha", alpha); }
};

template <class T>
struct BatchNorm {
  Parameter<T> gamma;
  Parameter<T> beta;
  BatchNormStats<T> stats;

  BatchNorm() = default;
  explicit BatchNorm(std::size_t channels)
      : gamma(Tensor<T>(Shape{channels}, T{1})),
        beta(Tensor<T>::zeros(Shape{channels})),
        stats(channels) {}

  Var<T> operator()(Tape<T>& t, const Var<T>& x, Mode mode) {
    return batchnorm(x, t.parameter(gamma), t.parameter(beta), stats, mode);
  }
  void visit(const std::string& p, const ParamVisitor<T>& f) {
    f(p + ".gamma", gamma);
    f(p + ".beta", beta);
  }
  void visit_buffers(const std::string& p, const BufferVisitor<T>& f) {
    f(p + ".running_mean", stats.running_mean);
    f(p + ".running_var", stats.running_var);
  }
};

/// One main-branch layer: conv 3x3 -> PReLU -> BN.
template <class T>
struct MainLayer {
  Conv2d<T> conv;
  PReLU<T> act;
  BatchNorm<T> bn;

  MainLayer() = default;
  MainLayer(Initializer& init, std::size_t in, std::size_t out)
      : conv(init, in, out, 3), act(out), bn(out) {}

  Var<T> operator()(Tape<T>& t, const Var<T>& x, Mode mode) { return bn(t, act(t, conv(t, x)), mode); }
  void visit(const std::string& p, const ParamVisitor<T>& f) {
    conv.visit(p + ".conv", f);
    act.visit(p + ".prelu", f);
    bn.visit(p + ".bn", f);
  }
};

template <class T>
struct MainBranch {
  std::vector<MainLayer<T>> layers;

  MainBranch() = default;
  MainBranch(Initializer& init, std::size_t in, std::size_t out, std::size_t count) {
    for (std::size_t i = 0; i < count; ++i) layers.emplace_back(init, i == 0 ? in : out, out);
  }

  Var<T> operator()(Tape<T>& t, Var<T> x, Mode mode) {
    for (auto& l : layers) x = l(t, x, mode);
    return x;
  }
  void visit(const std::string& p, const ParamVisitor<T>& f) {
    for (std::size_t i = 0; i < layers.size(); ++i) layers[i].visit(p + std::to_string(i), f);
  }
  void visit_buffers(const std::string& p, const BufferVisitor<T>& f) {
    for (std::size_t i = 0; i < layers.size(); ++i)
      layers[i].bn.visit_buffers(p + std::to_string(i) + ".bn", f);
  }
};

/// conv 3x3 -> PReLU -> conv 1x1, no normalization.
template <class T>
struct RefineBranch {
  Conv2d<T> conv3;
  PReLU<T> act;
  Conv2d<T> conv1;

  RefineBranch() = default;
  RefineBranch(Initializer& init, std::size_t in, std::size_t out)
      : conv3(init, in, out, 3), act(out), conv1(init, out, out, 1) {}

  Var<T> operator()(Tape<T>& t, const Var<T>& x) { return conv1(t, act(t, conv3(t, x))); }
  void visit(const std::string& p, const ParamVisitor<T>& f) {
    conv3.visit(p + ".conv3", f);
    act.visit(p + ".prelu", f);
    conv1.visit(p + ".conv1", f);
  }
};

template <class T>
struct EncodingBlock {
  std::optional<Conv2d<T>> down;  // absent in the first block
  MainBranch<T> main;
  std::optional<RefineBranch<T>> refine;

  EncodingBlock() = default;
  EncodingBlock(Initializer& init, std::size_t in, std::size_t out, bool downsample,
                const ArchConfig& cfg) {
    std::size_t branch_in = in;
    if (downsample) {
      down.emplace(init, in, in, 2, ConvSpec{2, Padding::valid});
      branch_in = 2 * in;
    }
    main = MainBranch<T>(init, branch_in, out, cfg.main_convs_per_block);
    if (cfg.refine) refine.emplace(init, branch_in, out);
  }

  Var<T> operator()(Tape<T>& t, const Var<T>& x, Mode mode) {
    Var<T> d = down ? concat_channels(avgpool_2x2(x), (*down)(t, x)) : x;
    Var<T> m = main(t, d, mode);
    return refine ? add(m, (*refine)(t, d)) : m;
  }
  void visit(const std::string& p, const ParamVisitor<T>& f) {
    if (down) down->visit(p + ".down", f);
    main.visit(p + ".main", f);
    if (refine) refine->visit(p + ".refine", f);
  }
  void visit_buffers(const std::string& p, const BufferVisitor<T>& f) {
    main.visit_buffers(p + ".main", f);
  }
};

template <class T>
struct DecodingBlock {
  Deconv2x2<T> up;
  MainBranch<T> main;
  std::optional<RefineBranch<T>> refine;

  DecodingBlock() = default;
  DecodingBlock(Initializer& init, std::size_t prev, std::size_t out, const ArchConfig& cfg)
      : up(init, prev, out), main(init, 2 * out, out, cfg.main_convs_per_block) {
    if (cfg.refine) refine.emplace(init, out, out);
  }

  Var<T> operator()(Tape<T>& t, const Var<T>& prev, const Var<T>& skip, Mode mode) {
    Var<T> u = up(t, prev);
    Var<T> m = main(t, concat_channels(u, skip), mode);
    return refine ? add(m, (*refine)(t, u)) : m;
  }
  void visit(const std::string& p, const ParamVisitor<T>& f) {
    up.visit(p + ".up", f);
    main.visit(p + ".main", f);
    if (refine) refine->visit(p + ".refine", f);
  }
  void visit_buffers(const std::string& p, const BufferVisitor<T>& f) {
    main.visit_buffers(p + ".main", f);
  }
};

}  // namespace layers

/// The segmentation network. Parameters are addressable by hierarchical names
/// such as "enc2.main0.conv.weight" or "dec1.refine.conv1.bias".
template <class T>
class Network {
 public:
  Network() = default;

  Network(const ArchConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    cfg.validate();
    layers::Initializer init(seed);
    const auto& d = cfg.block_depths;
    enc_[0] = layers::EncodingBlock<T>(init, cfg.input_channels, d[0], false, cfg);
    for (std::size_t b = 1; b < 4; ++b)
      enc_[b] = layers::EncodingBlock<T>(init, d[b - 1], d[b], true, cfg);
    for (std::size_t j = 0; j < 3; ++j)
      dec_[j] = layers::DecodingBlock<T>(init, d[3 - j], d[2 - j], cfg);
    head_ = layers::Conv2d<T>(init, d[0], 1, 5);
  }

  const ArchConfig& config() const noexcept { return cfg_; }

  /// Probability map with the input's batch and spatial size and one channel.
  Var<T> forward(Tape<T>& t, const Var<T>& image, Mode mode) {
    const auto& s = image.shape();
    if (s.size() != 4 || s[1] != cfg_.input_channels)
      throw DimensionError("network input must be (batch, " + std::to_string(cfg_.input_channels) +
                           ", H, W), got " + shape_str(s));
    if (s[2] % 8 != 0 || s[3] % 8 != 0)
      throw DimensionError("input height and width must be divisible by 8, got " +
                           std::to_string(s[2]) + "x" + std::to_string(s[3]));
    std::array<Var<T>, 4> skips;
    Var<T> x = image;
    for (std::size_t b = 0; b < 4; ++b) skips[b] = x = enc_[b](t, x, mode);
    for (std::size_t j = 0; j < 3; ++j) x = dec_[j](t, x, skips[2 - j], mode);
    return sigmoid(head_(t, x));
  }

  /// Inference-mode forward pass without gradient bookkeeping.
  Tensor<T> predict(const Tensor<T>& image) {
    Tape<T> tape(false);
    return forward(tape, tape.constant(image), Mode::infer).value();
  }

  void visit_parameters(const layers::ParamVisitor<T>& f) {
    for (std::size_t b = 0; b < 4; ++b) enc_[b].visit("enc" + std::to_string(b + 1), f);
    for (std::size_t j = 0; j < 3; ++j) dec_[j].visit("dec" + std::to_string(j + 1), f);
    head_.visit("head", f);
  }

  void visit_buffers(const layers::BufferVisitor<T>& f) {
    for (std::size_t b = 0; b < 4; ++b) enc_[b].visit_buffers("enc" + std::to_string(b + 1), f);
    for (std::size_t j = 0; j < 3; ++j) dec_[j].visit_buffers("dec" + std::to_string(j + 1), f);
  }

  std::vector<Parameter<T>*> parameters() {
    std::vector<Parameter<T>*> out;
    visit_parameters([&](const std::string&, Parameter<T>& p) { out.push_back(&p); });
    return out;
  }

  std::size_t parameter_count() {
    std::size_t n = 0;
    visit_parameters([&](const std::string&, Parameter<T>& p) { n += p.value.numel(); });
    return n;
  }

  void zero_grad() {
    visit_parameters([](const std::string&, Parameter<T>& p) { p.zero_grad(); });
  }

 private:
  ArchConfig cfg_;
  std::array<layers::EncodingBlock<T>, 4> enc_;
  std::array<layers::DecodingBlock<T>, 3> dec_;
  layers::Conv2d<T> head_;
};

/// Randomly initialized network; identical (cfg, seed) give identical weights.
template <class T = float>
Network<T> build_network(const ArchConfig& cfg, std::uint64_t seed) {
  return Network<T>(cfg, seed);
}

}  // namespace ivus
