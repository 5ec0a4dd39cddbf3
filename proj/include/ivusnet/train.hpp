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
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "ivusnet/arch.hpp"
#include "ivusnet/augment.hpp"
#include "ivusnet/autograd.hpp"
#include "ivusnet/errors.hpp"
#include "ivusnet/image.hpp"
#include "ivusnet/metrics.hpp"
#include "ivusnet/nn_ops.hpp"
#include "ivusnet/postprocess.hpp"

namespace ivus {

struct TrainConfig {
  Target target = Target::lumen;
  double learning_rate = 1e-4;
  std::size_t batch_size = 6;
  std::size_t epochs = 96;
  std::size_t iterations_per_epoch = 144;  // capped at the batches one epoch provides
  std::size_t validation_count = 10;
  std::uint64_t seed = 1;
  bool augment = true;
  float threshold = kDefaultThreshold;

  void validate() const {
    if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
    if (batch_size == 0) throw ConfigError("batch size must be positive");
    if (epochs == 0) throw ConfigError("epochs must be positive");
    if (iterations_per_epoch == 0) throw ConfigError("iterations per epoch must be positive");
    if (validation_count == 0) throw ConfigError("validation count must be positive");
  }

  std::string describe() const {
    std::ostringstream os;
    os << "target=" << to_string(target) << " lr=" << learning_rate << " batch=" << batch_size
       << " epochs=" << epochs << " iterations=" << iterations_per_epoch
       << " validation=" << validation_count << " seed=" << seed << " augment=" << (augment ? 1 : 0)
       << " threshold=" << threshold;
    return os.str();
  }
};

/// Adam with bias correction and a constant step size.
struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t step = 0;
  std::vector<Tensor<float>> m;
  std::vector<Tensor<float>> v;
};

inline void adam_step(std::span<Parameter<float>* const> params, AdamState& st, double lr) {
  if (st.m.empty()) {
    for (auto* p : params) {
      st.m.push_back(Tensor<float>::zeros(p->value.shape()));
      st.v.push_back(Tensor<float>::zeros(p->value.shape()));
    }
  }
  if (st.m.size() != params.size())
    throw ContractError("adam state tracks " + std::to_string(st.m.size()) + " tensors, got " +
                        std::to_string(params.size()));
  for (std::size_t i = 0; i < params.size(); ++i)
    if (params[i]->value.shape() != st.m[i].shape() || params[i]->grad.shape() != st.m[i].shape())
      throw ContractError("adam shape mismatch for tensor " + std::to_string(i) + ": " +
                          shape_str(params[i]->value.shape()) + " vs state " + shape_str(st.m[i].shape()));
  ++st.step;
  const double t = static_cast<double>(st.step);
  const float b1 = static_cast<float>(st.beta1), b2 = static_cast<float>(st.beta2);
  const float c1 = static_cast<float>(1.0 / (1.0 - std::pow(st.beta1, t)));
  const float c2 = static_cast<float>(1.0 / (1.0 - std::pow(st.beta2, t)));
  const float step = static_cast<float>(lr), eps = static_cast<float>(st.eps);
  for (std::size_t i = 0; i < params.size(); ++i) {
    float* w = params[i]->value.ptr();
    const float* g = params[i]->grad.ptr();
    float* m = st.m[i].ptr();
    float* v = st.v[i].ptr();
    const std::size_t n = st.m[i].numel();
    for (std::size_t k = 0; k < n; ++k) {
      m[k] = b1 * m[k] + (1.0f - b1) * g[k];
      v[k] = b2 * v[k] + (1.0f - b2) * g[k] * g[k];
      w[k] -= step * (m[k] * c1) / (std::sqrt(v[k] * c2) + eps);
    }
  }
}

struct EpochStats {
  std::size_t epoch = 0;  // 1-based
  double loss = 0.0;      // mean batch loss
  double val_jm = 0.0;    // thresholded maps, no contour extraction
  double learning_rate = 0.0;
  std::size_t iterations = 0;
};

struct TrainHistory {
  double initial_val_jm = 0.0;  // before the first update
  std::vector<EpochStats> epochs;
  std::vector<std::size_t> validation_indices;

  std::string to_csv() const {
    std::ostringstream os;
    os.precision(9);
    os << "epoch,loss,val_jm\n";
    for (const auto& e : epochs) os << e.epoch << ',' << e.loss << ',' << e.val_jm << '\n';
    return os.str();
  }
};

inline void write_history(const TrainHistory& h, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << h.to_csv();
}

inline Tensor<float> image_tensor(const GrayImage& img) {
  return Tensor<float>(Shape{1, 1, img.height, img.width},
                       std::vector<float>(img.pixels.begin(), img.pixels.end()));
}

inline ProbMap prob_map(const Tensor<float>& t) {
  if (t.rank() != 4 || t.dim(0) != 1 || t.dim(1) != 1)
    throw DimensionError("expected a (1,1,H,W) probability tensor, got " + shape_str(t.shape()));
  ProbMap p(t.dim(3), t.dim(2));
  std::copy(t.ptr(), t.ptr() + t.numel(), p.pixels.begin());
  return p;
}

inline ProbMap predict_map(Network<float>& net, const GrayImage& img) {
  return prob_map(net.predict(image_tensor(img)));
}

/// Mean over frames of JM between the thresholded map and the target mask.
inline double mean_jaccard(Network<float>& net, std::span<const Frame> frames, Target target,
                           float threshold = kDefaultThreshold) {
  if (frames.empty()) return 0.0;
  double s = 0.0;
  for (const auto& f : frames) s += jaccard(binarize(predict_map(net, f.image), threshold), f.mask(target));
  return s / static_cast<double>(frames.size());
}

/// Indices of the validation frames: a seeded choice of `count` out of `n`.
inline std::vector<std::size_t> choose_validation(std::size_t n, std::size_t count, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), 0x76616cu};
  std::mt19937_64 rng(seq);
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(count);
  std::sort(idx.begin(), idx.end());
  return idx;
}

struct TrainResult {
  Network<float> net;
  TrainHistory history;
};

using EpochCallback = std::function<void(const EpochStats&)>;

/// Trains one model on `frames`. A seeded subset of validation_count
/// original frames is held out for monitoring and never used for updates.
inline TrainResult train_model(std::span<const Frame> frames, const ArchConfig& arch, const TrainConfig& tcfg,
                               const AugmentConfig& acfg, const EpochCallback& on_epoch = {}) {
  tcfg.validate();
  acfg.validate();
  if (frames.size() < tcfg.validation_count + 1)
    throw ConfigError("training needs at least " + std::to_string(tcfg.validation_count + 1) +
                      " frames, got " + std::to_string(frames.size()));
  for (const auto& f : frames)
    if (!f.image.same_dims(frames[0].image))
      throw DimensionError("training frames must share one size");

  TrainResult res{Network<float>(arch, tcfg.seed), {}};
  auto& net = res.net;
  auto& hist = res.history;
  hist.validation_indices = choose_validation(frames.size(), tcfg.validation_count, tcfg.seed);
  std::vector<Frame> val, train;
  for (std::size_t i = 0, v = 0; i < frames.size(); ++i) {
    if (v < hist.validation_indices.size() && hist.validation_indices[v] == i) {
      val.push_back(frames[i]);
      ++v;
    } else {
      train.push_back(frames[i]);
    }
  }
  hist.initial_val_jm = mean_jaccard(net, val, tcfg.target, tcfg.threshold);

  const std::size_t H = frames[0].image.height, W = frames[0].image.width;
  AdamState adam;
  for (std::size_t epoch = 1; epoch <= tcfg.epochs; ++epoch) {
    const auto stream = tcfg.augment ? build_epoch_stream(train.size(), acfg, epoch)
                                     : build_plain_stream(train.size(), acfg.seed, epoch);
    const std::size_t available = (stream.size() + tcfg.batch_size - 1) / tcfg.batch_size;
    const std::size_t iters = std::min(tcfg.iterations_per_epoch, available);
    double loss_sum = 0.0;
    for (std::size_t it = 0; it < iters; ++it) {
      const std::size_t b0 = it * tcfg.batch_size;
      const std::size_t b1 = std::min(b0 + tcfg.batch_size, stream.size());
      const std::size_t B = b1 - b0;
      Tensor<float> x(Shape{B, 1, H, W}, uninitialized), y(Shape{B, 1, H, W}, uninitialized);
      for (std::size_t b = 0; b < B; ++b) {
        const AugSample& s = stream[b0 + b];
        const Frame f = tcfg.augment ? apply_sample(train[s.record], s, acfg) : train[s.record];
        const BinaryMask& m = f.mask(tcfg.target);
        std::copy(f.image.pixels.begin(), f.image.pixels.end(), x.ptr() + b * H * W);
        for (std::size_t k = 0; k < H * W; ++k) y[b * H * W + k] = static_cast<float>(m.pixels[k]);
      }
      net.zero_grad();
      Tape<float> tape;
      const auto pred = net.forward(tape, tape.constant(std::move(x)), Mode::train);
      const auto loss = bce_loss(pred, tape.constant(std::move(y)));
      loss_sum += loss.value()[0];
      tape.backward(loss);
      adam_step(net.parameters(), adam, tcfg.learning_rate);
    }
    EpochStats st;
    st.epoch = epoch;
    st.iterations = iters;
    st.loss = loss_sum / static_cast<double>(iters);
    st.val_jm = mean_jaccard(net, val, tcfg.target, tcfg.threshold);
    st.learning_rate = tcfg.learning_rate;
    hist.epochs.push_back(st);
    if (on_epoch) on_epoch(st);
  }
  return res;
}

/// Mean of the models' probability maps. Each pixel's values are summed in
/// sorted order, so the result does not depend on the order of `models`.
inline ProbMap ensemble_predict(std::span<Network<float>* const> models, const GrayImage& img) {
  if (models.empty()) throw ContractError("ensemble_predict needs at least one model");
  std::vector<ProbMap> maps;
  maps.reserve(models.size());
  for (auto* m : models) maps.push_back(predict_map(*m, img));
  if (maps.size() == 1) return maps[0];
  ProbMap out(img.width, img.height);
  std::vector<float> vals(maps.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    for (std::size_t k = 0; k < maps.size(); ++k) vals[k] = maps[k].pixels[i];
    std::sort(vals.begin(), vals.end());
    double s = 0.0;
    for (float v : vals) s += v;
    out.pixels[i] = static_cast<float>(s / static_cast<double>(vals.size()));
  }
  return out;
}

inline ProbMap ensemble_predict(std::vector<Network<float>>& models, const GrayImage& img) {
  std::vector<Network<float>*> ptrs;
  for (auto& m : models) ptrs.push_back(&m);
  return ensemble_predict(std::span<Network<float>* const>(ptrs), img);
}

}  // namespace ivus
