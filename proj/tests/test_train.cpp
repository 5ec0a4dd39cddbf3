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

#include <algorithm>
#include <cstring>

#include "ivusnet/checkpoint.hpp"
#include "ivusnet/phantom.hpp"
#include "ivusnet/train.hpp"
#include "test_util.hpp"

using namespace ivus;

namespace {

std::vector<Frame> phantoms(std::uint64_t seed, std::size_t n, std::size_t size) {
  std::vector<Frame> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(make_phantom(seed, i, size).frame);
  return out;
}

TrainConfig quick(std::uint64_t seed, std::size_t epochs) {
  TrainConfig c;
  c.seed = seed;
  c.epochs = epochs;
  c.validation_count = 2;
  return c;
}

Parameter<float> param(std::vector<float> value, std::vector<float> grad) {
  Parameter<float> p(Tensor<float>(Shape{value.size()}, std::move(value)));
  p.grad = Tensor<float>(Shape{grad.size()}, std::move(grad));
  return p;
}

}  // namespace

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
  auto p = param({1.0f, -2.0f, 3.0f}, {0.0f, 0.0f, 0.0f});
  std::vector<Parameter<float>*> ps{&p};
  AdamState st;
  adam_step(ps, st, 1e-3);
  adam_step(ps, st, 1e-3);
  EXPECT_EQ(p.value.data()[1], -2.0f);
  EXPECT_EQ(p.value, Tensor<float>(Shape{3}, std::vector<float>{1.0f, -2.0f, 3.0f}));
  EXPECT_EQ(st.step, 2u);
}

TEST(Adam, FirstStepIsLearningRateTimesSign) {
  auto p = param({0.0f, 0.0f, 0.0f, 0.0f}, {0.5f, -3.0f, 1e-2f, -1e3f});
  std::vector<Parameter<float>*> ps{&p};
  AdamState st;
  const double lr = 1e-4;
  adam_step(ps, st, lr);
  const float sign[] = {-1, 1, -1, 1};
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(p.value[i], sign[i] * lr, lr * 1e-5) << i;
}

TEST(Adam, DeterministicAndShapeChecked) {
  auto a = param({1, 2}, {0.3f, -0.7f}), b = param({1, 2}, {0.3f, -0.7f});
  std::vector<Parameter<float>*> pa{&a}, pb{&b};
  AdamState sa, sb;
  for (int i = 0; i < 5; ++i) {
    adam_step(pa, sa, 1e-2);
    adam_step(pb, sb, 1e-2);
  }
  EXPECT_EQ(a.value, b.value);
  auto c = param({1, 2, 3}, {0, 0, 0});
  std::vector<Parameter<float>*> pc{&c};
  EXPECT_THROW(adam_step(pc, sa, 1e-2), ContractError);
  std::vector<Parameter<float>*> two{&a, &b};
  EXPECT_THROW(adam_step(two, sa, 1e-2), ContractError);
}

TEST(TrainConfig, DefaultsAndValidation) {
  const TrainConfig c;
  EXPECT_EQ(c.learning_rate, 1e-4);
  EXPECT_EQ(c.batch_size, 6u);
  EXPECT_EQ(c.epochs, 96u);
  EXPECT_EQ(c.iterations_per_epoch, 144u);
  EXPECT_NE(c.describe().find("lr=0.0001 batch=6 epochs=96"), std::string::npos);
  TrainConfig bad;
  bad.learning_rate = 0;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = {};
  bad.batch_size = 0;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = {};
  bad.validation_count = 0;
  EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(Validation, SeededSubsetOfRequestedSize) {
  const auto v = choose_validation(20, 5, 3);
  ASSERT_EQ(v.size(), 5u);
  EXPECT_TRUE(std::is_sorted(v.begin(), v.end()));
  EXPECT_EQ(std::adjacent_find(v.begin(), v.end()), v.end());
  EXPECT_LT(v.back(), 20u);
  EXPECT_EQ(v, choose_validation(20, 5, 3));
  EXPECT_NE(v, choose_validation(20, 5, 4));
}

TEST(Train, InsufficientFramesIsConfigError) {
  const auto frames = phantoms(1, 3, 16);
  TrainConfig c = quick(1, 1);
  c.validation_count = 3;
  EXPECT_THROW(train_model(frames, ArchConfig::tiny(), c, AugmentConfig{}), ConfigError);
}

TEST(Train, MixedFrameSizesRejected) {
  auto frames = phantoms(1, 4, 16);
  frames.push_back(make_phantom(1, 9, 24).frame);
  EXPECT_THROW(train_model(frames, ArchConfig::tiny(), quick(1, 1), AugmentConfig{}), DimensionError);
}

TEST(Train, ValidationFramesNeverReachTheOptimizer) {
  const auto frames = phantoms(2, 8, 16);
  const TrainConfig c = quick(5, 2);
  auto a = train_model(frames, ArchConfig::tiny(), c, AugmentConfig{});
  auto scrambled = frames;
  for (std::size_t i : a.history.validation_indices) {
    scrambled[i].image = GrayImage(16, 16, 0.9f);
    scrambled[i].lumen = BinaryMask(16, 16, 1);
  }
  auto b = train_model(scrambled, ArchConfig::tiny(), c, AugmentConfig{});
  EXPECT_EQ(b.history.validation_indices, a.history.validation_indices);
  EXPECT_EQ(encode_checkpoint(a.net), encode_checkpoint(b.net));
}

TEST(Train, SameSeedsGiveBitIdenticalCheckpoints) {
  const auto frames = phantoms(3, 8, 16);
  auto a = train_model(frames, ArchConfig::tiny(), quick(7, 2), AugmentConfig{});
  auto b = train_model(frames, ArchConfig::tiny(), quick(7, 2), AugmentConfig{});
  EXPECT_EQ(encode_checkpoint(a.net), encode_checkpoint(b.net));
  auto c = train_model(frames, ArchConfig::tiny(), quick(8, 2), AugmentConfig{});
  EXPECT_NE(encode_checkpoint(a.net), encode_checkpoint(c.net));
}

TEST(Train, HistoryAndConstantLearningRate) {
  const auto frames = phantoms(4, 8, 16);
  TrainConfig c = quick(1, 3);
  c.learning_rate = 3e-4;
  c.iterations_per_epoch = 2;
  std::size_t calls = 0;
  auto r = train_model(frames, ArchConfig::tiny(), c, AugmentConfig{}, [&](const EpochStats&) { ++calls; });
  EXPECT_EQ(calls, 3u);
  ASSERT_EQ(r.history.epochs.size(), 3u);
  for (std::size_t e = 0; e < 3; ++e) {
    const auto& st = r.history.epochs[e];
    EXPECT_EQ(st.epoch, e + 1);
    EXPECT_EQ(std::memcmp(&st.learning_rate, &c.learning_rate, sizeof(double)), 0);
    EXPECT_EQ(st.iterations, 2u);
    EXPECT_TRUE(std::isfinite(st.loss));
    EXPECT_GE(st.val_jm, 0.0);
    EXPECT_LE(st.val_jm, 1.0);
  }
  const auto csv = r.history.to_csv();
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "epoch,loss,val_jm");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 4);
}

TEST(Train, IterationsCappedByStreamLength) {
  const auto frames = phantoms(4, 5, 16);  // 3 training frames after 2 held out
  TrainConfig c = quick(1, 1);
  c.augment = false;
  auto r = train_model(frames, ArchConfig::tiny(), c, AugmentConfig{});
  EXPECT_EQ(r.history.epochs[0].iterations, 1u);
  c.augment = true;
  auto s = train_model(frames, ArchConfig::tiny(), c, AugmentConfig{});
  EXPECT_EQ(s.history.epochs[0].iterations, 2u);  // 12 samples, batch 6
}

TEST(Train, ShortTrainingImprovesValidationJaccard) {
  const auto frames = phantoms(11, 12, 32);
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    TrainConfig c = quick(seed, 8);
    c.learning_rate = 1e-3;
    AugmentConfig a;
    a.seed = seed;
    auto r = train_model(frames, ArchConfig::tiny(), c, a);
    EXPECT_LT(r.history.initial_val_jm, r.history.epochs.back().val_jm) << "seed " << seed;
  }
}

TEST(Ensemble, CopiesAveragePairsAndPermutations) {
  const GrayImage img = make_phantom(1, 0, 16).frame.image;
  auto a = build_network(ArchConfig::tiny(), 1), b = build_network(ArchConfig::tiny(), 2),
       c = build_network(ArchConfig::tiny(), 3);
  const ProbMap pa = predict_map(a, img), pb = predict_map(b, img);

  std::vector<Network<float>*> same{&a, &a, &a};
  EXPECT_EQ(ensemble_predict(same, img), pa);

  std::vector<Network<float>*> two{&a, &b};
  const ProbMap avg = ensemble_predict(two, img);
  for (std::size_t i = 0; i < avg.size(); ++i) {
    EXPECT_FLOAT_EQ(avg.pixels[i], (pa.pixels[i] + pb.pixels[i]) / 2.0f);
    EXPECT_GT(avg.pixels[i], 0.0f);
    EXPECT_LT(avg.pixels[i], 1.0f);
  }

  std::vector<Network<float>*> abc{&a, &b, &c}, cab{&c, &a, &b}, bca{&b, &c, &a};
  const ProbMap ref = ensemble_predict(abc, img);
  EXPECT_EQ(ensemble_predict(cab, img), ref);
  EXPECT_EQ(ensemble_predict(bca, img), ref);

  std::vector<Network<float>*> none;
  EXPECT_THROW(ensemble_predict(none, img), ContractError);
}
