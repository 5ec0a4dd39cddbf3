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

// Finite-difference checks for every differentiable operation and for a full
// network, shared by the test suite and the `gradcheck` command.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "ivusnet/arch.hpp"
#include "ivusnet/autograd.hpp"
#include "ivusnet/gradcheck.hpp"
#include "ivusnet/nn_ops.hpp"

namespace ivus {

inline constexpr double kOpGradTolerance = 1e-4;
inline constexpr double kNetworkGradTolerance = 1e-3;
inline constexpr std::size_t kGradCheckSeeds = 5;

/// One operation under test: builds inputs for (seed, variant) and the op.
struct GradCase {
  std::string name;
  std::size_t variants = 2;
  std::function<std::vector<Tensor<double>>(std::uint64_t seed, std::size_t variant)> inputs;
  GradCheckFn op;
};

namespace detail {

// Moves entries away from zero so a finite-difference probe never straddles a kink.
inline Tensor<double> away_from_zero(Tensor<double> t, double gap) {
  for (auto& v : t.data()) v = v >= 0 ? v + gap : v - gap;
  return t;
}

inline Tensor<double> uniform_tensor(Shape s, std::uint64_t seed, double lo, double hi) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor<double> t(std::move(s));
  for (auto& v : t.data()) v = u(rng);
  return t;
}

}  // namespace detail

inline std::vector<GradCase> gradcheck_cases() {
  using V = std::vector<Var<double>>;
  using detail::uniform_tensor;
  const Shape a4[2] = {{2, 3, 4, 5}, {1, 2, 6, 6}};
  std::vector<GradCase> cs;

  cs.push_back({"add", 2,
                [=](std::uint64_t s, std::size_t v) {
                  return std::vector{random_tensor(a4[v], s), random_tensor(a4[v], s + 101)};
                },
                [](Tape<double>&, const V& x) { return add(x[0], x[1]); }});
  cs.push_back({"add_bias", 2,
                [=](std::uint64_t s, std::size_t v) {
                  return std::vector{random_tensor(a4[v], s), random_tensor(Shape{a4[v][1]}, s + 101)};
                },
                [](Tape<double>&, const V& x) { return add(x[0], x[1]); }});
  cs.push_back({"mul", 2,
                [=](std::uint64_t s, std::size_t v) {
                  return std::vector{random_tensor(a4[v], s), random_tensor(a4[v], s + 101)};
                },
                [](Tape<double>&, const V& x) { return mul(x[0], x[1]); }});
  cs.push_back({"concat_channels", 2,
                [](std::uint64_t s, std::size_t v) {
                  return v == 0 ? std::vector{random_tensor(Shape{2, 3, 4, 4}, s),
                                              random_tensor(Shape{2, 2, 4, 4}, s + 101)}
                                : std::vector{random_tensor(Shape{1, 1, 6, 2}, s),
                                              random_tensor(Shape{1, 4, 6, 2}, s + 101)};
                },
                [](Tape<double>&, const V& x) { return concat_channels(x[0], x[1]); }});
  cs.push_back({"reduce_sum", 2, [=](std::uint64_t s, std::size_t v) { return std::vector{random_tensor(a4[v], s)}; },
                [](Tape<double>&, const V& x) { return reduce_sum(x[0]); }});
  cs.push_back({"reduce_mean", 2,
                [=](std::uint64_t s, std::size_t v) { return std::vector{random_tensor(a4[v], s)}; },
                [](Tape<double>&, const V& x) { return reduce_mean(x[0]); }});

  // Convolutions: (input shape, Cout, k) per variant; k = 2 means stride-2 valid.
  struct ConvV {
    Shape in;
    std::size_t cout, k;
  };
  auto conv_case = [&](std::string name, std::array<ConvV, 2> vs) {
    cs.push_back({std::move(name), 2,
                  [=](std::uint64_t s, std::size_t v) {
                    const auto& c = vs[v];
                    const double scale = 1.0 / std::sqrt(static_cast<double>(c.in[1] * c.k * c.k));
                    return std::vector{random_tensor(c.in, s), random_tensor(Shape{c.cout, c.in[1], c.k, c.k}, s + 101, scale),
                                       random_tensor(Shape{c.cout}, s + 202)};
                  },
                  [=](Tape<double>&, const V& x) {
                    const std::size_t k = x[1].shape()[2];
                    const ConvSpec spec = k == 2 ? ConvSpec{2, Padding::valid} : ConvSpec{};
                    return conv2d(x[0], x[1], x[2], spec);
                  }});
  };
  conv_case("conv2d_3x3", {ConvV{{2, 3, 5, 6}, 4, 3}, ConvV{{1, 2, 8, 8}, 3, 3}});
  conv_case("conv2d_1x1", {ConvV{{2, 3, 4, 5}, 2, 1}, ConvV{{1, 4, 6, 6}, 3, 1}});
  conv_case("conv2d_5x5", {ConvV{{1, 2, 6, 7}, 3, 5}, ConvV{{2, 3, 8, 8}, 1, 5}});
  conv_case("conv2d_2x2_stride2", {ConvV{{2, 3, 4, 6}, 4, 2}, ConvV{{1, 2, 8, 8}, 2, 2}});

  cs.push_back({"deconv2d_2x2", 2,
                [](std::uint64_t s, std::size_t v) {
                  const Shape in = v == 0 ? Shape{2, 3, 3, 4} : Shape{1, 4, 4, 4};
                  const std::size_t cout = v == 0 ? 2 : 3;
                  return std::vector{random_tensor(in, s), random_tensor(Shape{cout, in[1], 2, 2}, s + 101, 0.5),
                                     random_tensor(Shape{cout}, s + 202)};
                },
                [](Tape<double>&, const V& x) { return deconv2d_2x2(x[0], x[1], x[2]); }});
  cs.push_back({"avgpool_2x2", 2,
                [](std::uint64_t s, std::size_t v) {
                  return std::vector{random_tensor(v == 0 ? Shape{2, 3, 4, 6} : Shape{1, 2, 8, 8}, s)};
                },
                [](Tape<double>&, const V& x) { return avgpool_2x2(x[0]); }});
  for (Mode mode : {Mode::train, Mode::infer}) {
    cs.push_back({mode == Mode::train ? "batchnorm_train" : "batchnorm_infer", 2,
                  [=](std::uint64_t s, std::size_t v) {
                    const std::size_t C = a4[v][1];
                    return std::vector{random_tensor(a4[v], s), uniform_tensor(Shape{C}, s + 101, 0.5, 1.5),
                                       random_tensor(Shape{C}, s + 202)};
                  },
                  [mode](Tape<double>&, const V& x) {
                    BatchNormStats<double> st(x[1].value().numel());
                    for (std::size_t c = 0; c < st.channels(); ++c) {
                      st.running_mean[c] = 0.1 * static_cast<double>(c);
                      st.running_var[c] = 1.0 + 0.2 * static_cast<double>(c);
                    }
                    return batchnorm(x[0], x[1], x[2], st, mode);
                  }});
  }
  cs.push_back({"prelu", 2,
                [=](std::uint64_t s, std::size_t v) {
                  return std::vector{detail::away_from_zero(random_tensor(a4[v], s), 0.05),
                                     uniform_tensor(Shape{a4[v][1]}, s + 101, 0.0, 0.5)};
                },
                [](Tape<double>&, const V& x) { return prelu(x[0], x[1]); }});
  cs.push_back({"sigmoid", 2,
                [=](std::uint64_t s, std::size_t v) { return std::vector{random_tensor(a4[v], s, 2.0)}; },
                [](Tape<double>&, const V& x) { return sigmoid(x[0]); }});
  cs.push_back({"bce_loss", 2,
                [=](std::uint64_t s, std::size_t v) {
                  return std::vector{uniform_tensor(a4[v], s, 0.05, 0.95), uniform_tensor(a4[v], s + 101, 0.0, 1.0)};
                },
                [](Tape<double>&, const V& x) { return bce_loss(x[0], x[1]); }});
  return cs;
}

/// Maximum relative error of `c` over `seeds` seeds and all its variants.
inline double run_grad_case(const GradCase& c, std::size_t seeds = kGradCheckSeeds) {
  double worst = 0.0;
  for (std::size_t s = 0; s < seeds; ++s)
    for (std::size_t v = 0; v < c.variants; ++v) {
      GradCheckOptions opt;
      opt.seed = 1000 + 17 * s + v;
      worst = std::max(worst, grad_check(c.op, c.inputs(7919 * (s + 1), v), opt));
    }
  return worst;
}

/// End-to-end check of a double-precision network under a BCE loss: the
/// gradients of the input image and of sampled entries of every parameter
/// tensor against central differences.
inline double network_grad_check(const ArchConfig& arch, std::uint64_t seed, Shape input_shape,
                                 std::size_t entries_per_tensor = 3, double eps = 1e-5) {
  Network<double> net(arch, seed);
  const Tensor<double> image = detail::uniform_tensor(input_shape, seed + 1, 0.0, 1.0);
  Tensor<double> target(Shape{input_shape[0], 1, input_shape[2], input_shape[3]});
  {
    std::mt19937_64 rng(seed + 2);
    for (auto& v : target.data()) v = static_cast<double>(rng() & 1);
  }
  // Non-zero biases and PReLU slopes away from their initial values.
  {
    std::mt19937_64 rng(seed + 3);
    std::uniform_real_distribution<double> u(-0.1, 0.1);
    net.visit_parameters([&](const std::string& name, Parameter<double>& p) {
      if (name.ends_with(".bias") || name.ends_with(".beta") || name.ends_with(".alpha"))
        for (auto& v : p.value.data()) v += u(rng);
    });
  }

  auto loss_at = [&](const Tensor<double>& img) {
    Tape<double> tape(false);
    return bce_loss(net.forward(tape, tape.constant(img), Mode::train), tape.constant(target)).value()[0];
  };

  net.zero_grad();
  Tensor<double> image_grad;
  {
    Tape<double> tape;
    auto x = tape.variable(image);
    auto loss = bce_loss(net.forward(tape, x, Mode::train), tape.constant(target));
    tape.backward(loss);
    image_grad = x.grad();
  }

  double worst = 0.0;
  // Central differences at eps and eps/10; an entry passes on the closer one.
  // A probe straddling a PReLU kink corrupts only the wider step.
  auto numeric = [&](double& slot, const auto& loss_fn) {
    std::array<double, 2> d{};
    for (std::size_t k = 0; k < 2; ++k) {
      const double h = k == 0 ? eps : eps / 10, orig = slot;
      slot = orig + h;
      const double fp = loss_fn();
      slot = orig - h;
      const double fm = loss_fn();
      slot = orig;
      d[k] = (fp - fm) / (2 * h);
    }
    return d;
  };
  auto compare2 = [&](double analytic, const std::array<double, 2>& d) {
    const double scale = std::max(1.0, std::abs(analytic));
    worst = std::max(worst, std::min(std::abs(analytic - d[0]), std::abs(analytic - d[1])) / scale);
  };
  Tensor<double> probe = image;
  const std::size_t step = std::max<std::size_t>(1, image.numel() / (4 * entries_per_tensor));
  for (std::size_t j = 0; j < image.numel(); j += step)
    compare2(image_grad[j], numeric(probe[j], [&] { return loss_at(probe); }));
  net.visit_parameters([&](const std::string&, Parameter<double>& p) {
    const std::size_t n = p.value.numel();
    const std::size_t pstep = std::max<std::size_t>(1, n / entries_per_tensor);
    for (std::size_t j = 0; j < n; j += pstep)
      compare2(p.grad[j], numeric(p.value[j], [&] { return loss_at(image); }));
  });
  return worst;
}

struct GradCheckReport {
  std::string name;
  double max_rel_err;
  double tolerance;
  bool pass() const { return max_rel_err <= tolerance; }
};

/// Every operation over kGradCheckSeeds seeds and two shapes, then the tiny
/// network end to end.
inline std::vector<GradCheckReport> run_gradcheck_suite() {
  std::vector<GradCheckReport> out;
  for (const auto& c : gradcheck_cases()) out.push_back({c.name, run_grad_case(c), kOpGradTolerance});
  double net_err = 0.0;
  for (std::uint64_t s = 1; s <= 2; ++s)
    net_err = std::max(net_err, network_grad_check(ArchConfig::tiny(), s, Shape{2, 1, 8, 8}));
  out.push_back({"network_tiny", net_err, kNetworkGradTolerance});
  return out;
}

}  // namespace ivus
