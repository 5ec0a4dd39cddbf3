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
#include <functional>
#include <random>
#include <vector>

#include "ivusnet/autograd.hpp"
#include "ivusnet/tensor.hpp"

namespace ivus {

/// Builds the operation under test on a tape from its input variables.
using GradCheckFn = std::function<Var<double>(Tape<double>&, const std::vector<Var<double>>&)>;

struct GradCheckOptions {
  double eps = 1e-4;
  /// Seed of the fixed random projection used for non-scalar outputs.
  std::uint64_t seed = 0x9e3779b97f4a7c15ULL;
  /// Inputs with `false` here are fed as constants and not perturbed.
  std::vector<bool> differentiable;
  /// When nonzero, only this many evenly spaced entries of each input are
  /// probed. Zero probes every entry.
  std::size_t max_entries_per_input = 0;
};

/// Compares reverse-mode gradients against central differences.
///
/// A non-scalar output y is reduced to sum(y * R) with R a fixed uniform
/// random tensor, which exercises every output entry. Returns the maximum over
/// probed input entries of |analytic - numeric| / max(1, |analytic|).
inline double grad_check(const GradCheckFn& op, const std::vector<Tensor<double>>& inputs,
                         const GradCheckOptions& opt = {}) {
  auto is_diff = [&](std::size_t i) {
    return opt.differentiable.empty() || opt.differentiable.at(i);
  };

  Tensor<double> projection;
  auto scalar_loss = [&](Tape<double>& tape, const std::vector<Var<double>>& vars) {
    Var<double> out = op(tape, vars);
    if (out.value().is_scalar()) return out;
    if (projection.empty() || projection.shape() != out.shape()) {
      std::mt19937_64 rng(opt.seed);
      std::uniform_real_distribution<double> u(-1.0, 1.0);
      projection = Tensor<double>(out.shape());
      for (auto& v : projection.data()) v = u(rng);
    }
    return reduce_sum(mul(out, tape.constant(projection)));
  };

  auto evaluate = [&](const std::vector<Tensor<double>>& xs) {
    Tape<double> tape(false);
    std::vector<Var<double>> vars;
    for (const auto& x : xs) vars.push_back(tape.constant(x));
    return scalar_loss(tape, vars).value()[0];
  };

  std::vector<Tensor<double>> analytic;
  {
    Tape<double> tape;
    std::vector<Var<double>> vars;
    for (std::size_t i = 0; i < inputs.size(); ++i)
      vars.push_back(is_diff(i) ? tape.variable(inputs[i]) : tape.constant(inputs[i]));
    Var<double> loss = scalar_loss(tape, vars);
    tape.backward(loss);
    for (const auto& v : vars) analytic.push_back(v.grad());
  }

  double worst = 0.0;
  std::vector<Tensor<double>> probe = inputs;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (!is_diff(i)) continue;
    const std::size_t n = inputs[i].numel();
    const std::size_t step =
        opt.max_entries_per_input == 0 ? 1 : std::max<std::size_t>(1, n / opt.max_entries_per_input);
    for (std::size_t j = 0; j < n; j += step) {
      const double orig = inputs[i][j];
      probe[i][j] = orig + opt.eps;
      const double fp = evaluate(probe);
      probe[i][j] = orig - opt.eps;
      const double fm = evaluate(probe);
      probe[i][j] = orig;
      const double numeric = (fp - fm) / (2.0 * opt.eps);
      const double a = analytic[i][j];
      worst = std::max(worst, std::abs(a - numeric) / std::max(1.0, std::abs(a)));
    }
  }
  return worst;
}

/// Standard-normal tensor for gradient checks.
inline Tensor<double> random_tensor(Shape shape, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, scale);
  Tensor<double> t(std::move(shape));
  for (auto& v : t.data()) v = nd(rng);
  return t;
}

}  // namespace ivus
