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

#include <numbers>
#include <random>

#include "ivusnet/ellipse.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace ivus;

namespace {

constexpr double kPi = std::numbers::pi;

std::vector<Point> sample(const EllipseParams& e, std::size_t n, double phase = 0.0) {
  std::vector<Point> pts;
  const double c = std::cos(e.theta), s = std::sin(e.theta);
  for (std::size_t k = 0; k < n; ++k) {
    const double t = phase + 2.0 * kPi * static_cast<double>(k) / static_cast<double>(n);
    const double u = e.a * std::cos(t), v = e.b * std::sin(t);
    pts.push_back({e.cx + u * c - v * s, e.cy + u * s + v * c});
  }
  return pts;
}

// Smallest angular distance between two orientations modulo pi.
double theta_gap(double a, double b) {
  const double d = std::fmod(std::abs(a - b), kPi);
  return std::min(d, kPi - d);
}

}  // namespace

TEST(FitEllipse, CircleRadiusFive) {
  const auto e = fit_ellipse(sample({10, 10, 5, 5, 0}, 32));
  EXPECT_NEAR(e.cx, 10.0, 1e-6);
  EXPECT_NEAR(e.cy, 10.0, 1e-6);
  EXPECT_NEAR(e.a, 5.0, 1e-6);
  EXPECT_NEAR(e.b, 5.0, 1e-6);
  EXPECT_GE(e.theta, 0.0);
  EXPECT_LT(e.theta, kPi);
}

TEST(FitEllipse, AxisAlignedThreeByTwo) {
  const auto e = fit_ellipse(sample({0, 0, 3, 2, 0}, 32));
  EXPECT_NEAR(e.a, 3.0, 3e-6);
  EXPECT_NEAR(e.b, 2.0, 2e-6);
  EXPECT_LE(theta_gap(e.theta, 0.0), 1e-6);
  // Major axis vertical: canonical form reports a >= b and theta = pi/2.
  const auto v = fit_ellipse(sample({0, 0, 3, 2, kPi / 2}, 32));
  EXPECT_NEAR(v.a, 3.0, 3e-6);
  EXPECT_NEAR(v.b, 2.0, 2e-6);
  EXPECT_NEAR(v.theta, kPi / 2, 1e-6);
}

TEST(FitEllipse, RandomEllipsesRecovered) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    EllipseParams g{U(rng) * 200 - 100, U(rng) * 200 - 100, 2 + 60 * U(rng), 0, kPi * U(rng)};
    g.b = g.a * (0.3 + 0.65 * U(rng));
    const auto e = fit_ellipse(sample(g, 6 + trial, U(rng)));
    EXPECT_NEAR(e.cx, g.cx, 1e-6 * g.a);
    EXPECT_NEAR(e.cy, g.cy, 1e-6 * g.a);
    EXPECT_NEAR(e.a / g.a, 1.0, 1e-6);
    EXPECT_NEAR(e.b / g.b, 1.0, 1e-6);
    EXPECT_LE(theta_gap(e.theta, g.theta), 1e-6);
    EXPECT_GE(e.a, e.b);
  }
}

TEST(FitEllipse, PreconditionFailures) {
  const auto five = sample({0, 0, 3, 2, 0}, 5);
  EXPECT_THROW(fit_ellipse(five), FitError);
  std::vector<Point> line;
  for (int i = 0; i < 10; ++i) line.push_back({1.0 + i, 2.0 + 3.0 * i});
  EXPECT_THROW(fit_ellipse(line), FitError);
  EXPECT_THROW(fit_ellipse(std::vector<Point>(8, Point{3, 3})), FitError);
  // Points on a hyperbola have no ellipse-constrained exact solution;
  // the fit either returns an ellipse or reports failure, never garbage.
  std::vector<Point> hyper;
  for (int i = 1; i <= 8; ++i) hyper.push_back({static_cast<double>(i), 1.0 / i});
  try {
    const auto e = fit_ellipse(hyper);
    EXPECT_TRUE(std::isfinite(e.a) && std::isfinite(e.b) && e.a >= e.b && e.b > 0);
  } catch (const FitError&) {
  }
}

TEST(FitEllipse, EquivariantUnderTranslationAndRotation) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    const EllipseParams g{30 * U(rng), 30 * U(rng), 8 + 4 * U(rng), 3 + 3 * U(rng), kPi * U(rng)};
    const auto pts = sample(g, 40, U(rng));
    const auto base = fit_ellipse(pts);
    const double phi = 2 * kPi * U(rng), tx = 50 * U(rng) - 25, ty = 50 * U(rng) - 25;
    const double c = std::cos(phi), s = std::sin(phi);
    std::vector<Point> moved;
    for (const auto& p : pts) moved.push_back({c * p.x - s * p.y + tx, s * p.x + c * p.y + ty});
    const auto e = fit_ellipse(moved);
    EXPECT_NEAR(e.cx, c * base.cx - s * base.cy + tx, 1e-6);
    EXPECT_NEAR(e.cy, s * base.cx + c * base.cy + ty, 1e-6);
    EXPECT_NEAR(e.a, base.a, 1e-6);
    EXPECT_NEAR(e.b, base.b, 1e-6);
    EXPECT_LE(theta_gap(e.theta, base.theta + phi), 1e-6);
  }
}

TEST(FitEllipse, NoiselessResidualIsTiny) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    const EllipseParams g{100 * U(rng), 100 * U(rng), 5 + 40 * U(rng), 0, kPi * U(rng)};
    EllipseParams gg = g;
    gg.b = g.a * (0.4 + 0.6 * U(rng));
    const auto pts = sample(gg, 64);
    const Conic q = fit_conic(pts);
    EXPECT_LE(algebraic_residual(q, pts), 1e-9);
    const auto e = conic_to_ellipse(q);
    EXPECT_LE(oracle::naive_ellipse_residual(testutil::pairs(pts), e.cx, e.cy, e.a, e.b, e.theta), 1e-9);
  }
}

TEST(Conic, RoundTripThroughGeometricForm) {
  const EllipseParams g{4, -3, 7, 2.5, 1.1};
  const auto e = conic_to_ellipse(ellipse_to_conic(g));
  EXPECT_NEAR(e.cx, 4, 1e-12);
  EXPECT_NEAR(e.cy, -3, 1e-12);
  EXPECT_NEAR(e.a, 7, 1e-12);
  EXPECT_NEAR(e.b, 2.5, 1e-12);
  EXPECT_NEAR(e.theta, 1.1, 1e-12);
  const Conic q = ellipse_to_conic(g);
  EXPECT_NEAR(4 * q[0] * q[2] - q[1] * q[1], 1.0, 1e-12);
  EXPECT_THROW(conic_to_ellipse({1, 0, -1, 0, 0, -1}), FitError);  // hyperbola
  EXPECT_THROW(conic_to_ellipse({1, 0, 1, 0, 0, 1}), FitError);    // imaginary
}

TEST(EllipseRaster, ContourOnCurve) {
  const EllipseParams e{12.5, 7.25, 9, 4, 0.7};
  const auto c = ellipse_to_contour(e, 100);
  ASSERT_EQ(c.size(), 100u);
  for (const auto& p : c) EXPECT_NEAR(ellipse_implicit(e, p.x, p.y), 1.0, 1e-9);
  EXPECT_THROW(ellipse_to_contour(e, 7), ContractError);
}

TEST(EllipseRaster, CircleAreaWithinPerimeterBound) {
  for (double r : {1.0, 2.5, 5.0, 10.0, 17.3}) {
    const auto m = ellipse_to_mask({20.3, 19.7, r, r, 0}, 48, 48);
    const double area = static_cast<double>(count_foreground(m));
    EXPECT_LE(std::abs(area - kPi * r * r), 4 * r) << r;
    EXPECT_EQ(m(20, 20), 1) << r;
  }
}

TEST(EllipseRaster, PixelCentersAndBoundaryInclusive) {
  const auto m = ellipse_to_mask({2, 2, 1, 1, 0}, 5, 5);
  // Exactly the centre and its four neighbours at distance 1.
  EXPECT_EQ(count_foreground(m), 5u);
  EXPECT_EQ(m(2, 1), 1);
  EXPECT_EQ(m(1, 1), 0);
}
