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

// Ellipses in pixel coordinates: x is the column, y the row (pointing down),
// pixel centers sit on integer coordinates and rotation is measured from +x
// towards +y.

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <numbers>
#include <span>
#include <vector>

#include "ivusnet/errors.hpp"
#include "ivusnet/image.hpp"

namespace ivus {

struct Point {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Point&, const Point&) = default;
};

/// Closed ordered polyline; the last point connects back to the first.
using Contour = std::vector<Point>;

struct EllipseParams {
  double cx = 0.0;
  double cy = 0.0;
  double a = 1.0;  // semi-major
  double b = 1.0;  // semi-minor
  double theta = 0.0;  // [0, pi)
};

/// Conic A x^2 + B xy + C y^2 + D x + E y + F = 0.
using Conic = std::array<double, 6>;

/// (x'/a)^2 + (y'/b)^2 with (x', y') the point in the ellipse frame; 1 on the curve.
inline double ellipse_implicit(const EllipseParams& e, double x, double y) {
  const double c = std::cos(e.theta), s = std::sin(e.theta);
  const double dx = x - e.cx, dy = y - e.cy;
  const double u = (dx * c + dy * s) / e.a;
  const double v = (-dx * s + dy * c) / e.b;
  return u * u + v * v;
}

/// n points at uniform parameter spacing, counter-clockwise in the ellipse frame.
inline Contour ellipse_to_contour(const EllipseParams& e, std::size_t n) {
  if (n < 8) throw ContractError("ellipse_to_contour needs at least 8 points");
  Contour out;
  out.reserve(n);
  const double c = std::cos(e.theta), s = std::sin(e.theta);
  for (std::size_t k = 0; k < n; ++k) {
    const double t = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
    const double u = e.a * std::cos(t), v = e.b * std::sin(t);
    out.push_back({e.cx + u * c - v * s, e.cy + u * s + v * c});
  }
  return out;
}

/// Pixels whose centers satisfy the implicit inequality (<= 1).
inline BinaryMask ellipse_to_mask(const EllipseParams& e, std::size_t width, std::size_t height) {
  BinaryMask m(width, height);
  for (std::size_t y = 0; y < height; ++y)
    for (std::size_t x = 0; x < width; ++x)
      m(x, y) = ellipse_implicit(e, static_cast<double>(x), static_cast<double>(y)) <= 1.0 ? 1 : 0;
  return m;
}

/// Geometric parameters of an ellipse conic. Throws FitError for other conics.
inline EllipseParams conic_to_ellipse(const Conic& q) {
  const double sign = q[0] + q[2] < 0.0 ? -1.0 : 1.0;  // the conic is defined up to sign
  const double A = sign * q[0], B = sign * q[1], C = sign * q[2], D = sign * q[3], E = sign * q[4],
               F = sign * q[5];
  const double det = 4.0 * A * C - B * B;
  if (!(det > 0.0)) throw FitError("conic is not an ellipse");
  const double cx = (B * E - 2.0 * C * D) / det;
  const double cy = (B * D - 2.0 * A * E) / det;
  const double f0 = F + 0.5 * (D * cx + E * cy);  // conic value at the center

  Eigen::Matrix2d Q;
  Q << A, B / 2.0, B / 2.0, C;
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(Q);
  const double l_small = es.eigenvalues()(0), l_big = es.eigenvalues()(1);
  const double ra = -f0 / l_small, rb = -f0 / l_big;
  if (!(ra > 0.0) || !(rb > 0.0) || !std::isfinite(ra) || !std::isfinite(rb))
    throw FitError("conic describes an imaginary or degenerate ellipse");

  EllipseParams e;
  e.cx = cx;
  e.cy = cy;
  e.a = std::sqrt(ra);
  e.b = std::sqrt(rb);
  if (l_big - l_small <= 1e-12 * std::abs(l_big)) {
    e.theta = 0.0;
  } else {
    const Eigen::Vector2d v = es.eigenvectors().col(0);
    double th = std::atan2(v(1), v(0));
    if (th < 0.0) th += std::numbers::pi;
    if (th >= std::numbers::pi) th -= std::numbers::pi;
    e.theta = th;
  }
  return e;
}

/// Conic coefficients of an ellipse, scaled so that 4AC - B^2 = 1.
inline Conic ellipse_to_conic(const EllipseParams& e) {
  const double c = std::cos(e.theta), s = std::sin(e.theta);
  const double ia = 1.0 / (e.a * e.a), ib = 1.0 / (e.b * e.b);
  double A = c * c * ia + s * s * ib;
  double B = 2.0 * c * s * (ia - ib);
  double C = s * s * ia + c * c * ib;
  double D = -2.0 * A * e.cx - B * e.cy;
  double E = -2.0 * C * e.cy - B * e.cx;
  double F = A * e.cx * e.cx + B * e.cx * e.cy + C * e.cy * e.cy - 1.0;
  const double k = 1.0 / std::sqrt(4.0 * A * C - B * B);
  return {A * k, B * k, C * k, D * k, E * k, F * k};
}

/// Direct least-squares ellipse fit under the constraint 4AC - B^2 = 1.
///
/// Uses the partitioned scatter-matrix formulation (quadratic and linear
/// blocks reduced to a 3x3 eigenproblem) on coordinates that are centered on
/// their mean and scaled to unit RMS radius, then maps the conic back to
/// pixel coordinates. Requires at least six points that are not collinear.
inline Conic fit_conic(std::span<const Point> pts) {
  if (pts.size() < 6) throw FitError("ellipse fit needs at least 6 points");
  const double n = static_cast<double>(pts.size());
  double mx = 0.0, my = 0.0;
  for (const auto& p : pts) {
    mx += p.x;
    my += p.y;
  }
  mx /= n;
  my /= n;
  double r2 = 0.0;
  for (const auto& p : pts) r2 += (p.x - mx) * (p.x - mx) + (p.y - my) * (p.y - my);
  if (!(r2 > 0.0)) throw FitError("ellipse fit on coincident points");
  const double s = std::sqrt(2.0 * n / r2);

  Eigen::Matrix3d S1 = Eigen::Matrix3d::Zero(), S2 = Eigen::Matrix3d::Zero(),
                  S3 = Eigen::Matrix3d::Zero();
  for (const auto& p : pts) {
    const double x = (p.x - mx) * s, y = (p.y - my) * s;
    const Eigen::Vector3d q(x * x, x * y, y * y);
    const Eigen::Vector3d l(x, y, 1.0);
    S1 += q * q.transpose();
    S2 += q * l.transpose();
    S3 += l * l.transpose();
  }
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> s3eig(S3);
  if (s3eig.eigenvalues()(0) <= 1e-10 * s3eig.eigenvalues()(2))
    throw FitError("ellipse fit on collinear points");
  const Eigen::Matrix3d T = -S3.inverse() * S2.transpose();
  const Eigen::Matrix3d M0 = S1 + S2 * T;
  Eigen::Matrix3d M;
  M.row(0) = M0.row(2) / 2.0;
  M.row(1) = -M0.row(1);
  M.row(2) = M0.row(0) / 2.0;

  Eigen::EigenSolver<Eigen::Matrix3d> es(M);
  if (es.info() != Eigen::Success) throw FitError("ellipse fit eigen-decomposition failed");
  int best = -1;
  double best_cond = 0.0;
  for (int i = 0; i < 3; ++i) {
    const Eigen::Vector3d v = es.eigenvectors().col(i).real();
    const double cond = 4.0 * v(0) * v(2) - v(1) * v(1);
    if (cond > best_cond) {
      best_cond = cond;
      best = i;
    }
  }
  if (best < 0) throw FitError("no elliptical solution for the point set");
  Eigen::Vector3d a1 = es.eigenvectors().col(best).real();
  a1 /= std::sqrt(best_cond);
  const Eigen::Vector3d a2 = T * a1;

  // Undo x_n = s (x - mx), y_n = s (y - my).
  const double A = a1(0), B = a1(1), C = a1(2), D = a2(0), E = a2(1), F = a2(2);
  const double s2 = s * s;
  Conic q{A * s2,
          B * s2,
          C * s2,
          s * D - 2.0 * A * s2 * mx - B * s2 * my,
          s * E - 2.0 * C * s2 * my - B * s2 * mx,
          A * s2 * mx * mx + B * s2 * mx * my + C * s2 * my * my - s * D * mx - s * E * my + F};
  double k = 1.0 / std::sqrt(4.0 * q[0] * q[2] - q[1] * q[1]);
  if (q[0] + q[2] < 0.0) k = -k;
  for (auto& c : q) c *= k;
  return q;
}

inline EllipseParams fit_ellipse(std::span<const Point> pts) { return conic_to_ellipse(fit_conic(pts)); }

/// Largest |conic(x, y)| over the points for the 4AC - B^2 = 1 normalized conic.
inline double algebraic_residual(const Conic& q, std::span<const Point> pts) {
  double worst = 0.0;
  for (const auto& p : pts) {
    const double v = q[0] * p.x * p.x + q[1] * p.x * p.y + q[2] * p.y * p.y + q[3] * p.x +
                     q[4] * p.y + q[5];
    worst = std::max(worst, std::abs(v));
  }
  return worst;
}

}  // namespace ivus
