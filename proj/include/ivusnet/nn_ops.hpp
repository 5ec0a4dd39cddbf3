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

// Network operators with forward and backward rules. All image tensors are
// (batch, channel, height, width). Convolutions use the cross-correlation
// convention and run as im2col + GEMM; the GEMM itself is Eigen's.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "ivusnet/autograd.hpp"
#include "ivusnet/errors.hpp"
#include "ivusnet/tensor.hpp"

namespace ivus {

enum class Mode { train, infer };

enum class Padding { same_zero, valid };

/// Geometry of a convolution; the weights themselves are tape variables of
/// shape (out_channels, in_channels, kH, kW) and the bias has shape (out_channels).
struct ConvSpec {
  std::size_t stride = 1;
  Padding padding = Padding::same_zero;
};

namespace detail {

template <class T>
using MatR = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MapR = Eigen::Map<MatR<T>>;
template <class T>
using CMapR = Eigen::Map<const MatR<T>>;
template <class T>
using MapC = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor>>;
template <class T>
using CMapVec = Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>>;

struct ConvGeom {
  std::size_t C, H, W, K, stride, pad, Ho, Wo;
};

// Output columns [lo, hi) whose input column ow*stride + kj - pad is inside [0, W).
inline void valid_cols(const ConvGeom& g, std::size_t kj, std::size_t& lo, std::size_t& hi) {
  const std::ptrdiff_t s = g.stride, off = static_cast<std::ptrdiff_t>(kj) - g.pad;
  const std::ptrdiff_t W = g.W, Wo = g.Wo;
  std::ptrdiff_t l = off >= 0 ? 0 : (-off + s - 1) / s;
  std::ptrdiff_t h = (W - 1 - off) < 0 ? 0 : (W - 1 - off) / s + 1;
  l = std::min(l, Wo);
  h = std::clamp(h, l, Wo);
  lo = static_cast<std::size_t>(l);
  hi = static_cast<std::size_t>(h);
}

// Columns of output rows [oh0, oh1): col has C*K*K rows and (oh1-oh0)*Wo columns.
template <class T>
void im2col(const T* x, const ConvGeom& g, std::size_t oh0, std::size_t oh1, T* col) {
  const std::ptrdiff_t H = g.H, pad = g.pad;
  const std::size_t cols = (oh1 - oh0) * g.Wo;
  for (std::size_t c = 0; c < g.C; ++c) {
    const T* xc = x + c * g.H * g.W;
    for (std::size_t ki = 0; ki < g.K; ++ki)
      for (std::size_t kj = 0; kj < g.K; ++kj) {
        T* row = col + ((c * g.K + ki) * g.K + kj) * cols;
        std::size_t lo, hi;
        valid_cols(g, kj, lo, hi);
        const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(kj) - pad;
        for (std::size_t oh = oh0; oh < oh1; ++oh) {
          const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * g.stride + ki) - pad;
          T* dst = row + (oh - oh0) * g.Wo;
          if (ih < 0 || ih >= H) {
            std::fill_n(dst, g.Wo, T{0});
            continue;
          }
          const T* src = xc + ih * static_cast<std::ptrdiff_t>(g.W) + shift;
          std::fill_n(dst, lo, T{0});
          if (g.stride == 1) {
            std::copy(src + lo, src + hi, dst + lo);
          } else {
            for (std::size_t ow = lo; ow < hi; ++ow) dst[ow] = src[ow * g.stride];
          }
          std::fill(dst + hi, dst + g.Wo, T{0});
        }
      }
  }
}

template <class T>
void col2im_add(const T* col, const ConvGeom& g, std::size_t oh0, std::size_t oh1, T* x) {
  const std::ptrdiff_t H = g.H, pad = g.pad;
  const std::size_t cols = (oh1 - oh0) * g.Wo;
  for (std::size_t c = 0; c < g.C; ++c) {
    T* xc = x + c * g.H * g.W;
    for (std::size_t ki = 0; ki < g.K; ++ki)
      for (std::size_t kj = 0; kj < g.K; ++kj) {
        const T* row = col + ((c * g.K + ki) * g.K + kj) * cols;
        std::size_t lo, hi;
        valid_cols(g, kj, lo, hi);
        const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(kj) - pad;
        for (std::size_t oh = oh0; oh < oh1; ++oh) {
          const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * g.stride + ki) - pad;
          if (ih < 0 || ih >= H) continue;
          const T* src = row + (oh - oh0) * g.Wo;
          T* dst = xc + ih * static_cast<std::ptrdiff_t>(g.W) + shift;
          if (g.stride == 1) {
            for (std::size_t ow = lo; ow < hi; ++ow) dst[ow] += src[ow];
          } else {
            for (std::size_t ow = lo; ow < hi; ++ow) dst[ow * g.stride] += src[ow];
          }
        }
      }
  }
}

// Output rows per im2col tile, sized so a tile of columns stays cache resident.
inline std::size_t tile_rows(const ConvGeom& g) {
  constexpr std::size_t kTileElems = 16384;
  const std::size_t per_row = g.C * g.K * g.K * g.Wo;
  return std::clamp<std::size_t>(kTileElems / std::max<std::size_t>(per_row, 1), 1, g.Ho);
}

}  // namespace detail

/// 2-D convolution. "same_zero" needs stride 1 and an odd kernel and keeps
/// H x W; "valid" with a 2x2 kernel and stride 2 halves H and W.
template <class T>
Var<T> conv2d(const Var<T>& input, const Var<T>& weight, const Var<T>& bias, ConvSpec spec = {}) {
  const auto& x = input.value();
  const auto& w = weight.value();
  const auto& b = bias.value();
  if (x.rank() != 4 || w.rank() != 4)
    throw DimensionError("conv2d: input and weight must be rank 4");
  if (w.dim(2) != w.dim(3)) throw DimensionError("conv2d: kernel must be square");
  if (x.dim(1) != w.dim(1))
    throw DimensionError("conv2d: input has " + std::to_string(x.dim(1)) +
                         " channels, weight expects " + std::to_string(w.dim(1)));
  if (b.rank() != 1 || b.dim(0) != w.dim(0))
    throw DimensionError("conv2d: bias shape " + shape_str(b.shape()) + " for " +
                         std::to_string(w.dim(0)) + " filters");
  if (spec.stride != 1 && spec.stride != 2) throw DimensionError("conv2d: stride must be 1 or 2");

  detail::ConvGeom g{};
  g.C = x.dim(1);
  g.H = x.dim(2);
  g.W = x.dim(3);
  g.K = w.dim(2);
  g.stride = spec.stride;
  if (spec.padding == Padding::same_zero) {
    if (spec.stride != 1) throw DimensionError("conv2d: same padding requires stride 1");
    if (g.K % 2 == 0) throw DimensionError("conv2d: same padding requires an odd kernel");
    g.pad = g.K / 2;
    g.Ho = g.H;
    g.Wo = g.W;
  } else {
    if (spec.stride == 2 && (g.H % 2 != 0 || g.W % 2 != 0))
      throw DimensionError("conv2d: stride-2 convolution needs even H and W, got " +
                           shape_str(x.shape()));
    if (g.K > g.H || g.K > g.W) throw DimensionError("conv2d: kernel larger than input");
    g.pad = 0;
    g.Ho = (g.H - g.K) / g.stride + 1;
    g.Wo = (g.W - g.K) / g.stride + 1;
  }
  const std::size_t N = x.dim(0), Cout = w.dim(0), KK = g.C * g.K * g.K, HWo = g.Ho * g.Wo;
  const bool direct = g.K == 1 && g.stride == 1;

  Tensor<T> out(Shape{N, Cout, g.Ho, g.Wo}, uninitialized);
  const std::size_t rows = detail::tile_rows(g);
  detail::Buffer<T> col(direct ? 0 : KK * rows * g.Wo);
  detail::CMapR<T> Wm(w.ptr(), Cout, KK);
  detail::CMapVec<T> bv(b.ptr(), Cout);
  for (std::size_t n = 0; n < N; ++n) {
    const T* xn = x.ptr() + n * g.C * g.H * g.W;
    detail::MapR<T> Y(out.ptr() + n * Cout * HWo, Cout, HWo);
    if (direct) {
      Y.noalias() = Wm * detail::CMapR<T>(xn, KK, HWo);
    } else {
      for (std::size_t oh0 = 0; oh0 < g.Ho; oh0 += rows) {
        const std::size_t oh1 = std::min(g.Ho, oh0 + rows), cols = (oh1 - oh0) * g.Wo;
        detail::im2col(xn, g, oh0, oh1, col.data());
        Y.middleCols(oh0 * g.Wo, cols).noalias() = Wm * detail::CMapR<T>(col.data(), KK, cols);
      }
    }
    Y.colwise() += bv;
  }

  return input.tape()->record(
      "conv2d", std::move(out), {input, weight, bias},
      [input, weight, bias, g, N, Cout, KK, HWo, direct, rows](Tape<T>& t, const Tensor<T>& grad) {
        const auto& x = input.value();
        const auto& w = weight.value();
        auto* gx = t.grad_sink(input);
        auto* gw = t.grad_sink(weight);
        auto* gb = t.grad_sink(bias);
        detail::Buffer<T> col(direct ? 0 : KK * rows * g.Wo);
        detail::Buffer<T> dcol(direct ? 0 : KK * rows * g.Wo);
        detail::CMapR<T> Wm(w.ptr(), Cout, KK);
        for (std::size_t n = 0; n < N; ++n) {
          const T* xn = x.ptr() + n * g.C * g.H * g.W;
          T* gxn = gx ? gx->ptr() + n * g.C * g.H * g.W : nullptr;
          detail::CMapR<T> G(grad.ptr() + n * Cout * HWo, Cout, HWo);
          if (gb) {
            for (std::size_t c = 0; c < Cout; ++c) (*gb)[c] += G.row(c).sum();
          }
          if (direct) {
            detail::CMapR<T> X(xn, KK, HWo);
            // dW^T = X * G^T keeps both operands streaming along HWo.
            if (gw) detail::MapC<T>(gw->ptr(), KK, Cout).noalias() += X * G.transpose();
            if (gx) detail::MapR<T>(gxn, KK, HWo).noalias() += Wm.transpose() * G;
            continue;
          }
          for (std::size_t oh0 = 0; oh0 < g.Ho; oh0 += rows) {
            const std::size_t oh1 = std::min(g.Ho, oh0 + rows), cols = (oh1 - oh0) * g.Wo;
            const auto Gt = G.middleCols(oh0 * g.Wo, cols);
            if (gw) {
              detail::im2col(xn, g, oh0, oh1, col.data());
              detail::MapC<T>(gw->ptr(), KK, Cout).noalias() +=
                  detail::CMapR<T>(col.data(), KK, cols) * Gt.transpose();
            }
            if (gx) {
              detail::MapR<T>(dcol.data(), KK, cols).noalias() = Wm.transpose() * Gt;
              detail::col2im_add(dcol.data(), g, oh0, oh1, gxn);
            }
          }
        }
      });
}

/// 2x2 stride-2 transposed convolution: doubles H and W.
/// weight: (out_channels, in_channels, 2, 2); bias: (out_channels).
template <class T>
Var<T> deconv2d_2x2(const Var<T>& input, const Var<T>& weight, const Var<T>& bias) {
  const auto& x = input.value();
  const auto& w = weight.value();
  const auto& b = bias.value();
  if (w.rank() != 4 || w.dim(2) != 2 || w.dim(3) != 2)
    throw ContractError("deconv2d_2x2: kernel must be 2x2, got weight shape " +
                        shape_str(w.shape()));
  if (x.rank() != 4 || x.dim(1) != w.dim(1))
    throw DimensionError("deconv2d_2x2: input " + shape_str(x.shape()) +
                         " does not match weight " + shape_str(w.shape()));
  if (b.rank() != 1 || b.dim(0) != w.dim(0))
    throw DimensionError("deconv2d_2x2: bias shape " + shape_str(b.shape()));
  const std::size_t N = x.dim(0), Cin = x.dim(1), H = x.dim(2), W = x.dim(3), Cout = w.dim(0);
  const std::size_t HW = H * W;

  // Rows ordered (co, di, dj) so one GEMM yields all four taps.
  auto taps = [Cout, Cin](const Tensor<T>& w) {
    detail::MatR<T> m(4 * Cout, Cin);
    for (std::size_t co = 0; co < Cout; ++co)
      for (std::size_t ci = 0; ci < Cin; ++ci)
        for (std::size_t d = 0; d < 4; ++d) m(co * 4 + d, ci) = w[(co * Cin + ci) * 4 + d];
    return m;
  };
  const detail::MatR<T> Wt = taps(w);

  Tensor<T> out(Shape{N, Cout, 2 * H, 2 * W}, uninitialized);
  detail::MatR<T> Z(4 * Cout, HW);
  for (std::size_t n = 0; n < N; ++n) {
    detail::CMapR<T> X(x.ptr() + n * Cin * HW, Cin, HW);
    Z.noalias() = Wt * X;
    for (std::size_t co = 0; co < Cout; ++co) {
      T* yc = out.ptr() + (n * Cout + co) * 4 * HW;
      for (std::size_t d = 0; d < 4; ++d) {
        const std::size_t di = d / 2, dj = d % 2;
        const T* z = Z.data() + (co * 4 + d) * HW;
        for (std::size_t i = 0; i < H; ++i)
          for (std::size_t j = 0; j < W; ++j)
            yc[(2 * i + di) * 2 * W + 2 * j + dj] = z[i * W + j] + b[co];
      }
    }
  }

  return input.tape()->record(
      "deconv2d_2x2", std::move(out), {input, weight, bias},
      [input, weight, bias, taps, N, Cin, Cout, H, W, HW](Tape<T>& t, const Tensor<T>& grad) {
        auto* gx = t.grad_sink(input);
        auto* gw = t.grad_sink(weight);
        auto* gb = t.grad_sink(bias);
        const detail::MatR<T> Wt = taps(weight.value());
        detail::MatR<T> GZ(4 * Cout, HW);
        detail::MatR<T> GWt = detail::MatR<T>::Zero(4 * Cout, Cin);
        for (std::size_t n = 0; n < N; ++n) {
          for (std::size_t co = 0; co < Cout; ++co) {
            const T* gc = grad.ptr() + (n * Cout + co) * 4 * HW;
            for (std::size_t d = 0; d < 4; ++d) {
              const std::size_t di = d / 2, dj = d % 2;
              T* z = GZ.data() + (co * 4 + d) * HW;
              for (std::size_t i = 0; i < H; ++i)
                for (std::size_t j = 0; j < W; ++j)
                  z[i * W + j] = gc[(2 * i + di) * 2 * W + 2 * j + dj];
            }
            if (gb) {
              T s{0};
              for (std::size_t k = 0; k < 4 * HW; ++k) s += gc[k];
              (*gb)[co] += s;
            }
          }
          detail::CMapR<T> X(input.value().ptr() + n * Cin * HW, Cin, HW);
          if (gw) GWt.noalias() += GZ * X.transpose();
          if (gx) {
            detail::MapR<T> GX(gx->ptr() + n * Cin * HW, Cin, HW);
            GX.noalias() += Wt.transpose() * GZ;
          }
        }
        if (gw)
          for (std::size_t co = 0; co < Cout; ++co)
            for (std::size_t ci = 0; ci < Cin; ++ci)
              for (std::size_t d = 0; d < 4; ++d) (*gw)[(co * Cin + ci) * 4 + d] += GWt(co * 4 + d, ci);
      });
}

/// Mean over disjoint 2x2 windows.
template <class T>
Var<T> avgpool_2x2(const Var<T>& input) {
  const auto& x = input.value();
  if (x.rank() != 4) throw DimensionError("avgpool_2x2: input must be rank 4");
  if (x.dim(2) % 2 != 0 || x.dim(3) % 2 != 0)
    throw DimensionError("avgpool_2x2: H and W must be even, got " + shape_str(x.shape()));
  const std::size_t NC = x.dim(0) * x.dim(1), H = x.dim(2), W = x.dim(3), Ho = H / 2, Wo = W / 2;
  Tensor<T> out(Shape{x.dim(0), x.dim(1), Ho, Wo}, uninitialized);
  for (std::size_t p = 0; p < NC; ++p) {
    const T* src = x.ptr() + p * H * W;
    T* dst = out.ptr() + p * Ho * Wo;
    for (std::size_t i = 0; i < Ho; ++i)
      for (std::size_t j = 0; j < Wo; ++j) {
        const T* s = src + 2 * i * W + 2 * j;
        dst[i * Wo + j] = (s[0] + s[1] + s[W] + s[W + 1]) * T(0.25);
      }
  }
  return input.tape()->record("avgpool_2x2", std::move(out), {input},
                              [input, NC, H, W, Ho, Wo](Tape<T>& t, const Tensor<T>& g) {
                                auto* gx = t.grad_sink(input);
                                if (!gx) return;
                                for (std::size_t p = 0; p < NC; ++p) {
                                  const T* gp = g.ptr() + p * Ho * Wo;
                                  T* dst = gx->ptr() + p * H * W;
                                  for (std::size_t i = 0; i < Ho; ++i)
                                    for (std::size_t j = 0; j < Wo; ++j) {
                                      const T v = gp[i * Wo + j] * T(0.25);
                                      T* d = dst + 2 * i * W + 2 * j;
                                      d[0] += v;
                                      d[1] += v;
                                      d[W] += v;
                                      d[W + 1] += v;
                                    }
                                }
                              });
}

/// Running statistics of a batch-normalization layer. gamma and beta are
/// parameters held by the owning layer and passed to batchnorm() as variables.
template <class T>
struct BatchNormStats {
  std::vector<T> running_mean;
  std::vector<T> running_var;
  T momentum = T(0.9);
  T eps = T(1e-5);

  BatchNormStats() = default;
  explicit BatchNormStats(std::size_t channels)
      : running_mean(channels, T{0}), running_var(channels, T{1}) {}

  std::size_t channels() const noexcept { return running_mean.size(); }
};

/// Per-channel batch normalization. Train mode normalizes with batch statistics
/// and updates `stats` as running <- momentum * running + (1 - momentum) * batch
/// (unbiased batch variance). Infer mode reads `stats` and never writes it.
template <class T>
Var<T> batchnorm(const Var<T>& input, const Var<T>& gamma, const Var<T>& beta,
                 BatchNormStats<T>& stats, Mode mode) {
  const auto& x = input.value();
  const std::size_t C = stats.channels();
  if (x.rank() != 4 || x.dim(1) != C)
    throw DimensionError("batchnorm: input " + shape_str(x.shape()) + " for " + std::to_string(C) +
                         " channels");
  if (gamma.value().numel() != C || beta.value().numel() != C)
    throw DimensionError("batchnorm: gamma/beta must have one entry per channel");
  const std::size_t N = x.dim(0), HW = x.dim(2) * x.dim(3);
  const T M = static_cast<T>(N * HW);
  const auto& gv = gamma.value();
  const auto& bv = beta.value();

  std::vector<T> mean(C, T{0}), invstd(C, T{0});
  if (mode == Mode::train) {
    for (std::size_t c = 0; c < C; ++c) {
      T s{0};
      for (std::size_t n = 0; n < N; ++n) {
        const T* p = x.ptr() + (n * C + c) * HW;
        for (std::size_t i = 0; i < HW; ++i) s += p[i];
      }
      const T mu = s / M;
      T v{0};
      for (std::size_t n = 0; n < N; ++n) {
        const T* p = x.ptr() + (n * C + c) * HW;
        for (std::size_t i = 0; i < HW; ++i) v += (p[i] - mu) * (p[i] - mu);
      }
      v /= M;
      mean[c] = mu;
      invstd[c] = T{1} / std::sqrt(v + stats.eps);
      const T unbiased = M > T{1} ? v * M / (M - T{1}) : v;
      stats.running_mean[c] = stats.momentum * stats.running_mean[c] + (T{1} - stats.momentum) * mu;
      stats.running_var[c] =
          stats.momentum * stats.running_var[c] + (T{1} - stats.momentum) * unbiased;
    }
  } else {
    for (std::size_t c = 0; c < C; ++c) {
      mean[c] = stats.running_mean[c];
      invstd[c] = T{1} / std::sqrt(stats.running_var[c] + stats.eps);
    }
  }

  Tensor<T> out(x.shape(), uninitialized);
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t c = 0; c < C; ++c) {
      const T* p = x.ptr() + (n * C + c) * HW;
      T* o = out.ptr() + (n * C + c) * HW;
      const T scale = gv[c] * invstd[c];
      const T shift = bv[c] - mean[c] * scale;
      for (std::size_t i = 0; i < HW; ++i) o[i] = p[i] * scale + shift;
    }

  const bool batch_stats = mode == Mode::train;
  return input.tape()->record(
      "batchnorm", std::move(out), {input, gamma, beta},
      [input, gamma, beta, mean, invstd, N, C, HW, M, batch_stats](Tape<T>& t,
                                                                   const Tensor<T>& g) {
        const auto& x = input.value();
        const auto& gv = gamma.value();
        auto* gx = t.grad_sink(input);
        auto* gg = t.grad_sink(gamma);
        auto* gbeta = t.grad_sink(beta);
        for (std::size_t c = 0; c < C; ++c) {
          T sum_g{0}, sum_gx{0};
          for (std::size_t n = 0; n < N; ++n) {
            const T* p = x.ptr() + (n * C + c) * HW;
            const T* gp = g.ptr() + (n * C + c) * HW;
            for (std::size_t i = 0; i < HW; ++i) {
              sum_g += gp[i];
              sum_gx += gp[i] * (p[i] - mean[c]) * invstd[c];
            }
          }
          if (gg) (*gg)[c] += sum_gx;
          if (gbeta) (*gbeta)[c] += sum_g;
          if (!gx) continue;
          const T k = gv[c] * invstd[c];
          for (std::size_t n = 0; n < N; ++n) {
            const T* p = x.ptr() + (n * C + c) * HW;
            const T* gp = g.ptr() + (n * C + c) * HW;
            T* dst = gx->ptr() + (n * C + c) * HW;
            if (batch_stats) {
              for (std::size_t i = 0; i < HW; ++i) {
                const T xhat = (p[i] - mean[c]) * invstd[c];
                dst[i] += k * (gp[i] - sum_g / M - xhat * sum_gx / M);
              }
            } else {
              for (std::size_t i = 0; i < HW; ++i) dst[i] += k * gp[i];
            }
          }
        }
      });
}

/// max(0, x) - alpha * max(0, -x) with one learnable alpha per channel.
template <class T>
Var<T> prelu(const Var<T>& input, const Var<T>& alpha) {
  const auto& x = input.value();
  const auto& a = alpha.value();
  if (x.rank() != 4 || a.numel() != x.dim(1))
    throw DimensionError("prelu: alpha of length " + std::to_string(a.numel()) + " for input " +
                         shape_str(x.shape()));
  const std::size_t N = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
  Tensor<T> out(x.shape(), uninitialized);
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t c = 0; c < C; ++c) {
      const T* p = x.ptr() + (n * C + c) * HW;
      T* o = out.ptr() + (n * C + c) * HW;
      const T ac = a[c];
      for (std::size_t i = 0; i < HW; ++i) o[i] = std::max(p[i], T{0}) + ac * std::min(p[i], T{0});
    }
  return input.tape()->record("prelu", std::move(out), {input, alpha},
                              [input, alpha, N, C, HW](Tape<T>& t, const Tensor<T>& g) {
                                const auto& x = input.value();
                                const auto& a = alpha.value();
                                auto* gx = t.grad_sink(input);
                                auto* ga = t.grad_sink(alpha);
                                for (std::size_t n = 0; n < N; ++n)
                                  for (std::size_t c = 0; c < C; ++c) {
                                    const std::size_t off = (n * C + c) * HW;
                                    const T* xp = x.ptr() + off;
                                    const T* gp = g.ptr() + off;
                                    const T ac = a[c];
                                    if (gx) {
                                      T* dst = gx->ptr() + off;
                                      for (std::size_t i = 0; i < HW; ++i)
                                        dst[i] += xp[i] > T{0} ? gp[i] : ac * gp[i];
                                    }
                                    if (ga) {
                                      T s{0};
                                      for (std::size_t i = 0; i < HW; ++i)
                                        s += gp[i] * std::min(xp[i], T{0});
                                      (*ga)[c] += s;
                                    }
                                  }
                              });
}

/// Logistic function, evaluated without overflow and kept strictly inside (0, 1).
template <class T>
Var<T> sigmoid(const Var<T>& input) {
  const auto& x = input.value();
  const T lo = std::numeric_limits<T>::min();
  const T hi = std::nextafter(T{1}, T{0});
  Tensor<T> out(x.shape(), uninitialized);
  for (std::size_t i = 0; i < x.numel(); ++i) {
    const T v = x[i];
    T s;
    if (v >= T{0}) {
      s = T{1} / (T{1} + std::exp(-v));
    } else {
      const T e = std::exp(v);
      s = e / (T{1} + e);
    }
    out[i] = std::clamp(s, lo, hi);
  }
  const std::size_t out_id = input.tape()->size();
  return input.tape()->record("sigmoid", std::move(out), {input},
                              [input, out_id](Tape<T>& t, const Tensor<T>& g) {
                                auto* gx = t.grad_sink(input);
                                if (!gx) return;
                                const auto& s = Var<T>(&t, out_id).value();
                                for (std::size_t i = 0; i < g.numel(); ++i)
                                  (*gx)[i] += g[i] * s[i] * (T{1} - s[i]);
                              });
}

/// Mean binary cross-entropy. Predictions are clamped to [1e-7, 1 - 1e-7]
/// before the logarithm; the gradient is evaluated at the clamped value and
/// passed through to `pred` unchanged.
template <class T>
Var<T> bce_loss(const Var<T>& pred, const Var<T>& target) {
  const auto& p = pred.value();
  const auto& y = target.value();
  if (p.shape() != y.shape())
    throw DimensionError("bce_loss: prediction " + shape_str(p.shape()) + " vs target " +
                         shape_str(y.shape()));
  const T lo = T(1e-7), hi = T{1} - T(1e-7);
  const T n = static_cast<T>(p.numel());
  T s{0};
  for (std::size_t i = 0; i < p.numel(); ++i) {
    const T pc = std::clamp(p[i], lo, hi);
    s -= y[i] * std::log(pc) + (T{1} - y[i]) * std::log(T{1} - pc);
  }
  return pred.tape()->record(
      "bce_loss", Tensor<T>::scalar(s / n), {pred, target},
      [pred, target, lo, hi, n](Tape<T>& t, const Tensor<T>& g) {
        const auto& p = pred.value();
        const auto& y = target.value();
        if (auto* gp = t.grad_sink(pred))
          for (std::size_t i = 0; i < p.numel(); ++i) {
            const T pc = std::clamp(p[i], lo, hi);
            (*gp)[i] += g[0] * (pc - y[i]) / (pc * (T{1} - pc)) / n;
          }
        if (auto* gy = t.grad_sink(target))
          for (std::size_t i = 0; i < p.numel(); ++i) {
            const T pc = std::clamp(p[i], lo, hi);
            (*gy)[i] += g[0] * (std::log(T{1} - pc) - std::log(pc)) / n;
          }
      });
}

}  // namespace ivus
