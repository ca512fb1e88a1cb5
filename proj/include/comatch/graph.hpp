/*
 * Copyright 2026 The comatch Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef COMATCH_GRAPH_HPP
#define COMATCH_GRAPH_HPP

#include <algorithm>
#include <cmath>
#include <functional>
#include <utility>
#include <vector>

#include "comatch/errors.hpp"
#include "comatch/tensor.hpp"

namespace comatch {

enum class Mode { train, eval };

/// Per-channel running statistics for batch normalization. Owned by the
/// network, read and (in train mode) updated by the batchnorm2d op.
template <class T>
struct BnRunningStats {
  Tensor<T> mean;
  Tensor<T> var;

  static BnRunningStats init(int channels) {
    BnRunningStats s;
    s.mean = Tensor<T>({channels}, T(0));
    s.var = Tensor<T>({channels}, T(1));
    return s;
  }
};

/// Cross-entropy values below this floor are clamped before the log so a
/// zero probability at the target class never produces -inf.
inline constexpr double kLogFloor = 1e-12;

/// Reverse-mode tape. Ops execute eagerly at record time, so creation
/// order is a topological order and backward() simply walks the node list
/// in reverse. Gradient accumulators are zeroed at the start of every
/// backward pass; running backward twice without reset() is a state error.
///
/// A fresh Graph per training step is the intended usage.
template <class T>
class Graph {
 public:
  using Id = int;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  /// Inserts an input node. requires_grad is taken from the tensor.
  Id leaf(Tensor<T> value) {
    bool rg = value.requires_grad;
    return push(std::move(value), rg, {});
  }

  /// Inserts a node that never receives gradients.
  Id constant(Tensor<T> value) {
    value.requires_grad = false;
    return push(std::move(value), false, {});
  }

  const Tensor<T>& value(Id id) const { return node(id).value; }

  /// Gradient of the last backward target w.r.t. node `id`.
  const Tensor<T>& grad(Id id) const {
    if (!backward_run_) throw StateError("gradient requested before backward()");
    return node(id).grad;
  }

  size_t size() const { return nodes_.size(); }

  /// y = xW + b for x:[N,Din], W:[Din,Dout], b:[Dout].
  Id affine(Id xi, Id wi, Id bi) {
    const Tensor<T>& x = value(xi);
    const Tensor<T>& w = value(wi);
    const Tensor<T>& b = value(bi);
    if (x.ndim() != 2 || w.ndim() != 2 || x.dim(1) != w.dim(0)) {
      throw DimensionError("affine: input " + x.shape_str() + " incompatible with weight " +
                           w.shape_str());
    }
    if (b.ndim() != 1 || b.dim(0) != w.dim(1)) {
      throw DimensionError("affine: bias " + b.shape_str() + " incompatible with weight " +
                           w.shape_str());
    }
    const int n = x.dim(0), din = x.dim(1), dout = w.dim(1);
    Tensor<T> y({n, dout});
    for (int i = 0; i < n; ++i) {
      T* yr = &y.data[static_cast<size_t>(i) * dout];
      for (int o = 0; o < dout; ++o) yr[o] = b.data[o];
      const T* xr = &x.data[static_cast<size_t>(i) * din];
      for (int d = 0; d < din; ++d) {
        const T xv = xr[d];
        const T* wr = &w.data[static_cast<size_t>(d) * dout];
        for (int o = 0; o < dout; ++o) yr[o] += xv * wr[o];
      }
    }
    check_finite(y, "affine");
    return push(std::move(y), needs(xi) || needs(wi) || needs(bi),
                [xi, wi, bi, n, din, dout](Graph& g, Id self) {
                  const Tensor<T>& gy = g.node(self).grad;
                  const Tensor<T>& x = g.value(xi);
                  const Tensor<T>& w = g.value(wi);
                  if (g.needs(xi)) {
                    Tensor<T>& gx = g.grad_acc(xi);
                    for (int i = 0; i < n; ++i) {
                      const T* gyr = &gy.data[static_cast<size_t>(i) * dout];
                      T* gxr = &gx.data[static_cast<size_t>(i) * din];
                      for (int d = 0; d < din; ++d) {
                        const T* wr = &w.data[static_cast<size_t>(d) * dout];
                        T acc = T(0);
                        for (int o = 0; o < dout; ++o) acc += gyr[o] * wr[o];
                        gxr[d] += acc;
                      }
                    }
                  }
                  if (g.needs(wi)) {
                    Tensor<T>& gw = g.grad_acc(wi);
                    for (int i = 0; i < n; ++i) {
                      const T* xr = &x.data[static_cast<size_t>(i) * din];
                      const T* gyr = &gy.data[static_cast<size_t>(i) * dout];
                      for (int d = 0; d < din; ++d) {
                        const T xv = xr[d];
                        T* gwr = &gw.data[static_cast<size_t>(d) * dout];
                        for (int o = 0; o < dout; ++o) gwr[o] += xv * gyr[o];
                      }
                    }
                  }
                  if (g.needs(bi)) {
                    Tensor<T>& gb = g.grad_acc(bi);
                    for (int i = 0; i < n; ++i) {
                      const T* gyr = &gy.data[static_cast<size_t>(i) * dout];
                      for (int o = 0; o < dout; ++o) gb.data[o] += gyr[o];
                    }
                  }
                });
  }

  /// 3x3 cross-correlation, stride 1, zero padding 1 (spatial size kept).
  /// x:[N,Cin,H,W], k:[Cout,Cin,3,3], b:[Cout].
  Id conv2d(Id xi, Id ki, Id bi) {
    const Tensor<T>& x = value(xi);
    const Tensor<T>& k = value(ki);
    const Tensor<T>& b = value(bi);
    if (x.ndim() != 4 || k.ndim() != 4 || k.dim(2) != 3 || k.dim(3) != 3) {
      throw DimensionError("conv2d: expected x [N,C,H,W] and 3x3 kernel, got x " +
                           x.shape_str() + ", k " + k.shape_str());
    }
    if (x.dim(1) != k.dim(1)) {
      throw DimensionError("conv2d: input channels " + x.shape_str() +
                           " do not match kernel " + k.shape_str());
    }
    if (b.ndim() != 1 || b.dim(0) != k.dim(0)) {
      throw DimensionError("conv2d: bias " + b.shape_str() + " incompatible with kernel " +
                           k.shape_str());
    }
    const int n = x.dim(0), cin = x.dim(1), h = x.dim(2), w = x.dim(3), cout = k.dim(0);
    Tensor<T> y({n, cout, h, w});
    for (int in = 0; in < n; ++in) {
      for (int co = 0; co < cout; ++co) {
        T* __restrict yp = &y.data[(static_cast<size_t>(in) * cout + co) * h * w];
        const T bias = b.data[co];
        for (int i = 0; i < h * w; ++i) yp[i] = bias;
        for (int ci = 0; ci < cin; ++ci) {
          const T* __restrict xp = &x.data[(static_cast<size_t>(in) * cin + ci) * h * w];
          const T* kp = &k.data[((static_cast<size_t>(co) * cin + ci) * 3) * 3];
          for (int ky = 0; ky < 3; ++ky) {
            for (int kx = 0; kx < 3; ++kx) {
              const T kv = kp[ky * 3 + kx];
              const int x_lo = std::max(0, 1 - kx), x_hi = std::min(w, w + 1 - kx);
              for (int oy = 0; oy < h; ++oy) {
                const int iy = oy + ky - 1;
                if (iy < 0 || iy >= h) continue;
                T* __restrict yr = yp + static_cast<size_t>(oy) * w;
                const T* __restrict xr = xp + static_cast<size_t>(iy) * w + (kx - 1);
                for (int ox = x_lo; ox < x_hi; ++ox) yr[ox] += kv * xr[ox];
              }
            }
          }
        }
      }
    }
    check_finite(y, "conv2d");
    return push(std::move(y), needs(xi) || needs(ki) || needs(bi),
                [xi, ki, bi, n, cin, h, w, cout](Graph& g, Id self) {
                  const Tensor<T>& gy = g.node(self).grad;
                  const Tensor<T>& x = g.value(xi);
                  const Tensor<T>& k = g.value(ki);
                  if (g.needs(xi)) {
                    Tensor<T>& gx = g.grad_acc(xi);
                    for (int in = 0; in < n; ++in)
                      for (int co = 0; co < cout; ++co) {
                        const T* gyp = &gy.data[(static_cast<size_t>(in) * cout + co) * h * w];
                        for (int ci = 0; ci < cin; ++ci) {
                          T* gxp = &gx.data[(static_cast<size_t>(in) * cin + ci) * h * w];
                          const T* kp = &k.data[((static_cast<size_t>(co) * cin + ci) * 3) * 3];
                          for (int ky = 0; ky < 3; ++ky)
                            for (int kx = 0; kx < 3; ++kx) {
                              const T kv = kp[ky * 3 + kx];
                              const int x_lo = std::max(0, 1 - kx), x_hi = std::min(w, w + 1 - kx);
                              for (int oy = 0; oy < h; ++oy) {
                                const int iy = oy + ky - 1;
                                if (iy < 0 || iy >= h) continue;
                                const T* gyr = gyp + static_cast<size_t>(oy) * w;
                                T* gxr = gxp + static_cast<size_t>(iy) * w + (kx - 1);
                                for (int ox = x_lo; ox < x_hi; ++ox) gxr[ox] += kv * gyr[ox];
                              }
                            }
                        }
                      }
                  }
                  if (g.needs(ki)) {
                    Tensor<T>& gk = g.grad_acc(ki);
                    for (int in = 0; in < n; ++in)
                      for (int co = 0; co < cout; ++co) {
                        const T* gyp = &gy.data[(static_cast<size_t>(in) * cout + co) * h * w];
                        for (int ci = 0; ci < cin; ++ci) {
                          const T* xp = &x.data[(static_cast<size_t>(in) * cin + ci) * h * w];
                          T* gkp = &gk.data[((static_cast<size_t>(co) * cin + ci) * 3) * 3];
                          for (int ky = 0; ky < 3; ++ky)
                            for (int kx = 0; kx < 3; ++kx) {
                              T acc = T(0);
                              const int x_lo = std::max(0, 1 - kx), x_hi = std::min(w, w + 1 - kx);
                              for (int oy = 0; oy < h; ++oy) {
                                const int iy = oy + ky - 1;
                                if (iy < 0 || iy >= h) continue;
                                const T* gyr = gyp + static_cast<size_t>(oy) * w;
                                const T* xr = xp + static_cast<size_t>(iy) * w + (kx - 1);
                                for (int ox = x_lo; ox < x_hi; ++ox) acc += gyr[ox] * xr[ox];
                              }
                              gkp[ky * 3 + kx] += acc;
                            }
                        }
                      }
                  }
                  if (g.needs(bi)) {
                    Tensor<T>& gb = g.grad_acc(bi);
                    for (int in = 0; in < n; ++in)
                      for (int co = 0; co < cout; ++co) {
                        const T* gyp = &gy.data[(static_cast<size_t>(in) * cout + co) * h * w];
                        T acc = T(0);
                        for (int i = 0; i < h * w; ++i) acc += gyp[i];
                        gb.data[co] += acc;
                      }
                  }
                });
  }

  /// 2x2 max pooling, stride 2. Gradient is routed to the argmax of each
  /// window; the first element in window scan order wins ties.
  Id maxpool2d(Id xi) {
    const Tensor<T>& x = value(xi);
    if (x.ndim() != 4 || x.dim(2) % 2 != 0 || x.dim(3) % 2 != 0) {
      throw DimensionError("maxpool2d: spatial dims must be even, got " + x.shape_str());
    }
    const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    const int oh = h / 2, ow = w / 2;
    Tensor<T> y({n, c, oh, ow});
    std::vector<int> argmax(y.numel());
    size_t oi = 0;
    for (int in = 0; in < n; ++in)
      for (int ic = 0; ic < c; ++ic) {
        const size_t plane = (static_cast<size_t>(in) * c + ic) * h * w;
        for (int oy = 0; oy < oh; ++oy)
          for (int ox = 0; ox < ow; ++ox, ++oi) {
            T best{};
            int besti = -1;
            for (int ky = 0; ky < 2; ++ky)
              for (int kx = 0; kx < 2; ++kx) {
                const int iy = oy * 2 + ky, ix = ox * 2 + kx;
                const size_t idx = plane + static_cast<size_t>(iy) * w + ix;
                const T v = x.data[idx];
                if (besti < 0 || v > best) {
                  best = v;
                  besti = static_cast<int>(idx);
                }
              }
            y.data[oi] = best;
            argmax[oi] = besti;
          }
      }
    check_finite(y, "maxpool2d");
    return push(std::move(y), needs(xi),
                [xi, argmax = std::move(argmax)](Graph& g, Id self) {
                  const Tensor<T>& gy = g.node(self).grad;
                  if (!g.needs(xi)) return;
                  Tensor<T>& gx = g.grad_acc(xi);
                  for (size_t i = 0; i < gy.numel(); ++i) {
                    gx.data[static_cast<size_t>(argmax[i])] += gy.data[i];
                  }
                });
  }

  /// Elementwise max(0, x). Subgradient at 0 is 0.
  Id relu(Id xi) {
    const Tensor<T>& x = value(xi);
    Tensor<T> y(x.shape);
    for (size_t i = 0; i < x.numel(); ++i) y.data[i] = x.data[i] > T(0) ? x.data[i] : T(0);
    return push(std::move(y), needs(xi), [xi](Graph& g, Id self) {
      if (!g.needs(xi)) return;
      const Tensor<T>& gy = g.node(self).grad;
      const Tensor<T>& x = g.value(xi);
      Tensor<T>& gx = g.grad_acc(xi);
      for (size_t i = 0; i < x.numel(); ++i) {
        if (x.data[i] > T(0)) gx.data[i] += gy.data[i];
      }
    });
  }

  /// Per-channel batch normalization over (N,H,W). Train mode normalizes by
  /// batch statistics and folds them into `running` with the given momentum;
  /// eval mode reads `running` and leaves it untouched.
  Id batchnorm2d(Id xi, Id gi, Id bi, BnRunningStats<T>* running, Mode mode,
                 T momentum = T(0.9), T eps = T(1e-5)) {
    const Tensor<T>& x = value(xi);
    const Tensor<T>& gamma = value(gi);
    const Tensor<T>& beta = value(bi);
    if (x.ndim() != 4) throw DimensionError("batchnorm2d: expected [N,C,H,W], got " + x.shape_str());
    const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    if (gamma.ndim() != 1 || gamma.dim(0) != c || beta.ndim() != 1 || beta.dim(0) != c) {
      throw DimensionError("batchnorm2d: gamma/beta must be [" + std::to_string(c) + "]");
    }
    if (mode == Mode::train && n < 2) {
      throw ConfigError("batchnorm2d: train mode needs batch size >= 2, got " +
                        std::to_string(n));
    }
    const size_t plane = static_cast<size_t>(h) * w;
    const T m = static_cast<T>(n) * static_cast<T>(plane);
    Tensor<T> y(x.shape);
    Tensor<T> xhat(x.shape);
    std::vector<T> inv_std(c);
    for (int ic = 0; ic < c; ++ic) {
      T mean, var;
      if (mode == Mode::train) {
        T sum = T(0);
        for (int in = 0; in < n; ++in) {
          const T* xp = &x.data[(static_cast<size_t>(in) * c + ic) * plane];
          for (size_t i = 0; i < plane; ++i) sum += xp[i];
        }
        mean = sum / m;
        T sq = T(0);
        for (int in = 0; in < n; ++in) {
          const T* xp = &x.data[(static_cast<size_t>(in) * c + ic) * plane];
          for (size_t i = 0; i < plane; ++i) {
            const T d = xp[i] - mean;
            sq += d * d;
          }
        }
        var = sq / m;
        running->mean.data[ic] = momentum * running->mean.data[ic] + (T(1) - momentum) * mean;
        running->var.data[ic] = momentum * running->var.data[ic] + (T(1) - momentum) * var;
      } else {
        mean = running->mean.data[ic];
        var = running->var.data[ic];
      }
      const T is = T(1) / std::sqrt(var + eps);
      inv_std[ic] = is;
      const T gm = gamma.data[ic], bt = beta.data[ic];
      for (int in = 0; in < n; ++in) {
        const T* xp = &x.data[(static_cast<size_t>(in) * c + ic) * plane];
        T* hp = &xhat.data[(static_cast<size_t>(in) * c + ic) * plane];
        T* yp = &y.data[(static_cast<size_t>(in) * c + ic) * plane];
        for (size_t i = 0; i < plane; ++i) {
          hp[i] = (xp[i] - mean) * is;
          yp[i] = gm * hp[i] + bt;
        }
      }
    }
    check_finite(y, "batchnorm2d");
    return push(std::move(y), needs(xi) || needs(gi) || needs(bi),
                [xi, gi, bi, n, c, plane, m, mode, xhat = std::move(xhat),
                 inv_std = std::move(inv_std)](Graph& g, Id self) {
                  const Tensor<T>& gy = g.node(self).grad;
                  const Tensor<T>& gamma = g.value(gi);
                  for (int ic = 0; ic < c; ++ic) {
                    // Channel-wise reductions shared by all three gradients.
                    T sum_gy = T(0), sum_gy_xhat = T(0);
                    for (int in = 0; in < n; ++in) {
                      const size_t off = (static_cast<size_t>(in) * c + ic) * plane;
                      for (size_t i = 0; i < plane; ++i) {
                        sum_gy += gy.data[off + i];
                        sum_gy_xhat += gy.data[off + i] * xhat.data[off + i];
                      }
                    }
                    if (g.needs(gi)) g.grad_acc(gi).data[ic] += sum_gy_xhat;
                    if (g.needs(bi)) g.grad_acc(bi).data[ic] += sum_gy;
                    if (g.needs(xi)) {
                      Tensor<T>& gx = g.grad_acc(xi);
                      const T gm = gamma.data[ic], is = inv_std[ic];
                      for (int in = 0; in < n; ++in) {
                        const size_t off = (static_cast<size_t>(in) * c + ic) * plane;
                        for (size_t i = 0; i < plane; ++i) {
                          if (mode == Mode::train) {
                            gx.data[off + i] += gm * is / m *
                                                (m * gy.data[off + i] - sum_gy -
                                                 xhat.data[off + i] * sum_gy_xhat);
                          } else {
                            gx.data[off + i] += gm * is * gy.data[off + i];
                          }
                        }
                      }
                    }
                  }
                });
  }

  struct SoftmaxCeResult {
    Id loss;         // per-sample loss vector [N]
    Tensor<T> probs; // softmax probabilities [N,C], plain values
  };

  /// Numerically stable softmax + cross-entropy against a constant target
  /// distribution. The gradient at the logits is exactly probs - target,
  /// scaled per sample by the incoming loss gradient.
  SoftmaxCeResult softmax_cross_entropy(Id li, const Tensor<T>& target) {
    const Tensor<T>& logits = value(li);
    if (logits.ndim() != 2 || !logits.same_shape(target)) {
      throw DimensionError("softmax_cross_entropy: logits " + logits.shape_str() +
                           " vs target " + Tensor<T>::shape_str(target.shape));
    }
    const int n = logits.dim(0), c = logits.dim(1);
    for (int i = 0; i < n; ++i) {
      T s = T(0);
      for (int j = 0; j < c; ++j) s += target.at2(i, j);
      if (std::abs(static_cast<double>(s) - 1.0) > 1e-6) {
        throw ValidationError("softmax_cross_entropy: target row " + std::to_string(i) +
                              " sums to " + std::to_string(static_cast<double>(s)));
      }
    }
    Tensor<T> probs = softmax_rows(logits);
    Tensor<T> loss({n});
    for (int i = 0; i < n; ++i) {
      T acc = T(0);
      for (int j = 0; j < c; ++j) {
        const T t = target.at2(i, j);
        if (t != T(0)) {
          acc -= t * std::log(std::max(probs.at2(i, j), static_cast<T>(kLogFloor)));
        }
      }
      loss.data[i] = acc;
    }
    check_finite(loss, "softmax_cross_entropy");
    Id loss_id = push(std::move(loss), needs(li),
                      [li, probs, target, n, c](Graph& g, Id self) {
                        if (!g.needs(li)) return;
                        const Tensor<T>& gl = g.node(self).grad;
                        Tensor<T>& gx = g.grad_acc(li);
                        for (int i = 0; i < n; ++i) {
                          const T s = gl.data[i];
                          for (int j = 0; j < c; ++j) {
                            gx.at2(i, j) += s * (probs.at2(i, j) - target.at2(i, j));
                          }
                        }
                      });
    return {loss_id, std::move(probs)};
  }

  /// Elementwise sum of two same-shape nodes.
  Id add(Id ai, Id bi) {
    const Tensor<T>& a = value(ai);
    const Tensor<T>& b = value(bi);
    if (!a.same_shape(b)) {
      throw DimensionError("add: " + a.shape_str() + " vs " + b.shape_str());
    }
    Tensor<T> y(a.shape);
    for (size_t i = 0; i < a.numel(); ++i) y.data[i] = a.data[i] + b.data[i];
    check_finite(y, "add");
    return push(std::move(y), needs(ai) || needs(bi), [ai, bi](Graph& g, Id self) {
      const Tensor<T>& gy = g.node(self).grad;
      if (g.needs(ai)) {
        Tensor<T>& ga = g.grad_acc(ai);
        for (size_t i = 0; i < gy.numel(); ++i) ga.data[i] += gy.data[i];
      }
      if (g.needs(bi)) {
        Tensor<T>& gb = g.grad_acc(bi);
        for (size_t i = 0; i < gy.numel(); ++i) gb.data[i] += gy.data[i];
      }
    });
  }

  /// Elementwise product of two same-shape nodes.
  Id mul(Id ai, Id bi) {
    const Tensor<T>& a = value(ai);
    const Tensor<T>& b = value(bi);
    if (!a.same_shape(b)) {
      throw DimensionError("mul: " + a.shape_str() + " vs " + b.shape_str());
    }
    Tensor<T> y(a.shape);
    for (size_t i = 0; i < a.numel(); ++i) y.data[i] = a.data[i] * b.data[i];
    check_finite(y, "mul");
    return push(std::move(y), needs(ai) || needs(bi), [ai, bi](Graph& g, Id self) {
      const Tensor<T>& gy = g.node(self).grad;
      const Tensor<T>& a = g.value(ai);
      const Tensor<T>& b = g.value(bi);
      if (g.needs(ai)) {
        Tensor<T>& ga = g.grad_acc(ai);
        for (size_t i = 0; i < gy.numel(); ++i) ga.data[i] += gy.data[i] * b.data[i];
      }
      if (g.needs(bi)) {
        Tensor<T>& gb = g.grad_acc(bi);
        for (size_t i = 0; i < gy.numel(); ++i) gb.data[i] += gy.data[i] * a.data[i];
      }
    });
  }

  /// y = c * x for a compile-time constant factor.
  Id scale(Id xi, T factor) {
    const Tensor<T>& x = value(xi);
    Tensor<T> y(x.shape);
    for (size_t i = 0; i < x.numel(); ++i) y.data[i] = factor * x.data[i];
    check_finite(y, "scale");
    return push(std::move(y), needs(xi), [xi, factor](Graph& g, Id self) {
      if (!g.needs(xi)) return;
      const Tensor<T>& gy = g.node(self).grad;
      Tensor<T>& gx = g.grad_acc(xi);
      for (size_t i = 0; i < gy.numel(); ++i) gx.data[i] += factor * gy.data[i];
    });
  }

  /// Scalar dot product of a vector node with constant weights.
  Id weighted_sum(Id xi, std::vector<T> weights) {
    const Tensor<T>& x = value(xi);
    if (x.numel() != weights.size()) {
      throw DimensionError("weighted_sum: vector " + x.shape_str() + " vs " +
                           std::to_string(weights.size()) + " weights");
    }
    T acc = T(0);
    for (size_t i = 0; i < weights.size(); ++i) acc += weights[i] * x.data[i];
    Tensor<T> y = Tensor<T>::scalar(acc);
    check_finite(y, "weighted_sum");
    return push(std::move(y), needs(xi), [xi, weights = std::move(weights)](Graph& g, Id self) {
      if (!g.needs(xi)) return;
      const T s = g.node(self).grad.data[0];
      Tensor<T>& gx = g.grad_acc(xi);
      for (size_t i = 0; i < weights.size(); ++i) gx.data[i] += s * weights[i];
    });
  }

  /// Scalar sum of all elements.
  Id sum(Id xi) {
    const Tensor<T>& x = value(xi);
    T acc = T(0);
    for (T v : x.data) acc += v;
    Tensor<T> y = Tensor<T>::scalar(acc);
    check_finite(y, "sum");
    return push(std::move(y), needs(xi), [xi](Graph& g, Id self) {
      if (!g.needs(xi)) return;
      const T s = g.node(self).grad.data[0];
      Tensor<T>& gx = g.grad_acc(xi);
      for (size_t i = 0; i < gx.numel(); ++i) gx.data[i] += s;
    });
  }

  /// Reshape [N,...] to [N,rest]. Data order is unchanged.
  Id flatten(Id xi) {
    const Tensor<T>& x = value(xi);
    if (x.ndim() < 2) throw DimensionError("flatten: expected at least 2 dims, got " + x.shape_str());
    const int n = x.dim(0);
    const int rest = static_cast<int>(x.numel()) / n;
    Tensor<T> y;
    y.shape = {n, rest};
    y.data = x.data;
    return push(std::move(y), needs(xi), [xi](Graph& g, Id self) {
      if (!g.needs(xi)) return;
      const Tensor<T>& gy = g.node(self).grad;
      Tensor<T>& gx = g.grad_acc(xi);
      for (size_t i = 0; i < gy.numel(); ++i) gx.data[i] += gy.data[i];
    });
  }

  /// Reverse pass from a scalar node. Populates gradients for every node
  /// with requires_grad reachability; errors if run twice without reset().
  void backward(Id loss) {
    if (backward_run_) throw StateError("backward() called twice without reset()");
    if (value(loss).numel() != 1) {
      throw ValidationError("backward() expects a scalar, got " + value(loss).shape_str());
    }
    for (Node& nd : nodes_) {
      nd.grad = Tensor<T>(nd.value.shape, T(0));
    }
    backward_run_ = true;
    node(loss).grad.data[0] = T(1);
    for (Id i = static_cast<Id>(nodes_.size()) - 1; i >= 0; --i) {
      Node& nd = node(i);
      if (nd.backward && nd.requires_grad) nd.backward(*this, i);
    }
  }

  /// Drops gradients and allows a new backward pass over the same tape.
  void reset() {
    for (Node& nd : nodes_) nd.grad = Tensor<T>();
    backward_run_ = false;
  }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    bool requires_grad = false;
    std::function<void(Graph&, Id)> backward;
  };

  Node& node(Id id) { return nodes_[static_cast<size_t>(id)]; }
  const Node& node(Id id) const { return nodes_[static_cast<size_t>(id)]; }

  bool needs(Id id) const { return node(id).requires_grad; }

  Tensor<T>& grad_acc(Id id) { return node(id).grad; }

  Id push(Tensor<T> value, bool requires_grad, std::function<void(Graph&, Id)> bw) {
    if (backward_run_) {
      throw StateError("graph extended after backward(); call reset() first");
    }
    Node nd;
    nd.value = std::move(value);
    nd.requires_grad = requires_grad;
    nd.backward = std::move(bw);
    nodes_.push_back(std::move(nd));
    return static_cast<Id>(nodes_.size()) - 1;
  }

  std::vector<Node> nodes_;
  bool backward_run_ = false;
};

}  // namespace comatch

#endif  // COMATCH_GRAPH_HPP
