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

#ifndef COMATCH_GRAD_CHECK_HPP
#define COMATCH_GRAD_CHECK_HPP

#include <cmath>
#include <string>
#include <vector>

#include "comatch/graph.hpp"
#include "comatch/model.hpp"
#include "comatch/rng.hpp"
#include "comatch/tensor.hpp"

namespace comatch {

struct LayerGradReport {
  std::string name;
  double max_rel_error = 0.0;
  double max_abs_grad = 0.0;
  int checked = 0;
  int skipped = 0;  // samples rejected as kink-contaminated at every step size
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  bool passed = false;
  std::vector<LayerGradReport> layers;
};

/// rel(a, f) with an absolute floor: differences between gradients smaller
/// than 1e-4 in combined magnitude are below what h=1e-5 central
/// differences can resolve, so they are measured against the floor instead.
inline double grad_rel_error(double analytic, double fd) {
  const double denom = std::max(std::abs(analytic) + std::abs(fd), 1e-4);
  return std::abs(analytic - fd) / denom;
}

/// Central-difference check of d(loss)/d(param) on a random subsample of at
/// most `max_params_per_layer` entries per parameter tensor. `build` records
/// the loss on a fresh graph and returns the scalar loss node; it runs in
/// 64-bit precision.
///
/// Finite differences are only meaningful away from relu/maxpool kinks. A
/// perturbation window that straddles a kink shows up in the second
/// difference |L+ + L- - 2*L0| / 2h, which for a piecewise-linear crossing
/// equals the central-difference error itself. Samples whose estimated kink
/// error exceeds half the tolerance are retried at h/10 and h/100 (smaller
/// windows cross fewer kinks) and finally skipped, so the reported error
/// reflects non-kink points only.
template <class LossBuilder>
GradCheckReport grad_check_loss(Network<double>& net, LossBuilder&& build, double tolerance,
                                int max_params_per_layer = 200, double h = 1e-5,
                                uint64_t seed = 0x5eedULL) {
  // Train-mode batchnorm folds batch stats into the running buffers on every
  // forward; snapshot them so the repeated FD evaluations leave no trace.
  std::vector<BnRunningStats<double>> stats_backup;
  for (int i = 0; i < net.bn_stats_count(); ++i) stats_backup.push_back(net.bn_stats(i));

  std::vector<Tensor<double>> analytic;
  {
    Graph<double> g;
    typename Graph<double>::Id loss = build(g, net);
    g.backward(loss);
    for (int i = 0; i < net.param_tensor_count(); ++i) {
      analytic.push_back(g.grad(net.param_leaf(i)));
    }
  }

  auto eval_loss = [&]() {
    Graph<double> g;
    return g.value(build(g, net)).data[0];
  };

  const double base = eval_loss();

  GradCheckReport report;
  report.tolerance = tolerance;
  for (int pi = 0; pi < net.param_tensor_count(); ++pi) {
    Tensor<double>& value = net.param_value(pi);
    LayerGradReport layer;
    layer.name = net.param_name(pi);
    rng::Stream stream(seed, rng::StreamTag::grad_check, {static_cast<uint64_t>(pi)});
    std::vector<int> picks =
        stream.sample_indices(static_cast<int>(value.numel()), max_params_per_layer);
    for (int idx : picks) {
      const double old = value.data[static_cast<size_t>(idx)];
      const double a = analytic[static_cast<size_t>(pi)].data[static_cast<size_t>(idx)];
      bool accepted = false;
      for (double step : {h, h / 10.0, h / 100.0}) {
        value.data[static_cast<size_t>(idx)] = old + step;
        const double up = eval_loss();
        value.data[static_cast<size_t>(idx)] = old - step;
        const double down = eval_loss();
        value.data[static_cast<size_t>(idx)] = old;
        const double fd = (up - down) / (2.0 * step);
        const double kink = std::abs(up + down - 2.0 * base) / (2.0 * step);
        const double denom = std::max(std::abs(a) + std::abs(fd), 1e-4);
        if (kink / denom > 0.5 * tolerance) continue;
        layer.max_rel_error = std::max(layer.max_rel_error, grad_rel_error(a, fd));
        layer.max_abs_grad = std::max(layer.max_abs_grad, std::abs(a));
        ++layer.checked;
        accepted = true;
        break;
      }
      if (!accepted) ++layer.skipped;
    }
    report.max_rel_error = std::max(report.max_rel_error, layer.max_rel_error);
    report.layers.push_back(std::move(layer));
  }
  report.passed = report.max_rel_error < tolerance;

  for (int i = 0; i < net.bn_stats_count(); ++i) net.bn_stats(i) = stats_backup[static_cast<size_t>(i)];
  return report;
}

/// Default check: mean softmax cross-entropy of the network on `batch`
/// against the given target distribution.
inline GradCheckReport grad_check(Network<double>& net, const Tensor<double>& batch,
                                  const Tensor<double>& targets, double tolerance,
                                  int max_params_per_layer = 200, double h = 1e-5,
                                  uint64_t seed = 0x5eedULL) {
  const int n = batch.dim(0);
  auto build = [&](Graph<double>& g, Network<double>& model) {
    auto logits = model.forward(g, batch);
    auto ce = g.softmax_cross_entropy(logits, targets);
    return g.weighted_sum(ce.loss, std::vector<double>(static_cast<size_t>(n), 1.0 / n));
  };
  return grad_check_loss(net, build, tolerance, max_params_per_layer, h, seed);
}

}  // namespace comatch

#endif  // COMATCH_GRAD_CHECK_HPP
