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

#ifndef COMATCH_NOISE_HPP
#define COMATCH_NOISE_HPP

#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "comatch/dataset.hpp"
#include "comatch/errors.hpp"
#include "comatch/rng.hpp"

namespace comatch {

enum class NoiseModel { symmetric, asymmetric };

/// Row-stochastic label-flip matrix: q[i][j] = Pr[noisy = j | clean = i].
struct TransitionMatrix {
  int class_count = 0;
  NoiseModel model = NoiseModel::symmetric;
  double epsilon = 0.0;
  std::vector<double> q;  // class_count x class_count, row-major

  double at(int i, int j) const {
    return q[static_cast<size_t>(i) * class_count + j];
  }
  double& at(int i, int j) {
    return q[static_cast<size_t>(i) * class_count + j];
  }

  void validate() const {
    for (int i = 0; i < class_count; ++i) {
      double sum = 0.0;
      for (int j = 0; j < class_count; ++j) {
        const double v = at(i, j);
        if (v < 0.0 || v > 1.0) {
          throw ValidationError("transition entry Q[" + std::to_string(i) + "][" +
                                std::to_string(j) + "] = " + std::to_string(v) +
                                " outside [0,1]");
        }
        sum += v;
      }
      if (std::abs(sum - 1.0) > 1e-9) {
        throw ValidationError("transition row " + std::to_string(i) + " sums to " +
                              std::to_string(sum));
      }
    }
  }
};

/// CIFAR-10 asymmetric map: truck->automobile, bird->airplane, deer->horse,
/// cat<->dog (class ids: airplane 0, automobile 1, bird 2, cat 3, deer 4,
/// dog 5, frog 6, horse 7, ship 8, truck 9).
inline std::vector<std::pair<int, int>> cifar10_asymmetric_pairs() {
  return {{9, 1}, {2, 0}, {4, 7}, {3, 5}};
}

/// Standard CIFAR-100 fine-label -> coarse-label (superclass) table:
/// 20 superclasses of 5 fine classes each.
inline const std::array<int, 100>& cifar100_coarse_of_fine() {
  static const std::array<int, 100> table = {
      4,  1,  14, 8,  0,  6,  7,  7,  18, 3,  3,  14, 9,  18, 7,  11, 3,  9,  7,  11,
      6,  11, 5,  10, 7,  6,  13, 15, 3,  15, 0,  11, 1,  10, 12, 14, 16, 9,  11, 5,
      5,  19, 8,  8,  15, 13, 14, 17, 18, 10, 16, 4,  17, 4,  2,  0,  17, 4,  18, 17,
      10, 3,  2,  12, 12, 16, 12, 1,  9,  19, 2,  10, 0,  1,  16, 12, 9,  13, 15, 13,
      16, 19, 2,  4,  6,  19, 5,  5,  8,  19, 18, 1,  2,  15, 6,  0,  17, 8,  14, 13};
  return table;
}

/// CIFAR-100 asymmetric pairs: each fine class flips into the next fine
/// class of its superclass, circularly, so the permutation restricted to a
/// superclass is a single 5-cycle.
inline std::vector<std::pair<int, int>> cifar100_superclass_pairs() {
  const auto& coarse = cifar100_coarse_of_fine();
  std::map<int, std::vector<int>> groups;
  for (int fine = 0; fine < 100; ++fine) groups[coarse[static_cast<size_t>(fine)]].push_back(fine);
  std::vector<std::pair<int, int>> pairs;
  for (auto& [_, members] : groups) {
    for (size_t i = 0; i < members.size(); ++i) {
      pairs.push_back({members[i], members[(i + 1) % members.size()]});
    }
  }
  return pairs;
}

/// Builds Q for the requested noise model.
///   symmetric:  diagonal 1-eps, every off-diagonal eps/(C-1)
///   asymmetric: Q[s][t] = eps and Q[s][s] = 1-eps for every (s,t) pair;
///               unmapped classes keep Q[c][c] = 1. pair_map defaults to the
///               CIFAR-10 map for C=10 and the circular superclass map for
///               C=100, and is required otherwise.
inline TransitionMatrix build_transition_matrix(
    NoiseModel model, double epsilon, int class_count,
    const std::vector<std::pair<int, int>>* pair_map = nullptr) {
  if (class_count < 2) throw ValidationError("transition matrix needs class_count >= 2");
  if (epsilon < 0.0 || epsilon >= 1.0) {
    throw ValidationError("noise ratio must lie in [0,1), got " + std::to_string(epsilon));
  }
  TransitionMatrix t;
  t.class_count = class_count;
  t.model = model;
  t.epsilon = epsilon;
  t.q.assign(static_cast<size_t>(class_count) * class_count, 0.0);
  if (model == NoiseModel::symmetric) {
    const double off = epsilon / (class_count - 1);
    for (int i = 0; i < class_count; ++i) {
      for (int j = 0; j < class_count; ++j) t.at(i, j) = i == j ? 1.0 - epsilon : off;
    }
  } else {
    std::vector<std::pair<int, int>> pairs;
    if (pair_map != nullptr) {
      pairs = *pair_map;
    } else if (class_count == 10) {
      pairs = cifar10_asymmetric_pairs();
    } else if (class_count == 100) {
      pairs = cifar100_superclass_pairs();
    } else {
      throw ValidationError("asymmetric noise for " + std::to_string(class_count) +
                            " classes needs an explicit pair map");
    }
    for (int c = 0; c < class_count; ++c) t.at(c, c) = 1.0;
    for (auto [src, dst] : pairs) {
      if (src < 0 || src >= class_count || dst < 0 || dst >= class_count) {
        throw ValidationError("pair map entry (" + std::to_string(src) + "," +
                              std::to_string(dst) + ") outside [0," +
                              std::to_string(class_count) + ")");
      }
      if (src == dst) {
        throw ValidationError("pair map flips class " + std::to_string(src) + " to itself");
      }
      t.at(src, src) = 1.0 - epsilon;
      t.at(src, dst) = epsilon;
    }
  }
  t.validate();
  return t;
}

/// Redraws every noisy label independently from the row q[clean_label].
/// The per-sample stream is keyed on (seed, sample index), so corruption of
/// any subset is order-independent and the whole operation is a pure
/// function of (clean labels, Q, seed).
inline LabeledDataset corrupt_labels(const LabeledDataset& dataset, const TransitionMatrix& q,
                                     uint64_t seed) {
  if (dataset.split() != Split::train) {
    throw ValidationError("only the train split may be corrupted");
  }
  if (dataset.corrupted()) throw StateError("dataset is already corrupted");
  if (dataset.class_count() != q.class_count) {
    throw ValidationError("transition matrix is " + std::to_string(q.class_count) +
                          "-class but dataset has " + std::to_string(dataset.class_count()));
  }
  q.validate();
  LabeledDataset out = dataset;
  std::vector<int> noisy(static_cast<size_t>(dataset.size()));
  for (int i = 0; i < dataset.size(); ++i) {
    const int clean = dataset.clean_labels_for_metrics()[static_cast<size_t>(i)];
    rng::Stream stream(seed, rng::StreamTag::noise, {static_cast<uint64_t>(i)});
    const double u = stream.uniform();
    double cum = 0.0;
    int drawn = q.class_count - 1;
    for (int j = 0; j < q.class_count; ++j) {
      cum += q.at(clean, j);
      if (u < cum) {
        drawn = j;
        break;
      }
    }
    noisy[static_cast<size_t>(i)] = drawn;
  }
  out.install_noisy_labels(std::move(noisy));
  return out;
}

struct NoiseAudit {
  int class_count = 0;
  double realized_flip_rate = 0.0;
  std::vector<double> empirical_q;  // row-normalized confusion, C x C

  double at(int i, int j) const {
    return empirical_q[static_cast<size_t>(i) * class_count + j];
  }
};

/// Row-normalized confusion between clean and noisy labels. Classes absent
/// from the dataset keep an identity row.
inline NoiseAudit noise_audit(const LabeledDataset& dataset) {
  if (!dataset.corrupted()) throw StateError("noise_audit needs a corrupted dataset");
  const int c = dataset.class_count();
  NoiseAudit audit;
  audit.class_count = c;
  audit.empirical_q.assign(static_cast<size_t>(c) * c, 0.0);
  std::vector<long long> counts(static_cast<size_t>(c) * c, 0);
  std::vector<long long> row_totals(static_cast<size_t>(c), 0);
  long long flips = 0;
  for (int i = 0; i < dataset.size(); ++i) {
    const int clean = dataset.clean_label_for_metrics(i);
    const int noisy = dataset.noisy_label(i);
    ++counts[static_cast<size_t>(clean) * c + noisy];
    ++row_totals[static_cast<size_t>(clean)];
    if (clean != noisy) ++flips;
  }
  audit.realized_flip_rate = static_cast<double>(flips) / dataset.size();
  for (int i = 0; i < c; ++i) {
    if (row_totals[static_cast<size_t>(i)] == 0) {
      audit.empirical_q[static_cast<size_t>(i) * c + i] = 1.0;
      continue;
    }
    for (int j = 0; j < c; ++j) {
      audit.empirical_q[static_cast<size_t>(i) * c + j] =
          static_cast<double>(counts[static_cast<size_t>(i) * c + j]) /
          static_cast<double>(row_totals[static_cast<size_t>(i)]);
    }
  }
  return audit;
}

}  // namespace comatch

#endif  // COMATCH_NOISE_HPP
