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

#ifndef COMATCH_TENSOR_HPP
#define COMATCH_TENSOR_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <sstream>
#include <string>
#include <vector>

#include "comatch/errors.hpp"

namespace comatch {

/// Dense row-major tensor. Shapes used in this library are [N,D] for flat
/// features and [N,C,H,W] for images; scalars are shape [1].
template <class T>
struct Tensor {
  std::vector<int> shape;
  std::vector<T> data;
  bool requires_grad = false;

  Tensor() = default;

  explicit Tensor(std::vector<int> s, T fill = T(0)) : shape(std::move(s)) {
    data.assign(count(shape), fill);
  }

  static Tensor zeros(std::vector<int> s) { return Tensor(std::move(s)); }

  static Tensor full(std::vector<int> s, T v) { return Tensor(std::move(s), v); }

  static Tensor scalar(T v) {
    Tensor t({1});
    t.data[0] = v;
    return t;
  }

  static Tensor from(std::vector<int> s, std::vector<T> values) {
    Tensor t;
    t.shape = std::move(s);
    t.data = std::move(values);
    if (t.data.size() != count(t.shape)) {
      throw DimensionError("tensor data size " + std::to_string(t.data.size()) +
                           " does not match shape " + shape_str(t.shape));
    }
    return t;
  }

  static size_t count(const std::vector<int>& s) {
    size_t n = 1;
    for (int d : s) n *= static_cast<size_t>(d);
    return n;
  }

  size_t numel() const { return data.size(); }
  int ndim() const { return static_cast<int>(shape.size()); }
  int dim(int i) const { return shape[static_cast<size_t>(i)]; }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  T& at2(int n, int d) { return data[static_cast<size_t>(n) * dim(1) + d]; }
  T at2(int n, int d) const { return data[static_cast<size_t>(n) * dim(1) + d]; }

  T& at4(int n, int c, int h, int w) {
    return data[((static_cast<size_t>(n) * dim(1) + c) * dim(2) + h) * dim(3) + w];
  }
  T at4(int n, int c, int h, int w) const {
    return data[((static_cast<size_t>(n) * dim(1) + c) * dim(2) + h) * dim(3) + w];
  }

  static std::string shape_str(const std::vector<int>& s) {
    std::ostringstream os;
    os << '[';
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << ']';
    return os.str();
  }

  std::string shape_str() const { return shape_str(shape); }
};

template <class T>
inline void check_finite(const Tensor<T>& t, const char* op) {
  for (T v : t.data) {
    if (!std::isfinite(static_cast<double>(v))) {
      throw NumericError(std::string(op) + " produced a non-finite value");
    }
  }
}

template <class U, class T>
inline Tensor<U> cast(const Tensor<T>& t) {
  Tensor<U> r;
  r.shape = t.shape;
  r.requires_grad = t.requires_grad;
  r.data.resize(t.data.size());
  for (size_t i = 0; i < t.data.size(); ++i) r.data[i] = static_cast<U>(t.data[i]);
  return r;
}

/// Row-wise softmax with max subtraction. Rows of the result sum to 1
/// within 1e-6 for any finite input.
template <class T>
inline Tensor<T> softmax_rows(const Tensor<T>& logits) {
  if (logits.ndim() != 2) {
    throw DimensionError("softmax expects [N,C], got " + logits.shape_str());
  }
  const int n = logits.dim(0), c = logits.dim(1);
  Tensor<T> probs(logits.shape);
  for (int i = 0; i < n; ++i) {
    T m = logits.at2(i, 0);
    for (int j = 1; j < c; ++j) m = std::max(m, logits.at2(i, j));
    T sum = T(0);
    for (int j = 0; j < c; ++j) {
      T e = std::exp(logits.at2(i, j) - m);
      probs.at2(i, j) = e;
      sum += e;
    }
    for (int j = 0; j < c; ++j) probs.at2(i, j) /= sum;
  }
  return probs;
}

/// One-hot encoding of integer labels.
template <class T>
inline Tensor<T> one_hot(const std::vector<int>& labels, int class_count) {
  Tensor<T> t({static_cast<int>(labels.size()), class_count});
  for (size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= class_count) {
      throw ValidationError("label " + std::to_string(labels[i]) +
                            " outside [0," + std::to_string(class_count) + ")");
    }
    t.at2(static_cast<int>(i), labels[i]) = T(1);
  }
  return t;
}

/// Index of the row maximum; ties resolve to the lowest index.
template <class T>
inline int argmax_row(const Tensor<T>& t, int row) {
  int best = 0;
  for (int j = 1; j < t.dim(1); ++j) {
    if (t.at2(row, j) > t.at2(row, best)) best = j;
  }
  return best;
}

}  // namespace comatch

#endif  // COMATCH_TENSOR_HPP
