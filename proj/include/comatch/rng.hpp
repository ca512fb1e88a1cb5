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

#ifndef COMATCH_RNG_HPP
#define COMATCH_RNG_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numbers>
#include <vector>

namespace comatch::rng {

// Distributions are implemented by hand on top of SplitMix64 so that every
// stream is bit-reproducible across compilers and standard libraries
// (std::uniform_real_distribution et al. are implementation-defined).

inline uint64_t splitmix64(uint64_t& state) {
  uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Collapses a tuple of integers into one stream key. Order-sensitive.
inline uint64_t derive_key(std::initializer_list<uint64_t> parts) {
  uint64_t s = 0x243f6a8885a308d3ULL;  // arbitrary nonzero start
  for (uint64_t p : parts) {
    s ^= p + 0x9e3779b97f4a7c15ULL + (s << 6) + (s >> 2);
    uint64_t t = s;
    s = splitmix64(t);
  }
  return s;
}

/// Domain tags keeping independent uses of the same seed decorrelated.
enum class StreamTag : uint64_t {
  init = 0x01,
  shuffle = 0x02,
  aug_f = 0x03,
  aug_g = 0x04,
  noise = 0x05,
  synth_template = 0x06,
  synth_pixels = 0x07,
  grad_check = 0x08,
  test = 0xff,
};

/// A small counter-based random stream. Cheap to construct, so a fresh
/// stream per (seed, tag, epoch, step, sample) tuple is the normal usage.
class Stream {
 public:
  explicit Stream(uint64_t key) : state_(key) {}

  Stream(uint64_t seed, StreamTag tag, std::initializer_list<uint64_t> rest = {}) {
    std::vector<uint64_t> parts{seed, static_cast<uint64_t>(tag)};
    parts.insert(parts.end(), rest.begin(), rest.end());
    uint64_t s = 0x243f6a8885a308d3ULL;
    for (uint64_t p : parts) {
      s ^= p + 0x9e3779b97f4a7c15ULL + (s << 6) + (s >> 2);
      uint64_t t = s;
      s = splitmix64(t);
    }
    state_ = s;
  }

  uint64_t next_u64() { return splitmix64(state_); }

  /// Uniform in [0,1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n). n must be > 0.
  int uniform_int(int n) {
    // Modulo bias is < n / 2^64, negligible for the sizes used here.
    return static_cast<int>(next_u64() % static_cast<uint64_t>(n));
  }

  bool bernoulli(double p) { return uniform() < p; }

  /// Standard normal via Box-Muller; the second deviate is cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  /// In-place Fisher-Yates shuffle.
  template <class T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = next_u64() % i;
      std::swap(v[i - 1], v[j]);
    }
  }

  /// k distinct indices from [0, n), in ascending order.
  std::vector<int> sample_indices(int n, int k) {
    std::vector<int> all(n);
    for (int i = 0; i < n; ++i) all[i] = i;
    if (k >= n) return all;
    shuffle(all);
    all.resize(k);
    std::sort(all.begin(), all.end());
    return all;
  }

 private:
  uint64_t state_ = 0;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace comatch::rng

#endif  // COMATCH_RNG_HPP
