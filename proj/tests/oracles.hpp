// Test-only reference implementations. Everything here is written as the
// most direct possible computation (naive loops, exhaustive search,
// long-double accumulation) and deliberately shares no code with the
// library paths it cross-checks.

#ifndef COMATCH_TESTS_ORACLES_HPP
#define COMATCH_TESTS_ORACLES_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

namespace oracles {

// C = A(n x k) * B(k x m), triple loop.
inline std::vector<double> matmul(const std::vector<double>& a, const std::vector<double>& b,
                                  int n, int k, int m) {
  std::vector<double> c(static_cast<size_t>(n) * m, 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j)
      for (int l = 0; l < k; ++l)
        c[static_cast<size_t>(i) * m + j] += a[static_cast<size_t>(i) * k + l] *
                                             b[static_cast<size_t>(l) * m + j];
  return c;
}

// Direct 6-loop cross-correlation, 3x3 kernel, stride 1, zero pad 1.
inline std::vector<double> conv2d(const std::vector<double>& x, const std::vector<double>& k,
                                  const std::vector<double>& bias, int n, int cin, int h, int w,
                                  int cout) {
  std::vector<double> y(static_cast<size_t>(n) * cout * h * w, 0.0);
  for (int in = 0; in < n; ++in)
    for (int co = 0; co < cout; ++co)
      for (int oy = 0; oy < h; ++oy)
        for (int ox = 0; ox < w; ++ox) {
          double acc = bias[static_cast<size_t>(co)];
          for (int ci = 0; ci < cin; ++ci)
            for (int ky = 0; ky < 3; ++ky)
              for (int kx = 0; kx < 3; ++kx) {
                const int iy = oy + ky - 1, ix = ox + kx - 1;
                if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
                acc += x[((static_cast<size_t>(in) * cin + ci) * h + iy) * w + ix] *
                       k[((static_cast<size_t>(co) * cin + ci) * 3 + ky) * 3 + kx];
              }
          y[((static_cast<size_t>(in) * cout + co) * h + oy) * w + ox] = acc;
        }
  return y;
}

// Naive windowed max, 2x2 stride 2.
inline std::vector<double> maxpool2d(const std::vector<double>& x, int n, int c, int h, int w) {
  const int oh = h / 2, ow = w / 2;
  std::vector<double> y(static_cast<size_t>(n) * c * oh * ow);
  for (int in = 0; in < n; ++in)
    for (int ic = 0; ic < c; ++ic)
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox) {
          double best = -std::numeric_limits<double>::infinity();
          for (int ky = 0; ky < 2; ++ky)
            for (int kx = 0; kx < 2; ++kx) {
              best = std::max(best, x[((static_cast<size_t>(in) * c + ic) * h + oy * 2 + ky) * w +
                                      ox * 2 + kx]);
            }
          y[((static_cast<size_t>(in) * c + ic) * oh + oy) * ow + ox] = best;
        }
  return y;
}

// Exhaustive Eq.(5)-style selection: over all subsets of {0..len-1} with
// |S| >= need (exact rational bound num/den of the keep rate), minimize
// summed loss; ties prefer smaller cardinality, then lexicographically
// smaller index sets.
inline std::vector<int> select_subset(const std::vector<double>& losses, long long num,
                                      long long den) {
  const int len = static_cast<int>(losses.size());
  std::vector<int> best;
  double best_sum = std::numeric_limits<double>::infinity();
  int best_size = len + 1;
  for (uint32_t mask = 1; mask < (1u << len); ++mask) {
    const int size = __builtin_popcount(mask);
    if (static_cast<long long>(size) * den < num * len) continue;
    double sum = 0.0;
    for (int i = 0; i < len; ++i) {
      if (mask & (1u << i)) sum += losses[static_cast<size_t>(i)];
    }
    bool better = false;
    if (sum < best_sum - 1e-12) {
      better = true;
    } else if (std::abs(sum - best_sum) <= 1e-12) {
      if (size < best_size) {
        better = true;
      } else if (size == best_size) {
        // Lexicographic comparison of the ascending index sets.
        std::vector<int> cand;
        for (int i = 0; i < len; ++i)
          if (mask & (1u << i)) cand.push_back(i);
        if (cand < best) better = true;
      }
    }
    if (better) {
      best_sum = sum;
      best_size = size;
      best.clear();
      for (int i = 0; i < len; ++i)
        if (mask & (1u << i)) best.push_back(i);
    }
  }
  return best;
}

// Cross-entropy of a probability row against a target row, long-double
// accumulation, same 1e-12 probability floor as the library contract.
inline double cross_entropy_row(const std::vector<double>& probs, const std::vector<double>& target) {
  long double acc = 0.0L;
  for (size_t j = 0; j < probs.size(); ++j) {
    if (target[j] != 0.0) {
      acc -= static_cast<long double>(target[j]) *
             std::log(std::max(static_cast<long double>(probs[j]), 1e-12L));
    }
  }
  return static_cast<double>(acc);
}

// Bilinear sample of a single-channel image with zero fill outside bounds.
inline double bilinear(const std::vector<double>& img, int h, int w, double sy, double sx) {
  const int y0 = static_cast<int>(std::floor(sy));
  const int x0 = static_cast<int>(std::floor(sx));
  const double wy = sy - y0, wx = sx - x0;
  auto pix = [&](int y, int x) -> double {
    if (y < 0 || y >= h || x < 0 || x >= w) return 0.0;
    return img[static_cast<size_t>(y) * w + x];
  };
  return pix(y0, x0) * (1 - wy) * (1 - wx) + pix(y0, x0 + 1) * (1 - wy) * wx +
         pix(y0 + 1, x0) * wy * (1 - wx) + pix(y0 + 1, x0 + 1) * wy * wx;
}

}  // namespace oracles

#endif  // COMATCH_TESTS_ORACLES_HPP
