#ifndef PPMATTE_TESTS_METRIC_ORACLES_HPP_
#define PPMATTE_TESTS_METRIC_ORACLES_HPP_

// Brute-force reimplementations of the four metrics, written independently
// of the library code: direct 2-D convolution and stack-based flood fill.

#include <algorithm>
#include <cmath>
#include <vector>

#include "ppmatte/core.hpp"

namespace oracle {

using ppmatte::AlphaMatte;

inline double sad(const AlphaMatte& p, const AlphaMatte& g) {
  double s = 0;
  for (int y = 0; y < g.height; ++y)
    for (int x = 0; x < g.width; ++x) s += std::fabs(p.at(y, x) - g.at(y, x));
  return s / 1000.0;
}

inline double mse(const AlphaMatte& p, const AlphaMatte& g) {
  double s = 0;
  for (int y = 0; y < g.height; ++y)
    for (int x = 0; x < g.width; ++x) s += std::pow(p.at(y, x) - g.at(y, x), 2);
  return s / (g.height * g.width);
}

/// Gradient magnitude with full 2-D Gaussian-derivative kernels,
/// normalized to unit L2 norm, borders replicated.
inline std::vector<double> grad_magnitude(const AlphaMatte& a, double sigma) {
  const int r = static_cast<int>(std::ceil(3 * sigma));
  const int k = 2 * r + 1;
  std::vector<double> kx(k * k), ky(k * k);
  double nx = 0, ny = 0;
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j) {
      const double y = i - r, x = j - r;
      const double g = std::exp(-(x * x + y * y) / (2 * sigma * sigma));
      kx[i * k + j] = -x * g;
      ky[i * k + j] = -y * g;
      nx += kx[i * k + j] * kx[i * k + j];
      ny += ky[i * k + j] * ky[i * k + j];
    }
  for (double& v : kx) v /= std::sqrt(nx);
  for (double& v : ky) v /= std::sqrt(ny);
  std::vector<double> mag(a.height * a.width);
  for (int y = 0; y < a.height; ++y)
    for (int x = 0; x < a.width; ++x) {
      double gx = 0, gy = 0;
      // Correlation form: out(y, x) = sum_k K(k) * a(y + ky, x + kx).
      for (int i = 0; i < k; ++i)
        for (int j = 0; j < k; ++j) {
          const int yy = std::clamp(y + i - r, 0, a.height - 1), xx = std::clamp(x + j - r, 0, a.width - 1);
          gx += kx[i * k + j] * a.at(yy, xx);
          gy += ky[i * k + j] * a.at(yy, xx);
        }
      mag[y * a.width + x] = std::sqrt(gx * gx + gy * gy);
    }
  return mag;
}

inline double grad(const AlphaMatte& p, const AlphaMatte& g, double sigma = 1.4) {
  const auto mp = grad_magnitude(p, sigma), mg = grad_magnitude(g, sigma);
  double s = 0;
  for (std::size_t i = 0; i < mp.size(); ++i) s += (mp[i] - mg[i]) * (mp[i] - mg[i]);
  return s / 1000.0;
}

/// Largest 4-connected region of `mask`; the earliest-seeded region in
/// row-major order wins among equal sizes.
inline std::vector<char> largest_region(const std::vector<char>& mask, int h, int w) {
  std::vector<int> comp(mask.size(), -1);
  int best = -1, best_size = 0, id = 0;
  for (int start = 0; start < h * w; ++start) {
    if (!mask[start] || comp[start] >= 0) continue;
    std::vector<int> stack{start};
    comp[start] = id;
    int size = 0;
    while (!stack.empty()) {
      const int p = stack.back();
      stack.pop_back();
      ++size;
      const int y = p / w, x = p % w;
      const int ny[4] = {y - 1, y + 1, y, y}, nx[4] = {x, x, x - 1, x + 1};
      for (int d = 0; d < 4; ++d) {
        if (ny[d] < 0 || ny[d] >= h || nx[d] < 0 || nx[d] >= w) continue;
        const int q = ny[d] * w + nx[d];
        if (mask[q] && comp[q] < 0) {
          comp[q] = id;
          stack.push_back(q);
        }
      }
    }
    if (size > best_size) {
      best_size = size;
      best = id;
    }
    ++id;
  }
  std::vector<char> out(mask.size(), 0);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = best >= 0 && comp[i] == best;
  return out;
}

inline double conn(const AlphaMatte& p, const AlphaMatte& g, double step = 0.1, double tol = 0.15) {
  const int h = g.height, w = g.width, n = h * w;
  const int levels = static_cast<int>(std::lround(1.0 / step));
  // l_i: highest threshold at which pixel i is still inside the region.
  std::vector<double> l(n, 1.0);
  std::vector<char> done(n, 0);
  for (int k = 1; k <= levels; ++k) {
    std::vector<char> mask(n);
    for (int i = 0; i < n; ++i) mask[i] = p.data[i] >= k * step && g.data[i] >= k * step;
    const auto region = largest_region(mask, h, w);
    for (int i = 0; i < n; ++i)
      if (!done[i] && !region[i]) {
        l[i] = (k - 1) * step;
        done[i] = 1;
      }
  }
  double s = 0;
  for (int i = 0; i < n; ++i) {
    const double dp = p.data[i] - l[i], dg = g.data[i] - l[i];
    const double fp = dp >= tol ? 1 - dp : 1.0, fg = dg >= tol ? 1 - dg : 1.0;
    s += std::fabs(fp - fg);
  }
  return s / 1000.0;
}

}  // namespace oracle

#endif  // PPMATTE_TESTS_METRIC_ORACLES_HPP_
