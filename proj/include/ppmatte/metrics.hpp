#ifndef PPMATTE_METRICS_HPP_
#define PPMATTE_METRICS_HPP_

// Matting evaluation metrics over the whole image: SAD, MSE, gradient error
// and connectivity error. SAD, Grad and Conn are reported divided by 1000.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <iomanip>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "ppmatte/core.hpp"

namespace ppmatte {

struct MetricConfig {
  double grad_sigma = 1.4;
  double conn_step = 0.1;
  double conn_tolerance = 0.15;
};

struct MetricReport {
  double sad = 0;
  double mse = 0;
  double grad = 0;
  double conn = 0;
};

inline double sad(const AlphaMatte& pred, const AlphaMatte& gt) {
  require_same_size(pred, gt, "sad");
  double s = 0;
  for (std::size_t i = 0; i < gt.pixels(); ++i) s += std::abs(pred.data[i] - gt.data[i]);
  return s / 1000.0;
}

inline double mse(const AlphaMatte& pred, const AlphaMatte& gt) {
  require_same_size(pred, gt, "mse");
  if (gt.pixels() == 0) return 0.0;
  double s = 0;
  for (std::size_t i = 0; i < gt.pixels(); ++i) s += (pred.data[i] - gt.data[i]) * (pred.data[i] - gt.data[i]);
  return s / static_cast<double>(gt.pixels());
}

/// 1-D Gaussian and its derivative sampled on [-r, r], r = ceil(3 sigma).
struct GaussianDerivative {
  int radius = 0;
  std::vector<double> smooth;
  std::vector<double> deriv;
  /// 1 / ||smooth (x) deriv||_2, the joint normalization of the 2-D filter.
  double norm = 1;

  explicit GaussianDerivative(double sigma) {
    radius = static_cast<int>(std::ceil(3.0 * sigma));
    const double c = 1.0 / (sigma * std::sqrt(2.0 * 3.14159265358979323846));
    double s2 = 0, d2 = 0;
    for (int i = -radius; i <= radius; ++i) {
      const double g = c * std::exp(-0.5 * i * i / (sigma * sigma));
      smooth.push_back(g);
      deriv.push_back(-i * g / (sigma * sigma));
      s2 += smooth.back() * smooth.back();
      d2 += deriv.back() * deriv.back();
    }
    norm = 1.0 / std::sqrt(s2 * d2);
  }
};

/// Gradient magnitude of the matte under L2-normalized first-order
/// Gaussian-derivative filters, replicated borders, separable evaluation.
inline std::vector<double> gaussian_gradient_magnitude(const AlphaMatte& a, double sigma) {
  const GaussianDerivative k(sigma);
  const int h = a.height, w = a.width, r = k.radius;
  auto filter = [&](const std::vector<double>& ky, const std::vector<double>& kx) {
    std::vector<double> tmp(a.pixels()), out(a.pixels());
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double acc = 0;
        for (int i = -r; i <= r; ++i) acc += kx[i + r] * a.data[static_cast<std::size_t>(y) * w + std::clamp(x + i, 0, w - 1)];
        tmp[static_cast<std::size_t>(y) * w + x] = acc;
      }
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double acc = 0;
        for (int i = -r; i <= r; ++i) acc += ky[i + r] * tmp[static_cast<std::size_t>(std::clamp(y + i, 0, h - 1)) * w + x];
        out[static_cast<std::size_t>(y) * w + x] = acc * k.norm;
      }
    return out;
  };
  const auto gx = filter(k.smooth, k.deriv);
  const auto gy = filter(k.deriv, k.smooth);
  std::vector<double> mag(a.pixels());
  for (std::size_t i = 0; i < mag.size(); ++i) mag[i] = std::sqrt(gx[i] * gx[i] + gy[i] * gy[i]);
  return mag;
}

inline double grad_metric(const AlphaMatte& pred, const AlphaMatte& gt, double sigma = 1.4) {
  require_same_size(pred, gt, "grad_metric");
  const auto mp = gaussian_gradient_magnitude(pred, sigma);
  const auto mg = gaussian_gradient_magnitude(gt, sigma);
  double s = 0;
  for (std::size_t i = 0; i < mp.size(); ++i) s += (mp[i] - mg[i]) * (mp[i] - mg[i]);
  return s / 1000.0;
}

/// Largest 4-connected component of a 0/1 mask. Among equal sizes the
/// component reached first in row-major scan order wins. Returns a 0/1 mask
/// (all zero when the input is empty).
inline std::vector<std::uint8_t> largest_component(const std::vector<std::uint8_t>& mask, int h, int w) {
  std::vector<int> label(mask.size(), -1);
  std::vector<std::size_t> sizes;
  std::deque<std::size_t> queue;
  for (std::size_t start = 0; start < mask.size(); ++start) {
    if (!mask[start] || label[start] >= 0) continue;
    const int id = static_cast<int>(sizes.size());
    std::size_t count = 0;
    label[start] = id;
    queue.push_back(start);
    while (!queue.empty()) {
      const std::size_t p = queue.front();
      queue.pop_front();
      ++count;
      const int y = static_cast<int>(p / w), x = static_cast<int>(p % w);
      auto visit = [&](int yy, int xx) {
        if (yy < 0 || yy >= h || xx < 0 || xx >= w) return;
        const std::size_t q = static_cast<std::size_t>(yy) * w + xx;
        if (mask[q] && label[q] < 0) {
          label[q] = id;
          queue.push_back(q);
        }
      };
      visit(y - 1, x);
      visit(y + 1, x);
      visit(y, x - 1);
      visit(y, x + 1);
    }
    sizes.push_back(count);
  }
  std::vector<std::uint8_t> out(mask.size(), 0);
  if (sizes.empty()) return out;
  const int best = static_cast<int>(std::max_element(sizes.begin(), sizes.end()) - sizes.begin());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = label[i] == best;
  return out;
}

/// Connectivity error. For thresholds step, 2 step, ..., 1 the largest
/// region where both mattes reach the threshold is tracked; l_i is the last
/// threshold at which pixel i still belonged to it. Degrees of connectedness
/// phi = 1 - d (d = alpha - l, counted only when d >= tolerance) are compared.
inline double conn_metric(const AlphaMatte& pred, const AlphaMatte& gt, double step = 0.1, double tolerance = 0.15) {
  require_same_size(pred, gt, "conn_metric");
  if (!(step > 0 && step <= 1)) throw std::invalid_argument("conn_metric: step must be in (0, 1]");
  const int h = gt.height, w = gt.width;
  const std::size_t n = gt.pixels();
  const int levels = static_cast<int>(std::lround(1.0 / step));
  std::vector<double> l(n, -1.0);
  std::vector<std::uint8_t> both(n);
  for (int k = 1; k <= levels; ++k) {
    const double theta = k * step;
    for (std::size_t i = 0; i < n; ++i) both[i] = pred.data[i] >= theta && gt.data[i] >= theta;
    const auto omega = largest_component(both, h, w);
    const double prev = (k - 1) * step;
    for (std::size_t i = 0; i < n; ++i)
      if (l[i] < 0 && !omega[i]) l[i] = prev;
  }
  double s = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double li = l[i] < 0 ? 1.0 : l[i];
    const double dp = pred.data[i] - li, dg = gt.data[i] - li;
    const double phi_p = 1.0 - (dp >= tolerance ? dp : 0.0);
    const double phi_g = 1.0 - (dg >= tolerance ? dg : 0.0);
    s += std::abs(phi_p - phi_g);
  }
  return s / 1000.0;
}

inline MetricReport compute_metrics(const AlphaMatte& pred, const AlphaMatte& gt, const MetricConfig& cfg = {}) {
  return MetricReport{sad(pred, gt), mse(pred, gt), grad_metric(pred, gt, cfg.grad_sigma),
                      conn_metric(pred, gt, cfg.conn_step, cfg.conn_tolerance)};
}

struct Evaluation {
  std::vector<MetricReport> per_image;
  MetricReport mean;
};

/// Per-image metrics for aligned lists and their arithmetic mean.
inline Evaluation evaluate(const std::vector<AlphaMatte>& preds, const std::vector<AlphaMatte>& gts,
                           const MetricConfig& cfg = {}) {
  if (preds.size() != gts.size()) throw std::invalid_argument("evaluate: prediction/ground-truth count mismatch");
  Evaluation ev;
  for (std::size_t i = 0; i < preds.size(); ++i) ev.per_image.push_back(compute_metrics(preds[i], gts[i], cfg));
  if (!ev.per_image.empty()) {
    for (const auto& m : ev.per_image) {
      ev.mean.sad += m.sad;
      ev.mean.mse += m.mse;
      ev.mean.grad += m.grad;
      ev.mean.conn += m.conn;
    }
    const double k = static_cast<double>(ev.per_image.size());
    ev.mean.sad /= k;
    ev.mean.mse /= k;
    ev.mean.grad /= k;
    ev.mean.conn /= k;
  }
  return ev;
}

/// CSV: image_id,SAD,MSE,Grad,Conn with a closing `mean` row.
inline void write_metrics_csv(std::ostream& os, const Evaluation& ev) {
  os << "image_id,SAD,MSE,Grad,Conn\n";
  auto row = [&os](const std::string& id, const MetricReport& m) {
    os << id << ',' << std::setprecision(10) << m.sad << ',' << m.mse << ',' << m.grad << ',' << m.conn << '\n';
  };
  for (std::size_t i = 0; i < ev.per_image.size(); ++i) row(std::to_string(i), ev.per_image[i]);
  row("mean", ev.mean);
}

}  // namespace ppmatte

#endif  // PPMATTE_METRICS_HPP_
