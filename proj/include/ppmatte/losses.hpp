#ifndef PPMATTE_LOSSES_HPP_
#define PPMATTE_LOSSES_HPP_

// Training objective: semantic cross-entropy, transition-masked detail loss and
// full-image fusion loss (alpha + gradient + composition terms).
//
// Every loss is templated on the prediction scalar type and can accumulate
// its analytic gradient into a caller-provided buffer (grad += dL/dpred).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "ppmatte/core.hpp"

namespace ppmatte {

enum class DetailRegion { TRANSITION_ONLY, ALL };

inline void to_json(nlohmann::json& j, DetailRegion r) { j = r == DetailRegion::ALL ? "ALL" : "TRANSITION_ONLY"; }
inline void from_json(const nlohmann::json& j, DetailRegion& r) {
  const auto s = j.get<std::string>();
  if (s == "ALL") r = DetailRegion::ALL;
  else if (s == "TRANSITION_ONLY") r = DetailRegion::TRANSITION_ONLY;
  else throw std::invalid_argument("unknown detail_region '" + s + "' (expected TRANSITION_ONLY or ALL)");
}

struct LossConfig {
  double epsilon = 1e-6;
  double lambda1 = 1.0;
  double lambda2 = 1.0;
  double lambda3 = 1.0;
  DetailRegion detail_region = DetailRegion::TRANSITION_ONLY;
  /// Divide every term by the image pixel count instead of summing.
  bool normalize = false;

  void validate() const {
    if (!(epsilon > 0)) throw std::invalid_argument("LossConfig: epsilon must be > 0");
    if (lambda1 < 0 || lambda2 < 0 || lambda3 < 0) throw std::invalid_argument("LossConfig: lambdas must be >= 0");
  }
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(LossConfig, epsilon, lambda1, lambda2, lambda3, detail_region,
                                                normalize)

/// Floor applied to the true-class probability before the logarithm.
inline constexpr double kProbabilityFloor = 1e-12;

namespace loss_detail {

inline bool in_mask(std::span<const std::uint8_t> mask, std::size_t i) { return mask.empty() || mask[i] != 0; }

inline void check_size(std::size_t a, std::size_t b, const char* what) {
  if (a != b) throw DimensionError(std::string(what) + ": size mismatch");
}

}  // namespace loss_detail

/// -sum_i log p_{true(i)}; probs is planar (3, N) in FG, BG, TR order.
template <typename T>
T semantic_loss(std::span<const T> probs, std::span<const TriClass> labels, bool mean = false,
                std::span<T> grad = {}) {
  const std::size_t n = labels.size();
  loss_detail::check_size(probs.size(), 3 * n, "semantic_loss");
  const double scale = mean ? 1.0 / static_cast<double>(n) : 1.0;
  double total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t k = static_cast<std::size_t>(labels[i]) * n + i;
    const double p = static_cast<double>(probs[k]);
    if (p > kProbabilityFloor) {
      total -= std::log(p);
      if (!grad.empty()) grad[k] += static_cast<T>(-scale / p);
    } else {
      total -= std::log(kProbabilityFloor);
    }
  }
  return static_cast<T>(total * scale);
}

/// Charbonnier alpha-prediction loss: sum_{i in mask} sqrt((pred - gt)^2 + eps^2).
template <typename T>
T alpha_loss(std::span<const T> pred, std::span<const double> gt, std::span<const std::uint8_t> mask, double eps,
             std::span<T> grad = {}, double scale = 1.0) {
  loss_detail::check_size(pred.size(), gt.size(), "alpha_loss");
  if (!mask.empty()) loss_detail::check_size(mask.size(), gt.size(), "alpha_loss mask");
  double total = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (!loss_detail::in_mask(mask, i)) continue;
    const double d = static_cast<double>(pred[i]) - gt[i];
    const double r = std::sqrt(d * d + eps * eps);
    total += r;
    if (!grad.empty()) grad[i] += static_cast<T>(scale * d / r);
  }
  return static_cast<T>(total * scale);
}

/// 3x3 Sobel responses with replicated borders and the magnitude
/// sqrt(gx^2 + gy^2 + eps^2).
struct SobelField {
  std::vector<double> gx, gy, mag;
};

template <typename V>
SobelField sobel(std::span<const V> values, int h, int w, double eps) {
  SobelField f;
  const std::size_t n = static_cast<std::size_t>(h) * w;
  f.gx.resize(n);
  f.gy.resize(n);
  f.mag.resize(n);
  auto at = [&](int y, int x) {
    y = std::clamp(y, 0, h - 1);
    x = std::clamp(x, 0, w - 1);
    return static_cast<double>(values[static_cast<std::size_t>(y) * w + x]);
  };
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double gx = (at(y - 1, x + 1) + 2 * at(y, x + 1) + at(y + 1, x + 1)) -
                        (at(y - 1, x - 1) + 2 * at(y, x - 1) + at(y + 1, x - 1));
      const double gy = (at(y + 1, x - 1) + 2 * at(y + 1, x) + at(y + 1, x + 1)) -
                        (at(y - 1, x - 1) + 2 * at(y - 1, x) + at(y - 1, x + 1));
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      f.gx[i] = gx;
      f.gy[i] = gy;
      f.mag[i] = std::sqrt(gx * gx + gy * gy + eps * eps);
    }
  return f;
}

/// Gradient loss: sum_{i in mask} | |grad pred|_i - |grad gt|_i |.
template <typename T>
T grad_loss(std::span<const T> pred, std::span<const double> gt, int h, int w, std::span<const std::uint8_t> mask,
            double eps, std::span<T> grad = {}, double scale = 1.0) {
  const std::size_t n = static_cast<std::size_t>(h) * w;
  loss_detail::check_size(pred.size(), n, "grad_loss pred");
  loss_detail::check_size(gt.size(), n, "grad_loss gt");
  if (!mask.empty()) loss_detail::check_size(mask.size(), n, "grad_loss mask");
  const SobelField fp = sobel(pred, h, w, eps);
  const SobelField fg = sobel(gt, h, w, eps);
  double total = 0;
  std::vector<double> dgx, dgy;
  if (!grad.empty()) {
    dgx.assign(n, 0.0);
    dgy.assign(n, 0.0);
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!loss_detail::in_mask(mask, i)) continue;
    const double diff = fp.mag[i] - fg.mag[i];
    total += std::abs(diff);
    if (!grad.empty() && diff != 0.0) {
      const double s = (diff > 0 ? 1.0 : -1.0) / fp.mag[i];
      dgx[i] = s * fp.gx[i];
      dgy[i] = s * fp.gy[i];
    }
  }
  if (!grad.empty()) {
    // Transpose of the clamped Sobel stencil.
    static constexpr int kx[3][3] = {{-1, 0, 1}, {-2, 0, 2}, {-1, 0, 1}};
    static constexpr int ky[3][3] = {{-1, -2, -1}, {0, 0, 0}, {1, 2, 1}};
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const std::size_t i = static_cast<std::size_t>(y) * w + x;
        if (dgx[i] == 0.0 && dgy[i] == 0.0) continue;
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            const double wgt = kx[dy + 1][dx + 1] * dgx[i] + ky[dy + 1][dx + 1] * dgy[i];
            if (wgt == 0.0) continue;
            const int yy = std::clamp(y + dy, 0, h - 1), xx = std::clamp(x + dx, 0, w - 1);
            grad[static_cast<std::size_t>(yy) * w + xx] += static_cast<T>(scale * wgt);
          }
      }
  }
  return static_cast<T>(total * scale);
}

/// Composition loss against the ground-truth image: per pixel and channel
/// sqrt((alpha F + (1 - alpha) B - I)^2 + eps^2). fg, bg, image are planar (3, N).
template <typename T>
T composition_loss(std::span<const T> alpha, std::span<const double> fg, std::span<const double> bg,
                   std::span<const double> image, double eps, std::span<T> grad = {}, double scale = 1.0) {
  const std::size_t n = alpha.size();
  loss_detail::check_size(fg.size(), 3 * n, "composition_loss fg");
  loss_detail::check_size(bg.size(), 3 * n, "composition_loss bg");
  loss_detail::check_size(image.size(), 3 * n, "composition_loss image");
  double total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double a = static_cast<double>(alpha[i]);
    double g = 0;
    for (int c = 0; c < 3; ++c) {
      const std::size_t k = c * n + i;
      const double d = a * fg[k] + (1.0 - a) * bg[k] - image[k];
      const double r = std::sqrt(d * d + eps * eps);
      total += r;
      g += d / r * (fg[k] - bg[k]);
    }
    if (!grad.empty()) grad[i] += static_cast<T>(scale * g);
  }
  return static_cast<T>(total * scale);
}

// Convenience overloads over the domain types (64-bit, value only).

inline double semantic_loss(std::span<const double> probs, const TriClassMap& label, bool mean = false) {
  return semantic_loss<double>(probs, label.labels, mean);
}

inline double alpha_loss(const AlphaMatte& pred, const AlphaMatte& gt, std::span<const std::uint8_t> mask = {},
                         double eps = 1e-6) {
  require_same_size(pred, gt, "alpha_loss");
  return alpha_loss<double>(pred.data, gt.data, mask, eps);
}

inline double grad_loss(const AlphaMatte& pred, const AlphaMatte& gt, std::span<const std::uint8_t> mask = {},
                        double eps = 1e-6) {
  require_same_size(pred, gt, "grad_loss");
  return grad_loss<double>(pred.data, gt.data, pred.height, pred.width, mask, eps);
}

inline double composition_loss(const AlphaMatte& alpha_p, const Sample& s, double eps = 1e-6) {
  require_same_size(alpha_p, s.alpha, "composition_loss");
  return composition_loss<double>(alpha_p.data, s.fg.data, s.bg.data, s.image.data, eps);
}

struct LossBreakdown {
  double semantic = 0;
  double detail = 0;
  double fusion = 0;
  double total = 0;
};

/// Gradients of the weighted total with respect to the three model heads.
template <typename T>
struct HeadGradients {
  std::vector<T> semantic;  // planar (3, N)
  std::vector<T> detail;
  std::vector<T> alpha;
};

/// Weighted total loss over one sample; scales and masks follow `cfg`.
/// Gradients are accumulated when `grads` is non-null.
template <typename T>
LossBreakdown total_loss(std::span<const T> probs, std::span<const T> detail, std::span<const T> alpha,
                         const Sample& s, const LossConfig& cfg, HeadGradients<T>* grads = nullptr) {
  cfg.validate();
  const int h = s.height(), w = s.width();
  const std::size_t n = static_cast<std::size_t>(h) * w;
  const double norm = cfg.normalize ? 1.0 / static_cast<double>(n) : 1.0;
  const std::vector<std::uint8_t> transition =
      cfg.detail_region == DetailRegion::ALL ? std::vector<std::uint8_t>{} : s.label.mask(TriClass::TR);
  // An empty mask means "all pixels"; an empty transition region must not.
  const bool no_transition = cfg.detail_region == DetailRegion::TRANSITION_ONLY && s.label.count(TriClass::TR) == 0;

  std::span<T> gs, gd, ga;
  if (grads) {
    grads->semantic.assign(3 * n, T(0));
    grads->detail.assign(n, T(0));
    grads->alpha.assign(n, T(0));
  }
  std::vector<T> tmp_s, tmp_d, tmp_a;
  if (grads) {
    tmp_s.assign(3 * n, T(0));
    tmp_d.assign(n, T(0));
    tmp_a.assign(n, T(0));
    gs = tmp_s;
    gd = tmp_d;
    ga = tmp_a;
  }

  LossBreakdown b;
  b.semantic = static_cast<double>(semantic_loss<T>(probs, s.label.labels, cfg.normalize, gs));
  if (!no_transition) {
    b.detail = static_cast<double>(alpha_loss<T>(detail, s.alpha.data, transition, cfg.epsilon, gd, norm)) +
               static_cast<double>(grad_loss<T>(detail, s.alpha.data, h, w, transition, cfg.epsilon, gd, norm));
  }
  b.fusion = static_cast<double>(alpha_loss<T>(alpha, s.alpha.data, {}, cfg.epsilon, ga, norm)) +
             static_cast<double>(grad_loss<T>(alpha, s.alpha.data, h, w, {}, cfg.epsilon, ga, norm)) +
             static_cast<double>(
                 composition_loss<T>(alpha, s.fg.data, s.bg.data, s.image.data, cfg.epsilon, ga, norm));
  b.total = cfg.lambda1 * b.semantic + cfg.lambda2 * b.detail + cfg.lambda3 * b.fusion;
  if (grads) {
    for (std::size_t i = 0; i < 3 * n; ++i) grads->semantic[i] = static_cast<T>(cfg.lambda1 * tmp_s[i]);
    for (std::size_t i = 0; i < n; ++i) {
      grads->detail[i] = static_cast<T>(cfg.lambda2 * tmp_d[i]);
      grads->alpha[i] = static_cast<T>(cfg.lambda3 * tmp_a[i]);
    }
  }
  return b;
}

/// alpha_loss + grad_loss over the transition region (or the whole image).
inline double detail_loss(const AlphaMatte& detail, const AlphaMatte& gt, const TriClassMap& label,
                          const LossConfig& cfg) {
  require_same_size(detail, gt, "detail_loss");
  require_same_size(label, gt, "detail_loss label");
  const double norm = cfg.normalize ? 1.0 / static_cast<double>(gt.pixels()) : 1.0;
  if (cfg.detail_region == DetailRegion::ALL) {
    return alpha_loss<double>(detail.data, gt.data, {}, cfg.epsilon, {}, norm) +
           grad_loss<double>(detail.data, gt.data, gt.height, gt.width, {}, cfg.epsilon, {}, norm);
  }
  if (label.count(TriClass::TR) == 0) return 0.0;
  const auto mask = label.mask(TriClass::TR);
  return alpha_loss<double>(detail.data, gt.data, mask, cfg.epsilon, {}, norm) +
         grad_loss<double>(detail.data, gt.data, gt.height, gt.width, mask, cfg.epsilon, {}, norm);
}

/// Alpha, gradient and composition terms of the final matte over all pixels.
inline double fusion_loss(const AlphaMatte& alpha_p, const Sample& s, const LossConfig& cfg) {
  validate(s);
  require_same_size(alpha_p, s.alpha, "fusion_loss");
  const double norm = cfg.normalize ? 1.0 / static_cast<double>(s.alpha.pixels()) : 1.0;
  return alpha_loss<double>(alpha_p.data, s.alpha.data, {}, cfg.epsilon, {}, norm) +
         grad_loss<double>(alpha_p.data, s.alpha.data, s.height(), s.width(), {}, cfg.epsilon, {}, norm) +
         composition_loss<double>(alpha_p.data, s.fg.data, s.bg.data, s.image.data, cfg.epsilon, {}, norm);
}

/// Semantic probabilities at full resolution, planar (3, H, W).
struct SemanticMap {
  int height = 0;
  int width = 0;
  std::vector<double> probs;

  std::size_t pixels() const { return static_cast<std::size_t>(height) * width; }
  double prob(TriClass c, std::size_t i) const { return probs[static_cast<std::size_t>(c) * pixels() + i]; }
};

}  // namespace ppmatte

#endif  // PPMATTE_LOSSES_HPP_
