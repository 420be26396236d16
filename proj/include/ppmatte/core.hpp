#ifndef PPMATTE_CORE_HPP_
#define PPMATTE_CORE_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace ppmatte {

/// Raised whenever two rasters that must share a size do not.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// RGB image with planar storage: data[c * H * W + y * W + x], values in [0, 1].
struct Image {
  static constexpr int channels = 3;

  int height = 0;
  int width = 0;
  std::vector<double> data;

  Image() = default;
  Image(int h, int w, double fill = 0.0)
      : height(h), width(w), data(static_cast<std::size_t>(channels) * h * w, fill) {}

  std::size_t pixels() const { return static_cast<std::size_t>(height) * width; }
  double& at(int c, int y, int x) { return data[c * pixels() + static_cast<std::size_t>(y) * width + x]; }
  double at(int c, int y, int x) const { return data[c * pixels() + static_cast<std::size_t>(y) * width + x]; }
  std::span<double> plane(int c) { return {data.data() + c * pixels(), pixels()}; }
  std::span<const double> plane(int c) const { return {data.data() + c * pixels(), pixels()}; }

  bool valid() const {
    return data.size() == channels * pixels() &&
           std::all_of(data.begin(), data.end(), [](double v) { return v >= 0.0 && v <= 1.0; });
  }
};

/// Single-channel opacity map, values in [0, 1].
struct AlphaMatte {
  int height = 0;
  int width = 0;
  std::vector<double> data;

  AlphaMatte() = default;
  AlphaMatte(int h, int w, double fill = 0.0) : height(h), width(w), data(static_cast<std::size_t>(h) * w, fill) {}

  std::size_t pixels() const { return data.size(); }
  double& at(int y, int x) { return data[static_cast<std::size_t>(y) * width + x]; }
  double at(int y, int x) const { return data[static_cast<std::size_t>(y) * width + x]; }

  bool valid() const {
    return data.size() == static_cast<std::size_t>(height) * width &&
           std::all_of(data.begin(), data.end(), [](double v) { return v >= 0.0 && v <= 1.0; });
  }
};

/// Class order is fixed; argmax ties resolve toward the lower value.
enum class TriClass : std::uint8_t { FG = 0, BG = 1, TR = 2 };

struct TriClassMap {
  int height = 0;
  int width = 0;
  std::vector<TriClass> labels;

  TriClassMap() = default;
  TriClassMap(int h, int w, TriClass fill = TriClass::BG)
      : height(h), width(w), labels(static_cast<std::size_t>(h) * w, fill) {}

  std::size_t pixels() const { return labels.size(); }
  TriClass& at(int y, int x) { return labels[static_cast<std::size_t>(y) * width + x]; }
  TriClass at(int y, int x) const { return labels[static_cast<std::size_t>(y) * width + x]; }

  std::size_t count(TriClass c) const { return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), c)); }

  /// 0/1 mask of pixels carrying label c.
  std::vector<std::uint8_t> mask(TriClass c) const {
    std::vector<std::uint8_t> m(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) m[i] = labels[i] == c;
    return m;
  }
};

/// A composited item: image == alpha * fg + (1 - alpha) * bg.
struct Sample {
  Image image;
  AlphaMatte alpha;
  Image fg;
  Image bg;
  TriClassMap label;

  int height() const { return alpha.height; }
  int width() const { return alpha.width; }
};

template <typename A, typename B>
void require_same_size(const A& a, const B& b, const char* what) {
  if (a.height != b.height || a.width != b.width) {
    throw DimensionError(std::string(what) + ": size mismatch " + std::to_string(a.height) + "x" +
                         std::to_string(a.width) + " vs " + std::to_string(b.height) + "x" +
                         std::to_string(b.width));
  }
}

inline void validate(const Sample& s) {
  require_same_size(s.image, s.alpha, "sample image");
  require_same_size(s.fg, s.alpha, "sample fg");
  require_same_size(s.bg, s.alpha, "sample bg");
  require_same_size(s.label, s.alpha, "sample label");
}

/// Values within this distance of 0 or 1 count as pure background / foreground.
inline constexpr double kOpaqueTolerance = 1e-6;

/// Chebyshev dilation of a 0/1 mask by a square of side 2r+1 (separable max filter).
inline std::vector<std::uint8_t> dilate_square(const std::vector<std::uint8_t>& mask, int h, int w, int r) {
  if (r <= 0) return mask;
  std::vector<std::uint8_t> rows(mask.size(), 0), out(mask.size(), 0);
  for (int y = 0; y < h; ++y) {
    int last = -1 - r;  // most recent set column at or before x + r
    for (int x = -r; x < w; ++x) {
      const int probe = x + r;
      if (probe < w && mask[static_cast<std::size_t>(y) * w + probe]) last = probe;
      if (x >= 0 && last >= x - r) rows[static_cast<std::size_t>(y) * w + x] = 1;
    }
  }
  for (int x = 0; x < w; ++x) {
    int last = -1 - r;
    for (int y = -r; y < h; ++y) {
      const int probe = y + r;
      if (probe < h && rows[static_cast<std::size_t>(probe) * w + x]) last = probe;
      if (y >= 0 && last >= y - r) out[static_cast<std::size_t>(y) * w + x] = 1;
    }
  }
  return out;
}

/// Labels pixels FG (alpha == 1), BG (alpha == 0) or TR (otherwise), then grows
/// the TR region by a square structuring element of the given radius.
inline TriClassMap derive_triclass(const AlphaMatte& alpha, int dilation_radius) {
  if (dilation_radius < 0) throw std::invalid_argument("derive_triclass: negative dilation radius");
  TriClassMap out(alpha.height, alpha.width);
  std::vector<std::uint8_t> transition(alpha.pixels(), 0);
  for (std::size_t i = 0; i < alpha.pixels(); ++i) {
    const double a = alpha.data[i];
    if (a <= kOpaqueTolerance) {
      out.labels[i] = TriClass::BG;
    } else if (a >= 1.0 - kOpaqueTolerance) {
      out.labels[i] = TriClass::FG;
    } else {
      out.labels[i] = TriClass::TR;
      transition[i] = 1;
    }
  }
  const auto grown = dilate_square(transition, alpha.height, alpha.width, dilation_radius);
  for (std::size_t i = 0; i < grown.size(); ++i)
    if (grown[i]) out.labels[i] = TriClass::TR;
  return out;
}

/// Transition dilation that scales 15 px at 512 px proportionally to `size`.
inline int scaled_dilation_radius(int size, int radius_at_512 = 15) {
  return static_cast<int>(std::lround(radius_at_512 * static_cast<double>(size) / 512.0));
}

/// 8-bit single-channel raster.
struct GrayRaster {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> data;
};

inline std::uint8_t quantize_value(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

inline double dequantize_value(std::uint8_t q) { return q / 255.0; }

inline GrayRaster quantize(const AlphaMatte& alpha) {
  GrayRaster r{alpha.height, alpha.width, std::vector<std::uint8_t>(alpha.pixels())};
  std::transform(alpha.data.begin(), alpha.data.end(), r.data.begin(), quantize_value);
  return r;
}

inline AlphaMatte dequantize(const GrayRaster& r) {
  AlphaMatte a(r.height, r.width);
  std::transform(r.data.begin(), r.data.end(), a.data.begin(), dequantize_value);
  return a;
}

/// Rounds every value onto the 8-bit grid in place.
inline void snap_to_8bit(std::vector<double>& values) {
  for (double& v : values) v = dequantize_value(quantize_value(v));
}

}  // namespace ppmatte

#endif  // PPMATTE_CORE_HPP_
