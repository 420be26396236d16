#ifndef PPMATTE_IMGPROC_HPP_
#define PPMATTE_IMGPROC_HPP_

// Geometric and filtering primitives over planar rasters. Every function works
// plane by plane so images, mattes and label maps share one implementation.

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <tuple>
#include <vector>

#include "ppmatte/core.hpp"

namespace ppmatte::imgproc {

namespace detail {

template <typename V>
std::vector<V> crop_planes(const std::vector<V>& src, int planes, int h, int w, int y0, int x0, int ch, int cw) {
  std::vector<V> out(static_cast<std::size_t>(planes) * ch * cw);
  for (int p = 0; p < planes; ++p)
    for (int y = 0; y < ch; ++y)
      for (int x = 0; x < cw; ++x)
        out[(static_cast<std::size_t>(p) * ch + y) * cw + x] =
            src[(static_cast<std::size_t>(p) * h + y0 + y) * w + x0 + x];
  return out;
}

template <typename V>
std::vector<V> pad_planes(const std::vector<V>& src, int planes, int h, int w, int ph, int pw, V fill) {
  std::vector<V> out(static_cast<std::size_t>(planes) * ph * pw, fill);
  for (int p = 0; p < planes; ++p)
    for (int y = 0; y < h; ++y)
      std::copy_n(src.begin() + (static_cast<std::size_t>(p) * h + y) * w, w,
                  out.begin() + (static_cast<std::size_t>(p) * ph + y) * pw);
  return out;
}

template <typename V>
void flip_planes(std::vector<V>& data, int planes, int h, int w) {
  for (int p = 0; p < planes; ++p)
    for (int y = 0; y < h; ++y) {
      auto row = data.begin() + (static_cast<std::size_t>(p) * h + y) * w;
      std::reverse(row, row + w);
    }
}

inline int reflect_index(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

inline std::vector<double> resize_bilinear_planes(const std::vector<double>& src, int planes, int h, int w, int oh,
                                                  int ow) {
  if (oh == h && ow == w) return src;
  std::vector<double> out(static_cast<std::size_t>(planes) * oh * ow);
  auto taps = [](int in, int o_len) {
    std::vector<int> i0(o_len), i1(o_len);
    std::vector<double> f(o_len);
    const double scale = static_cast<double>(in) / o_len;
    for (int o = 0; o < o_len; ++o) {
      double s = std::max(0.0, (o + 0.5) * scale - 0.5);
      int lo = std::min(static_cast<int>(std::floor(s)), in - 1);
      i0[o] = lo;
      i1[o] = std::min(lo + 1, in - 1);
      f[o] = s - lo;
    }
    return std::tuple{i0, i1, f};
  };
  const auto [y0, y1, fy] = taps(h, oh);
  const auto [x0, x1, fx] = taps(w, ow);
  for (int p = 0; p < planes; ++p) {
    const double* s = src.data() + static_cast<std::size_t>(p) * h * w;
    double* o = out.data() + static_cast<std::size_t>(p) * oh * ow;
    for (int y = 0; y < oh; ++y)
      for (int x = 0; x < ow; ++x) {
        const double a = s[y0[y] * w + x0[x]], b = s[y0[y] * w + x1[x]];
        const double c = s[y1[y] * w + x0[x]], d = s[y1[y] * w + x1[x]];
        const double top = a + (b - a) * fx[x];
        const double bot = c + (d - c) * fx[x];
        o[static_cast<std::size_t>(y) * ow + x] = top + (bot - top) * fy[y];
      }
  }
  return out;
}

}  // namespace detail

inline Image crop(const Image& img, int y0, int x0, int h, int w) {
  if (y0 < 0 || x0 < 0 || y0 + h > img.height || x0 + w > img.width) throw std::out_of_range("crop outside image");
  Image out;
  out.height = h;
  out.width = w;
  out.data = detail::crop_planes(img.data, 3, img.height, img.width, y0, x0, h, w);
  return out;
}

inline AlphaMatte crop(const AlphaMatte& a, int y0, int x0, int h, int w) {
  if (y0 < 0 || x0 < 0 || y0 + h > a.height || x0 + w > a.width) throw std::out_of_range("crop outside matte");
  AlphaMatte out;
  out.height = h;
  out.width = w;
  out.data = detail::crop_planes(a.data, 1, a.height, a.width, y0, x0, h, w);
  return out;
}

inline TriClassMap crop(const TriClassMap& m, int y0, int x0, int h, int w) {
  if (y0 < 0 || x0 < 0 || y0 + h > m.height || x0 + w > m.width) throw std::out_of_range("crop outside label map");
  TriClassMap out;
  out.height = h;
  out.width = w;
  out.labels = detail::crop_planes(m.labels, 1, m.height, m.width, y0, x0, h, w);
  return out;
}

/// Zero padding on the bottom/right edges up to (h, w).
inline Image pad(const Image& img, int h, int w) {
  Image out;
  out.height = h;
  out.width = w;
  out.data = detail::pad_planes(img.data, 3, img.height, img.width, h, w, 0.0);
  return out;
}

inline AlphaMatte pad(const AlphaMatte& a, int h, int w) {
  AlphaMatte out;
  out.height = h;
  out.width = w;
  out.data = detail::pad_planes(a.data, 1, a.height, a.width, h, w, 0.0);
  return out;
}

inline TriClassMap pad(const TriClassMap& m, int h, int w) {
  TriClassMap out;
  out.height = h;
  out.width = w;
  out.labels = detail::pad_planes(m.labels, 1, m.height, m.width, h, w, TriClass::BG);
  return out;
}

/// Mirror padding (edge pixel not repeated) on the bottom/right edges.
inline Image reflect_pad(const Image& img, int h, int w) {
  Image out(h, w);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        out.at(c, y, x) = img.at(c, detail::reflect_index(y, img.height), detail::reflect_index(x, img.width));
  return out;
}

inline Image resize_bilinear(const Image& img, int h, int w) {
  Image out;
  out.height = h;
  out.width = w;
  out.data = detail::resize_bilinear_planes(img.data, 3, img.height, img.width, h, w);
  return out;
}

inline AlphaMatte resize_bilinear(const AlphaMatte& a, int h, int w) {
  AlphaMatte out;
  out.height = h;
  out.width = w;
  out.data = detail::resize_bilinear_planes(a.data, 1, a.height, a.width, h, w);
  return out;
}

/// Nearest-neighbour resampling with half-pixel centers.
inline TriClassMap resize_nearest(const TriClassMap& m, int h, int w) {
  if (h == m.height && w == m.width) return m;
  TriClassMap out(h, w);
  for (int y = 0; y < h; ++y) {
    const int sy = std::min(m.height - 1, static_cast<int>(std::floor((y + 0.5) * m.height / h)));
    for (int x = 0; x < w; ++x) {
      const int sx = std::min(m.width - 1, static_cast<int>(std::floor((x + 0.5) * m.width / w)));
      out.at(y, x) = m.at(sy, sx);
    }
  }
  return out;
}

inline void flip_horizontal(Image& img) { detail::flip_planes(img.data, 3, img.height, img.width); }
inline void flip_horizontal(AlphaMatte& a) { detail::flip_planes(a.data, 1, a.height, a.width); }
inline void flip_horizontal(TriClassMap& m) { detail::flip_planes(m.labels, 1, m.height, m.width); }

/// Normalized 1-D Gaussian of half-width ceil(3 sigma).
inline std::vector<double> gaussian_kernel(double sigma) {
  const int r = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> k(2 * r + 1);
  double sum = 0;
  for (int i = -r; i <= r; ++i) sum += k[i + r] = std::exp(-0.5 * i * i / (sigma * sigma));
  for (double& v : k) v /= sum;
  return k;
}

/// Separable Gaussian blur with replicated borders, applied to `planes` planes of h x w.
inline void gaussian_blur_planes(std::vector<double>& data, int planes, int h, int w, double sigma) {
  const auto k = gaussian_kernel(sigma);
  const int r = static_cast<int>(k.size() / 2);
  std::vector<double> tmp(static_cast<std::size_t>(h) * w);
  for (int p = 0; p < planes; ++p) {
    double* s = data.data() + static_cast<std::size_t>(p) * h * w;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double acc = 0;
        for (int i = -r; i <= r; ++i) acc += k[i + r] * s[y * w + std::clamp(x + i, 0, w - 1)];
        tmp[static_cast<std::size_t>(y) * w + x] = acc;
      }
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double acc = 0;
        for (int i = -r; i <= r; ++i) acc += k[i + r] * tmp[static_cast<std::size_t>(std::clamp(y + i, 0, h - 1)) * w + x];
        s[static_cast<std::size_t>(y) * w + x] = acc;
      }
  }
}

inline void gaussian_blur(Image& img, double sigma) { gaussian_blur_planes(img.data, 3, img.height, img.width, sigma); }
inline void gaussian_blur(AlphaMatte& a, double sigma) { gaussian_blur_planes(a.data, 1, a.height, a.width, sigma); }

}  // namespace ppmatte::imgproc

#endif  // PPMATTE_IMGPROC_HPP_
