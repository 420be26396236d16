#ifndef PPMATTE_DATASYNTH_HPP_
#define PPMATTE_DATASYNTH_HPP_

// Synthetic matting datasets: procedural foregrounds and backgrounds combined
// through the compositing equation, plus the training-time augmentation
// pipeline.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "ppmatte/core.hpp"
#include "ppmatte/imgproc.hpp"
#include "ppmatte/io.hpp"
#include "ppmatte/random.hpp"

namespace ppmatte {

/// Training-time augmentation. Ranges are relative (0.2 = +/-20%).
struct AugmentConfig {
  int base_size = 64;
  std::vector<int> crop_sizes{64, 80, 96};
  double distort_prob = 0.5;
  double brightness = 0.2;
  double contrast = 0.2;
  double saturation = 0.2;
  double blur_prob = 0.1;
  double blur_sigma_min = 0.1;
  double blur_sigma_max = 2.0;
  double flip_prob = 0.5;

  /// Probabilities zero and a single crop size: geometry-only identity at base_size.
  static AugmentConfig none(int size) {
    AugmentConfig a;
    a.base_size = size;
    a.crop_sizes = {size};
    a.distort_prob = a.blur_prob = a.flip_prob = 0.0;
    return a;
  }
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(AugmentConfig, base_size, crop_sizes, distort_prob, brightness,
                                                contrast, saturation, blur_prob, blur_sigma_min, blur_sigma_max,
                                                flip_prob)

/// Matte smoothness of procedural foregrounds. Feather sigmas are in pixels
/// per 64 px of image size.
struct ForegroundStyle {
  double feather_min = 0.6;
  double feather_max = 1.4;
  /// Sub-pixel hair-like strokes.
  bool filaments = true;

  void validate() const {
    if (!(feather_min > 0 && feather_max >= feather_min))
      throw std::invalid_argument("ForegroundStyle: need 0 < feather_min <= feather_max");
  }
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(ForegroundStyle, feather_min, feather_max, filaments)

struct SynthConfig {
  std::uint64_t seed = 1;
  int num_fg_train = 4;
  int num_fg_test = 2;
  int bg_per_fg_train = 3;
  int bg_per_fg_test = 2;
  /// Side length of generated foregrounds/backgrounds.
  int image_size = 96;
  /// Transition dilation in pixels at image_size; negative selects 15 px scaled from 512.
  int dilation_radius = -1;
  ForegroundStyle style;
  AugmentConfig augment;

  int effective_dilation() const {
    return dilation_radius >= 0 ? dilation_radius : scaled_dilation_radius(image_size);
  }

  void validate() const {
    if (num_fg_train <= 0 || num_fg_test <= 0 || bg_per_fg_train <= 0 || bg_per_fg_test <= 0)
      throw std::invalid_argument("SynthConfig: counts must be positive");
    if (augment.crop_sizes.empty()) throw std::invalid_argument("SynthConfig: crop_sizes must be non-empty");
    if (image_size < 32) throw std::invalid_argument("SynthConfig: image_size must be >= 32");
    if (augment.base_size <= 0) throw std::invalid_argument("SynthConfig: base_size must be positive");
    style.validate();
  }

  /// Counts of the reference benchmark protocol (431 train / 50 test
  /// foregrounds, 100 / 20 backgrounds each) at the 512 px training size.
  static SynthConfig reference_protocol() {
    SynthConfig c;
    c.num_fg_train = 431;
    c.num_fg_test = 50;
    c.bg_per_fg_train = 100;
    c.bg_per_fg_test = 20;
    c.image_size = 800;
    c.augment.base_size = 512;
    c.augment.crop_sizes = {512, 640, 800};
    return c;
  }
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(SynthConfig, seed, num_fg_train, num_fg_test, bg_per_fg_train,
                                                bg_per_fg_test, image_size, dilation_radius, style, augment)

/// I = alpha * F + (1 - alpha) * B per pixel and channel.
inline Image composite(const Image& fg, const Image& bg, const AlphaMatte& alpha) {
  require_same_size(fg, alpha, "composite fg");
  require_same_size(bg, alpha, "composite bg");
  Image out(alpha.height, alpha.width);
  const std::size_t n = alpha.pixels();
  for (int c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < n; ++i) {
      const double a = alpha.data[i];
      out.data[c * n + i] = std::clamp(a * fg.data[c * n + i] + (1.0 - a) * bg.data[c * n + i], 0.0, 1.0);
    }
  return out;
}

namespace synth_detail {

struct Point {
  double x, y;
};

inline double segment_distance(Point p, Point a, Point b) {
  const double dx = b.x - a.x, dy = b.y - a.y;
  const double len2 = dx * dx + dy * dy;
  double t = len2 > 0 ? ((p.x - a.x) * dx + (p.y - a.y) * dy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double ex = a.x + t * dx - p.x, ey = a.y + t * dy - p.y;
  return std::sqrt(ex * ex + ey * ey);
}

inline bool inside_polygon(Point p, const std::vector<Point>& poly) {
  bool in = false;
  for (std::size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
    if ((poly[i].y > p.y) != (poly[j].y > p.y) &&
        p.x < (poly[j].x - poly[i].x) * (p.y - poly[i].y) / (poly[j].y - poly[i].y) + poly[i].x)
      in = !in;
  }
  return in;
}

struct Capsule {
  Point a, b;
  double radius;
};

struct Shapes {
  std::vector<std::pair<Point, double>> disks;
  std::vector<std::vector<Point>> polygons;
  std::vector<Capsule> strokes;

  bool contains(Point p) const {
    for (const auto& [c, r] : disks)
      if ((p.x - c.x) * (p.x - c.x) + (p.y - c.y) * (p.y - c.y) <= r * r) return true;
    for (const auto& poly : polygons)
      if (inside_polygon(p, poly)) return true;
    for (const auto& s : strokes)
      if (segment_distance(p, s.a, s.b) <= s.radius) return true;
    return false;
  }
};

/// Area coverage of each pixel, 4x4 supersampled.
inline AlphaMatte rasterize(const Shapes& shapes, int size) {
  constexpr int kSub = 4;
  AlphaMatte cov(size, size);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      int hits = 0;
      for (int sy = 0; sy < kSub; ++sy)
        for (int sx = 0; sx < kSub; ++sx)
          hits += shapes.contains({x + (sx + 0.5) / kSub, y + (sy + 0.5) / kSub});
      cov.at(y, x) = hits / static_cast<double>(kSub * kSub);
    }
  return cov;
}

inline void random_color(Rng& rng, double out[3]) {
  for (int c = 0; c < 3; ++c) out[c] = rng.uniform(0.05, 0.95);
}

}  // namespace synth_detail

/// Procedural object (union of disks, a star polygon and strokes plus a few
/// hair-like filaments) with a Gaussian-feathered boundary. Values are on the
/// 8-bit grid so disk round trips are lossless.
inline std::pair<Image, AlphaMatte> synth_foreground(std::uint64_t seed, int size, const ForegroundStyle& style = {}) {
  using namespace synth_detail;
  if (size < 32) throw std::invalid_argument("synth_foreground: size must be >= 32");
  Rng rng(derive_seed(seed, {0xF0}));
  const double s = size;
  const Point center{s * rng.uniform(0.4, 0.6), s * rng.uniform(0.4, 0.6)};

  Shapes shapes;
  const int n_disks = 1 + rng.index(3);
  for (int i = 0; i < n_disks; ++i) {
    const Point c{center.x + rng.normal() * 0.08 * s, center.y + rng.normal() * 0.08 * s};
    shapes.disks.push_back({c, rng.uniform(0.12, 0.24) * s});
  }
  if (rng.bernoulli(0.6)) {
    const int k = 3 + rng.index(4);
    const double phase = rng.uniform(0, 2 * std::numbers::pi);
    std::vector<Point> poly;
    for (int i = 0; i < k; ++i) {
      const double ang = phase + 2 * std::numbers::pi * i / k;
      const double rad = rng.uniform(0.12, 0.32) * s;
      poly.push_back({center.x + rad * std::cos(ang), center.y + rad * std::sin(ang)});
    }
    shapes.polygons.push_back(std::move(poly));
  }
  const int n_strokes = rng.index(3);
  for (int i = 0; i < n_strokes; ++i) {
    const double ang = rng.uniform(0, 2 * std::numbers::pi);
    const double len = rng.uniform(0.2, 0.42) * s;
    shapes.strokes.push_back(
        {center, {center.x + len * std::cos(ang), center.y + len * std::sin(ang)}, rng.uniform(0.015, 0.04) * s});
  }
  const int n_hairs = 2 + rng.index(4);
  for (int i = 0; i < n_hairs && style.filaments; ++i) {
    const double ang = rng.uniform(0, 2 * std::numbers::pi);
    const double r0 = 0.15 * s, r1 = rng.uniform(0.3, 0.46) * s;
    shapes.strokes.push_back({{center.x + r0 * std::cos(ang), center.y + r0 * std::sin(ang)},
                              {center.x + r1 * std::cos(ang), center.y + r1 * std::sin(ang)},
                              rng.uniform(0.3, 0.6)});
  }

  AlphaMatte alpha = rasterize(shapes, size);
  imgproc::gaussian_blur(alpha, rng.uniform(style.feather_min, style.feather_max) * s / 64.0);
  for (double& v : alpha.data) v = std::clamp(v, 0.0, 1.0);
  snap_to_8bit(alpha.data);

  double c1[3], c2[3];
  random_color(rng, c1);
  random_color(rng, c2);
  const double theta = rng.uniform(0, 2 * std::numbers::pi);
  const double freq = rng.uniform(1.0, 4.0);
  const double phase = rng.uniform(0, 2 * std::numbers::pi);
  Image fg(size, size);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const double u = (x * std::cos(theta) + y * std::sin(theta)) / s;
      const double t = 0.5 + 0.5 * std::sin(2 * std::numbers::pi * freq * u + phase);
      for (int c = 0; c < 3; ++c)
        fg.at(c, y, x) = std::clamp(c1[c] + (c2[c] - c1[c]) * t + 0.03 * rng.normal(), 0.0, 1.0);
    }
  snap_to_8bit(fg.data);
  return {std::move(fg), std::move(alpha)};
}

/// Smooth colour gradient overlaid with soft blobs and fine noise.
inline Image synth_background(std::uint64_t seed, int size) {
  if (size < 1) throw std::invalid_argument("synth_background: size must be positive");
  Rng rng(derive_seed(seed, {0xB0}));
  const double s = size;
  double c1[3], c2[3];
  synth_detail::random_color(rng, c1);
  synth_detail::random_color(rng, c2);
  const double theta = rng.uniform(0, 2 * std::numbers::pi);
  struct Blob {
    double x, y, r, col[3], weight;
  };
  std::vector<Blob> blobs(4 + rng.index(6));
  for (auto& b : blobs) {
    b.x = rng.uniform(0, s);
    b.y = rng.uniform(0, s);
    b.r = rng.uniform(0.05, 0.25) * s;
    synth_detail::random_color(rng, b.col);
    b.weight = rng.uniform(0.3, 0.9);
  }
  const double noise = rng.uniform(0.01, 0.06);
  Image bg(size, size);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const double t = std::clamp(0.5 + ((x - s / 2) * std::cos(theta) + (y - s / 2) * std::sin(theta)) / s, 0.0, 1.0);
      double col[3];
      for (int c = 0; c < 3; ++c) col[c] = c1[c] + (c2[c] - c1[c]) * t;
      for (const auto& b : blobs) {
        const double d2 = ((x - b.x) * (x - b.x) + (y - b.y) * (y - b.y)) / (b.r * b.r);
        const double w = b.weight * std::exp(-0.5 * d2);
        for (int c = 0; c < 3; ++c) col[c] += (b.col[c] - col[c]) * w;
      }
      for (int c = 0; c < 3; ++c) bg.at(c, y, x) = std::clamp(col[c] + noise * rng.normal(), 0.0, 1.0);
    }
  snap_to_8bit(bg.data);
  return bg;
}

struct Pairing {
  int sample = 0;
  int fg = 0;
  int bg = 0;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(Pairing, sample, fg, bg)

struct Split {
  std::vector<Image> foregrounds;
  std::vector<AlphaMatte> alphas;
  std::vector<TriClassMap> labels;
  std::vector<Image> backgrounds;
  std::vector<Pairing> pairs;
  std::vector<Sample> samples;
};

struct Dataset {
  SynthConfig config;
  Split train;
  Split test;
};

namespace synth_detail {

inline Split build_split(const SynthConfig& cfg, std::uint64_t tag, int num_fg, int bg_per_fg) {
  Split split;
  const int radius = cfg.effective_dilation();
  for (int f = 0; f < num_fg; ++f) {
    auto [fg, alpha] = synth_foreground(derive_seed(cfg.seed, {tag, 1, static_cast<std::uint64_t>(f)}), cfg.image_size, cfg.style);
    split.labels.push_back(derive_triclass(alpha, radius));
    split.foregrounds.push_back(std::move(fg));
    split.alphas.push_back(std::move(alpha));
  }
  // Every pairing gets its own background, so the backgrounds of one
  // foreground are pairwise distinct.
  for (int f = 0; f < num_fg; ++f) {
    for (int k = 0; k < bg_per_fg; ++k) {
      const int b = static_cast<int>(split.backgrounds.size());
      split.backgrounds.push_back(
          synth_background(derive_seed(cfg.seed, {tag, 2, static_cast<std::uint64_t>(b)}), cfg.image_size));
      const int id = static_cast<int>(split.pairs.size());
      split.pairs.push_back({id, f, b});
      Sample s;
      s.fg = split.foregrounds[f];
      s.alpha = split.alphas[f];
      s.label = split.labels[f];
      s.bg = split.backgrounds[b];
      s.image = composite(s.fg, s.bg, s.alpha);
      split.samples.push_back(std::move(s));
    }
  }
  return split;
}

inline std::string numbered(int i) {
  std::ostringstream os;
  os << std::setw(6) << std::setfill('0') << i << ".png";
  return os.str();
}

}  // namespace synth_detail

/// Pairs every training foreground with bg_per_fg_train fresh backgrounds and
/// every test foreground with bg_per_fg_test.
inline Dataset assemble_dataset(const SynthConfig& config) {
  config.validate();
  Dataset ds;
  ds.config = config;
  ds.train = synth_detail::build_split(config, 0x7261, config.num_fg_train, config.bg_per_fg_train);
  ds.test = synth_detail::build_split(config, 0x7465, config.num_fg_test, config.bg_per_fg_test);
  return ds;
}

/// Layout: DIR/manifest.json and DIR/{train,test}/{fg,alpha,label,bg,image}/NNNNNN.png.
/// fg/alpha/label are indexed by foreground, bg by background, image by sample.
inline void write_dataset(const Dataset& ds, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  using synth_detail::numbered;
  fs::create_directories(dir);
  nlohmann::json manifest;
  manifest["format"] = "ppmatte-dataset-1";
  manifest["config"] = ds.config;
  for (const auto& [name, split] : {std::pair<std::string, const Split*>{"train", &ds.train}, {"test", &ds.test}}) {
    const fs::path root = dir / name;
    for (std::size_t f = 0; f < split->foregrounds.size(); ++f) {
      io::save(root / "fg" / numbered(static_cast<int>(f)), split->foregrounds[f]);
      io::save(root / "alpha" / numbered(static_cast<int>(f)), split->alphas[f]);
      io::save(root / "label" / numbered(static_cast<int>(f)), split->labels[f]);
    }
    for (std::size_t b = 0; b < split->backgrounds.size(); ++b)
      io::save(root / "bg" / numbered(static_cast<int>(b)), split->backgrounds[b]);
    for (std::size_t i = 0; i < split->samples.size(); ++i)
      io::save(root / "image" / numbered(static_cast<int>(i)), split->samples[i].image);
    manifest[name] = split->pairs;
  }
  std::ofstream out(dir / "manifest.json");
  if (!out) throw std::runtime_error("cannot write manifest in " + dir.string());
  out << manifest.dump(2) << '\n';
}

inline nlohmann::json read_manifest(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw std::runtime_error("dataset manifest missing: " + (dir / "manifest.json").string());
  return nlohmann::json::parse(in);
}

/// Loads one split ("train" or "test") from a dataset directory.
inline std::vector<Sample> load_split(const std::filesystem::path& dir, const std::string& split) {
  using synth_detail::numbered;
  const nlohmann::json manifest = read_manifest(dir);
  if (!manifest.contains(split)) throw std::runtime_error("dataset has no split '" + split + "'");
  const auto pairs = manifest.at(split).get<std::vector<Pairing>>();
  const std::filesystem::path root = dir / split;
  std::vector<Sample> out;
  out.reserve(pairs.size());
  for (const Pairing& p : pairs) {
    Sample s;
    s.image = io::load_image(root / "image" / numbered(p.sample));
    s.fg = io::load_image(root / "fg" / numbered(p.fg));
    s.alpha = io::load_alpha(root / "alpha" / numbered(p.fg));
    s.label = io::load_triclass(root / "label" / numbered(p.fg));
    s.bg = io::load_image(root / "bg" / numbered(p.bg));
    validate(s);
    out.push_back(std::move(s));
  }
  return out;
}

namespace synth_detail {

inline void distort(Image& img, double brightness, double contrast, double saturation) {
  const std::size_t n = img.pixels();
  for (std::size_t i = 0; i < n; ++i) {
    double px[3];
    for (int c = 0; c < 3; ++c) px[c] = img.data[c * n + i] * brightness;
    for (int c = 0; c < 3; ++c) px[c] = (px[c] - 0.5) * contrast + 0.5;
    const double gray = 0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2];
    for (int c = 0; c < 3; ++c) img.data[c * n + i] = std::clamp(gray + (px[c] - gray) * saturation, 0.0, 1.0);
  }
}

}  // namespace synth_detail

/// Random crop (padding samples smaller than the smallest crop), resize to
/// base_size, photometric distortion, blur and horizontal flip. Geometry is
/// applied to every layer of the sample; colour changes are applied to fg and
/// bg and the image is recomposited so image == composite(fg, bg, alpha).
inline Sample augment(const Sample& sample, std::uint64_t seed, const AugmentConfig& cfg) {
  validate(sample);
  if (cfg.crop_sizes.empty()) throw std::invalid_argument("augment: crop_sizes must be non-empty");
  Rng rng(derive_seed(seed, {0xA6}));
  // Fixed draw order keeps every decision reproducible from the seed alone.
  const int crop_choice = cfg.crop_sizes[rng.index(static_cast<int>(cfg.crop_sizes.size()))];
  const double u_y = rng.uniform(), u_x = rng.uniform();
  const bool do_distort = rng.bernoulli(cfg.distort_prob);
  const double f_b = 1.0 + rng.uniform(-cfg.brightness, cfg.brightness);
  const double f_c = 1.0 + rng.uniform(-cfg.contrast, cfg.contrast);
  const double f_s = 1.0 + rng.uniform(-cfg.saturation, cfg.saturation);
  const bool do_blur = rng.bernoulli(cfg.blur_prob);
  const double sigma = rng.uniform(cfg.blur_sigma_min, cfg.blur_sigma_max);
  const bool do_flip = rng.bernoulli(cfg.flip_prob);

  const int min_crop = *std::min_element(cfg.crop_sizes.begin(), cfg.crop_sizes.end());
  int h = sample.height(), w = sample.width();
  int crop;
  int ph, pw;
  if (h < min_crop || w < min_crop) {
    crop = min_crop;
    ph = std::max(h, min_crop);
    pw = std::max(w, min_crop);
  } else {
    crop = crop_choice;
    ph = std::max(h, crop);
    pw = std::max(w, crop);
  }

  Sample out = sample;
  if (ph != h || pw != w) {
    out.image = imgproc::pad(out.image, ph, pw);
    out.fg = imgproc::pad(out.fg, ph, pw);
    out.bg = imgproc::pad(out.bg, ph, pw);
    out.alpha = imgproc::pad(out.alpha, ph, pw);
    out.label = imgproc::pad(out.label, ph, pw);
  }
  const int y0 = static_cast<int>(u_y * (ph - crop + 1));
  const int x0 = static_cast<int>(u_x * (pw - crop + 1));
  if (crop != ph || crop != pw) {
    out.image = imgproc::crop(out.image, y0, x0, crop, crop);
    out.fg = imgproc::crop(out.fg, y0, x0, crop, crop);
    out.bg = imgproc::crop(out.bg, y0, x0, crop, crop);
    out.alpha = imgproc::crop(out.alpha, y0, x0, crop, crop);
    out.label = imgproc::crop(out.label, y0, x0, crop, crop);
  }
  bool recomposite = false;
  const int base = cfg.base_size;
  if (crop != base) {
    out.fg = imgproc::resize_bilinear(out.fg, base, base);
    out.bg = imgproc::resize_bilinear(out.bg, base, base);
    out.alpha = imgproc::resize_bilinear(out.alpha, base, base);
    for (double& v : out.alpha.data) v = std::clamp(v, 0.0, 1.0);
    out.label = imgproc::resize_nearest(out.label, base, base);
    recomposite = true;
  }
  if (do_distort) {
    synth_detail::distort(out.fg, f_b, f_c, f_s);
    synth_detail::distort(out.bg, f_b, f_c, f_s);
    recomposite = true;
  }
  if (do_blur) {
    imgproc::gaussian_blur(out.fg, sigma);
    imgproc::gaussian_blur(out.bg, sigma);
    recomposite = true;
  }
  if (recomposite) out.image = composite(out.fg, out.bg, out.alpha);
  if (do_flip) {
    imgproc::flip_horizontal(out.image);
    imgproc::flip_horizontal(out.fg);
    imgproc::flip_horizontal(out.bg);
    imgproc::flip_horizontal(out.alpha);
    imgproc::flip_horizontal(out.label);
  }
  return out;
}

inline Sample augment(const Sample& sample, std::uint64_t seed, const SynthConfig& config) {
  return augment(sample, seed, config.augment);
}

}  // namespace ppmatte

#endif  // PPMATTE_DATASYNTH_HPP_
