#ifndef PPMATTE_IO_HPP_
#define PPMATTE_IO_HPP_

// PNG persistence for images (8-bit RGB), mattes (8-bit gray) and tri-class
// maps (8-bit gray, FG=255, TR=128, BG=0).

#include <png.h>

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "ppmatte/core.hpp"

namespace ppmatte::io {

struct Raster {
  int height = 0;
  int width = 0;
  int channels = 0;  // 1 or 3
  std::vector<std::uint8_t> data;  // interleaved
};

/// Reads any PNG as 8-bit gray (channels == 1) or RGB (channels == 3).
/// Alpha channels are composited away by libpng.
inline Raster read_png(const std::filesystem::path& path) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.string().c_str())) {
    throw std::runtime_error("cannot read PNG " + path.string() + ": " + img.message);
  }
  const bool gray = (img.format & PNG_FORMAT_FLAG_COLOR) == 0;
  img.format = gray ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  Raster r;
  r.width = static_cast<int>(img.width);
  r.height = static_cast<int>(img.height);
  r.channels = gray ? 1 : 3;
  r.data.resize(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, r.data.data(), 0, nullptr)) {
    png_image_free(&img);
    throw std::runtime_error("failed to decode PNG " + path.string() + ": " + img.message);
  }
  return r;
}

inline void write_png(const std::filesystem::path& path, const Raster& r) {
  if (r.channels != 1 && r.channels != 3) throw std::invalid_argument("write_png: channels must be 1 or 3");
  if (r.data.size() != static_cast<std::size_t>(r.width) * r.height * r.channels)
    throw std::invalid_argument("write_png: buffer size mismatch");
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(r.width);
  img.height = static_cast<png_uint_32>(r.height);
  img.format = r.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&img, path.string().c_str(), 0, r.data.data(), 0, nullptr)) {
    throw std::runtime_error("cannot write PNG " + path.string() + ": " + img.message);
  }
}

inline Raster to_raster(const Image& img) {
  Raster r{img.height, img.width, 3, std::vector<std::uint8_t>(img.pixels() * 3)};
  for (std::size_t i = 0; i < img.pixels(); ++i)
    for (int c = 0; c < 3; ++c) r.data[i * 3 + c] = quantize_value(img.data[c * img.pixels() + i]);
  return r;
}

inline Raster to_raster(const AlphaMatte& a) {
  GrayRaster g = quantize(a);
  return Raster{g.height, g.width, 1, std::move(g.data)};
}

inline std::uint8_t encode_label(TriClass c) {
  switch (c) {
    case TriClass::FG:
      return 255;
    case TriClass::TR:
      return 128;
    case TriClass::BG:
      return 0;
  }
  return 0;
}

inline TriClass decode_label(std::uint8_t v) {
  switch (v) {
    case 255:
      return TriClass::FG;
    case 128:
      return TriClass::TR;
    case 0:
      return TriClass::BG;
    default:
      throw std::runtime_error("invalid tri-class label value " + std::to_string(v));
  }
}

inline Raster to_raster(const TriClassMap& m) {
  Raster r{m.height, m.width, 1, std::vector<std::uint8_t>(m.pixels())};
  for (std::size_t i = 0; i < m.pixels(); ++i) r.data[i] = encode_label(m.labels[i]);
  return r;
}

/// Gray rasters are replicated into all three channels.
inline Image to_image(const Raster& r) {
  Image img(r.height, r.width);
  for (std::size_t i = 0; i < img.pixels(); ++i)
    for (int c = 0; c < 3; ++c)
      img.data[c * img.pixels() + i] = dequantize_value(r.data[i * r.channels + (r.channels == 3 ? c : 0)]);
  return img;
}

inline AlphaMatte to_alpha(const Raster& r) {
  if (r.channels != 1) throw std::runtime_error("alpha PNG must be single-channel");
  return dequantize(GrayRaster{r.height, r.width, r.data});
}

inline TriClassMap to_triclass(const Raster& r) {
  if (r.channels != 1) throw std::runtime_error("label PNG must be single-channel");
  TriClassMap m(r.height, r.width);
  for (std::size_t i = 0; i < m.pixels(); ++i) m.labels[i] = decode_label(r.data[i]);
  return m;
}

inline void save(const std::filesystem::path& p, const Image& img) { write_png(p, to_raster(img)); }
inline void save(const std::filesystem::path& p, const AlphaMatte& a) { write_png(p, to_raster(a)); }
inline void save(const std::filesystem::path& p, const TriClassMap& m) { write_png(p, to_raster(m)); }

inline Image load_image(const std::filesystem::path& p) { return to_image(read_png(p)); }
inline AlphaMatte load_alpha(const std::filesystem::path& p) { return to_alpha(read_png(p)); }
inline TriClassMap load_triclass(const std::filesystem::path& p) { return to_triclass(read_png(p)); }

}  // namespace ppmatte::io

#endif  // PPMATTE_IO_HPP_
