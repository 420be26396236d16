#include <gtest/gtest.h>

#include <filesystem>
#include <random>

#include "ppmatte/core.hpp"
#include "ppmatte/io.hpp"
#include "ppmatte/random.hpp"

using namespace ppmatte;

namespace {

AlphaMatte random_alpha(std::mt19937_64& gen, int h, int w, double p_extreme = 0.3) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  AlphaMatte a(h, w);
  for (double& v : a.data) {
    const double r = u(gen);
    v = r < p_extreme / 2 ? 0.0 : (r < p_extreme ? 1.0 : u(gen));
  }
  return a;
}

std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("ppmatte_core_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace

TEST(DeriveTriclass, AllOnesIsForeground) {
  const auto m = derive_triclass(AlphaMatte(7, 5, 1.0), 0);
  EXPECT_EQ(m.count(TriClass::FG), 35u);
}

TEST(DeriveTriclass, AllZerosIsBackground) {
  const auto m = derive_triclass(AlphaMatte(7, 5, 0.0), 0);
  EXPECT_EQ(m.count(TriClass::BG), 35u);
}

TEST(DeriveTriclass, CenterPixelDilatesToThreeByThree) {
  AlphaMatte a(5, 5, 0.0);
  a.at(2, 2) = 0.5;
  const auto m = derive_triclass(a, 1);
  for (int y = 0; y < 5; ++y)
    for (int x = 0; x < 5; ++x) {
      const bool inner = y >= 1 && y <= 3 && x >= 1 && x <= 3;
      EXPECT_EQ(m.at(y, x), inner ? TriClass::TR : TriClass::BG) << y << "," << x;
    }
}

TEST(DeriveTriclass, NegativeRadiusThrows) { EXPECT_THROW(derive_triclass(AlphaMatte(3, 3), -1), std::invalid_argument); }

TEST(DeriveTriclass, RadiusZeroPartitionsByValue) {
  std::mt19937_64 gen(3);
  for (int trial = 0; trial < 20; ++trial) {
    const auto a = random_alpha(gen, 9 + trial, 11);
    const auto m = derive_triclass(a, 0);
    for (std::size_t i = 0; i < a.pixels(); ++i) {
      const TriClass want = a.data[i] == 0.0 ? TriClass::BG : (a.data[i] == 1.0 ? TriClass::FG : TriClass::TR);
      ASSERT_EQ(m.labels[i], want);
    }
  }
}

TEST(DeriveTriclass, DilationIsMonotone) {
  std::mt19937_64 gen(4);
  for (int trial = 0; trial < 10; ++trial) {
    AlphaMatte a = random_alpha(gen, 24, 20, 0.97);
    std::size_t prev = 0;
    for (int r = 0; r <= 6; ++r) {
      const auto m = derive_triclass(a, r);
      const auto prev_map = r > 0 ? derive_triclass(a, r - 1) : m;
      for (std::size_t i = 0; i < a.pixels(); ++i) {
        if (prev_map.labels[i] == TriClass::TR) {
          ASSERT_EQ(m.labels[i], TriClass::TR);
        }
      }
      ASSERT_GE(m.count(TriClass::TR), prev);
      prev = m.count(TriClass::TR);
    }
  }
}

// Square dilation equals "some TR pixel within Chebyshev distance r".
TEST(DeriveTriclass, DilationMatchesBruteForce) {
  std::mt19937_64 gen(5);
  for (int trial = 0; trial < 10; ++trial) {
    const AlphaMatte a = random_alpha(gen, 15, 13, 0.95);
    const int r = trial % 4;
    const auto m = derive_triclass(a, r);
    for (int y = 0; y < a.height; ++y)
      for (int x = 0; x < a.width; ++x) {
        bool near = false;
        for (int dy = -r; dy <= r; ++dy)
          for (int dx = -r; dx <= r; ++dx) {
            const int yy = y + dy, xx = x + dx;
            if (yy < 0 || yy >= a.height || xx < 0 || xx >= a.width) continue;
            const double v = a.at(yy, xx);
            near = near || (v > 0.0 && v < 1.0);
          }
        const double v = a.at(y, x);
        const TriClass want = near ? TriClass::TR : (v == 1.0 ? TriClass::FG : TriClass::BG);
        ASSERT_EQ(m.at(y, x), want) << trial << " " << y << "," << x;
      }
  }
}

TEST(DeriveTriclass, ScaledRadius) {
  EXPECT_EQ(scaled_dilation_radius(512), 15);
  EXPECT_EQ(scaled_dilation_radius(64), 2);
  EXPECT_EQ(scaled_dilation_radius(1024), 30);
}

TEST(Quantize, FixedPoints) {
  EXPECT_EQ(quantize_value(0.0), 0);
  EXPECT_EQ(quantize_value(1.0), 255);
  EXPECT_EQ(quantize_value(0.5), 128);
  EXPECT_NEAR(dequantize_value(128), 0.50196, 1e-5);
}

TEST(Quantize, RoundTripWithinHalfStep) {
  std::mt19937_64 gen(6);
  const AlphaMatte a = random_alpha(gen, 31, 17);
  const AlphaMatte b = dequantize(quantize(a));
  for (std::size_t i = 0; i < a.pixels(); ++i) ASSERT_LE(std::abs(a.data[i] - b.data[i]), 1.0 / 510 + 1e-15);
}

TEST(Quantize, IdempotentAfterOneRoundTrip) {
  std::mt19937_64 gen(7);
  const AlphaMatte a = random_alpha(gen, 16, 16);
  const GrayRaster q = quantize(a);
  EXPECT_EQ(quantize(dequantize(q)).data, q.data);
}

TEST(Png, AlphaRoundTripIsExactOnGrid) {
  const auto dir = temp_dir("alpha");
  AlphaMatte a(3, 256);
  for (int x = 0; x < 256; ++x)
    for (int y = 0; y < 3; ++y) a.at(y, x) = x / 255.0;
  io::save(dir / "a.png", a);
  const AlphaMatte b = io::load_alpha(dir / "a.png");
  ASSERT_EQ(b.height, 3);
  ASSERT_EQ(b.width, 256);
  for (std::size_t i = 0; i < a.pixels(); ++i) ASSERT_EQ(a.data[i], b.data[i]);
}

TEST(Png, ImageRoundTripWithinHalfStep) {
  const auto dir = temp_dir("image");
  Rng rng(11);
  Image img(10, 7);
  for (double& v : img.data) v = rng.uniform();
  io::save(dir / "i.png", img);
  const Image back = io::load_image(dir / "i.png");
  ASSERT_EQ(back.data.size(), img.data.size());
  for (std::size_t i = 0; i < img.data.size(); ++i) ASSERT_LE(std::abs(back.data[i] - img.data[i]), 0.5 / 255 + 1e-12);
  EXPECT_EQ(io::read_png(dir / "i.png").channels, 3);
}

TEST(Png, LabelsUseDocumentedCodes) {
  const auto dir = temp_dir("label");
  TriClassMap m(1, 3);
  m.labels = {TriClass::FG, TriClass::TR, TriClass::BG};
  io::save(dir / "l.png", m);
  const io::Raster r = io::read_png(dir / "l.png");
  ASSERT_EQ(r.channels, 1);
  EXPECT_EQ(r.data, (std::vector<std::uint8_t>{255, 128, 0}));
  EXPECT_EQ(io::load_triclass(dir / "l.png").labels, m.labels);
}

TEST(Png, InvalidLabelValueRejected) { EXPECT_THROW(io::decode_label(77), std::runtime_error); }

TEST(Png, MissingFileRaises) { EXPECT_THROW(io::read_png("/nonexistent/x.png"), std::runtime_error); }

TEST(Sample, ValidateRejectsMismatch) {
  Sample s;
  s.image = Image(4, 4);
  s.fg = Image(4, 4);
  s.bg = Image(4, 5);
  s.alpha = AlphaMatte(4, 4);
  s.label = TriClassMap(4, 4);
  EXPECT_THROW(validate(s), DimensionError);
}
