#include <gtest/gtest.h>

#include <cmath>

#include "gradcheck.hpp"
#include "ppmatte/datasynth.hpp"
#include "ppmatte/losses.hpp"

using namespace ppmatte;

namespace {

constexpr double kEps = 1e-6;

AlphaMatte random_matte(Rng& rng, int h, int w) {
  AlphaMatte a(h, w);
  for (double& v : a.data) v = rng.uniform();
  return a;
}

Sample random_sample(Rng& rng, int h, int w) {
  Sample s;
  s.fg = Image(h, w);
  s.bg = Image(h, w);
  for (double& v : s.fg.data) v = rng.uniform();
  for (double& v : s.bg.data) v = rng.uniform();
  s.alpha = random_matte(rng, h, w);
  for (int i = 0; i < h * w / 4; ++i) s.alpha.data[rng.index(h * w)] = rng.bernoulli(0.5) ? 1.0 : 0.0;
  s.image = composite(s.fg, s.bg, s.alpha);
  s.label = derive_triclass(s.alpha, 0);
  return s;
}

std::vector<double> random_probs(Rng& rng, std::size_t n) {
  std::vector<double> p(3 * n);
  for (std::size_t i = 0; i < n; ++i) {
    double e[3], s = 0;
    for (double& v : e) s += v = std::exp(rng.uniform(-2, 2));
    for (int c = 0; c < 3; ++c) p[c * n + i] = e[c] / s;
  }
  return p;
}

// Independent Sobel magnitude with explicit replicate-padded 3x3 window.
double naive_sobel_mag(const std::vector<double>& v, int h, int w, int y, int x, double eps) {
  static const double kx[3][3] = {{-1, 0, 1}, {-2, 0, 2}, {-1, 0, 1}};
  double gx = 0, gy = 0;
  for (int dy = -1; dy <= 1; ++dy)
    for (int dx = -1; dx <= 1; ++dx) {
      const int yy = std::min(std::max(y + dy, 0), h - 1), xx = std::min(std::max(x + dx, 0), w - 1);
      const double p = v[yy * w + xx];
      gx += kx[dy + 1][dx + 1] * p;
      gy += kx[dx + 1][dy + 1] * p;
    }
  return std::sqrt(gx * gx + gy * gy + eps * eps);
}

}  // namespace

TEST(SemanticLoss, DefinitionExamples) {
  TriClassMap lab(1, 4);
  lab.labels = {TriClass::FG, TriClass::BG, TriClass::TR, TriClass::FG};
  std::vector<double> onehot(12, 0.0);
  for (int i = 0; i < 4; ++i) onehot[static_cast<int>(lab.labels[i]) * 4 + i] = 1.0;
  EXPECT_EQ(semantic_loss(onehot, lab), 0.0);
  const std::vector<double> uniform(12, 1.0 / 3);
  EXPECT_NEAR(semantic_loss(uniform, lab), 4 * std::log(3.0), 1e-12);
  EXPECT_NEAR(semantic_loss(uniform, lab, true), std::log(3.0), 1e-12);
  TriClassMap one(1, 1, TriClass::BG);
  EXPECT_NEAR(semantic_loss(std::vector<double>{0.25, 0.5, 0.25}, one), std::log(2.0), 1e-12);
}

TEST(SemanticLoss, ZeroProbabilityIsFloored) {
  TriClassMap one(1, 1, TriClass::TR);
  EXPECT_NEAR(semantic_loss(std::vector<double>{0.5, 0.5, 0.0}, one), -std::log(1e-12), 1e-9);
}

TEST(SemanticLoss, DecreasesAsTrueClassProbabilityGrows) {
  TriClassMap lab(1, 2, TriClass::FG);
  double prev = INFINITY;
  for (double p = 0.05; p <= 1.0; p += 0.05) {
    const std::vector<double> probs{p, 0.3, 1 - p, 0.4, 0.0, 0.3};
    const double l = semantic_loss(probs, lab);
    EXPECT_LT(l, prev);
    prev = l;
  }
}

TEST(AlphaLoss, DefinitionExamples) {
  EXPECT_NEAR(alpha_loss(AlphaMatte(4, 5, 0.3), AlphaMatte(4, 5, 0.3)), 20 * kEps, 1e-18);
  AlphaMatte p(1, 1, 3e-6), g(1, 1, 0.0);
  EXPECT_NEAR(alpha_loss(p, g), std::sqrt(10.0) * 1e-6, 1e-15);
  EXPECT_NEAR(alpha_loss(AlphaMatte(1, 1, 1.0), AlphaMatte(1, 1, 0.0)), std::sqrt(1 + 1e-12), 1e-15);
}

TEST(AlphaLoss, LowerBoundWithEqualityOnlyAtPerfection) {
  Rng rng(1);
  for (int t = 0; t < 20; ++t) {
    const AlphaMatte a = random_matte(rng, 6, 6), b = random_matte(rng, 6, 6);
    std::vector<std::uint8_t> mask(36);
    for (auto& m : mask) m = rng.bernoulli(0.5);
    const double count = std::count(mask.begin(), mask.end(), 1);
    EXPECT_GT(alpha_loss(a, b, mask), count * kEps);
    EXPECT_NEAR(alpha_loss(a, a, mask), count * kEps, 1e-15);
  }
}

TEST(GradLoss, ZeroForEqualAndConstant) {
  Rng rng(2);
  const AlphaMatte a = random_matte(rng, 9, 7);
  EXPECT_EQ(grad_loss(a, a), 0.0);
  EXPECT_EQ(grad_loss(AlphaMatte(9, 7, 0.2), AlphaMatte(9, 7, 0.9)), 0.0);
}

TEST(GradLoss, HorizontalRampAgainstConstant) {
  // pred(y, x) = 0.1 x on 5x5; interior Sobel gx = 8 * 0.1, gy = 0.
  AlphaMatte ramp(5, 5), flat(5, 5, 0.5);
  for (int y = 0; y < 5; ++y)
    for (int x = 0; x < 5; ++x) ramp.at(y, x) = 0.1 * x;
  std::vector<std::uint8_t> interior(25, 0);
  for (int y = 1; y < 4; ++y)
    for (int x = 1; x < 4; ++x) interior[y * 5 + x] = 1;
  double oracle = 0;
  for (int y = 1; y < 4; ++y)
    for (int x = 1; x < 4; ++x)
      oracle += naive_sobel_mag(ramp.data, 5, 5, y, x, kEps) - naive_sobel_mag(flat.data, 5, 5, y, x, kEps);
  EXPECT_NEAR(grad_loss(ramp, flat, interior), oracle, 1e-12);
  EXPECT_NEAR(oracle, 9 * (std::sqrt(0.64 + 1e-12) - 1e-6), 1e-12);
}

TEST(GradLoss, MatchesNaiveOracleOnRandomInputs) {
  Rng rng(3);
  for (int t = 0; t < 10; ++t) {
    const AlphaMatte a = random_matte(rng, 8, 8), b = random_matte(rng, 8, 8);
    double oracle = 0;
    for (int y = 0; y < 8; ++y)
      for (int x = 0; x < 8; ++x)
        oracle += std::abs(naive_sobel_mag(a.data, 8, 8, y, x, kEps) - naive_sobel_mag(b.data, 8, 8, y, x, kEps));
    EXPECT_NEAR(grad_loss(a, b), oracle, 1e-12);
  }
}

TEST(CompositionLoss, DefinitionExamples) {
  Rng rng(4);
  const Sample s = random_sample(rng, 6, 5);
  EXPECT_NEAR(composition_loss(s.alpha, s), 3 * 30 * kEps, 1e-14);

  Sample t;
  t.fg = Image(4, 4, 1.0);
  t.bg = Image(4, 4, 0.0);
  t.alpha = AlphaMatte(4, 4, 1.0);
  t.image = Image(4, 4, 1.0);
  t.label = TriClassMap(4, 4, TriClass::FG);
  EXPECT_NEAR(composition_loss(AlphaMatte(4, 4, 0.0), t), 3 * 16 * std::sqrt(1 + 1e-12), 1e-12);

  Sample u = t;
  u.fg = Image(4, 4, 0.3);
  u.bg = Image(4, 4, 0.3);
  u.image = Image(4, 4, 0.3);
  for (double a : {0.0, 0.4, 1.0}) EXPECT_NEAR(composition_loss(AlphaMatte(4, 4, a), u), 3 * 16 * kEps, 1e-15);
}

TEST(DetailLoss, RegionHandling) {
  Rng rng(5);
  Sample s = random_sample(rng, 8, 8);
  LossConfig cfg;
  TriClassMap none(8, 8, TriClass::FG);
  const AlphaMatte pred = random_matte(rng, 8, 8);
  EXPECT_EQ(detail_loss(pred, s.alpha, none, cfg), 0.0);
  const double n_tr = static_cast<double>(s.label.count(TriClass::TR));
  EXPECT_NEAR(detail_loss(s.alpha, s.alpha, s.label, cfg), n_tr * kEps, 1e-15);
  cfg.detail_region = DetailRegion::ALL;
  EXPECT_NEAR(detail_loss(pred, s.alpha, s.label, cfg), alpha_loss(pred, s.alpha) + grad_loss(pred, s.alpha), 1e-12);
}

TEST(FusionLoss, PerfectPredictionIsFourNEps) {
  Rng rng(6);
  const Sample s = random_sample(rng, 7, 9);
  EXPECT_NEAR(fusion_loss(s.alpha, s, LossConfig{}), 4 * 63 * kEps, 1e-14);
  EXPECT_GE(fusion_loss(random_matte(rng, 7, 9), s, LossConfig{}), 4 * 63 * kEps);
}

TEST(FusionLoss, MatchesNaivePerPixelLoop) {
  Rng rng(7);
  for (int t = 0; t < 10; ++t) {
    const Sample s = random_sample(rng, 8, 8);
    const AlphaMatte p = random_matte(rng, 8, 8);
    double oracle = 0;
    for (int y = 0; y < 8; ++y)
      for (int x = 0; x < 8; ++x) {
        const int i = y * 8 + x;
        const double d = p.data[i] - s.alpha.data[i];
        oracle += std::sqrt(d * d + kEps * kEps);
        oracle += std::abs(naive_sobel_mag(p.data, 8, 8, y, x, kEps) - naive_sobel_mag(s.alpha.data, 8, 8, y, x, kEps));
        for (int c = 0; c < 3; ++c) {
          const double ip = p.data[i] * s.fg.at(c, y, x) + (1 - p.data[i]) * s.bg.at(c, y, x);
          const double e = ip - s.image.at(c, y, x);
          oracle += std::sqrt(e * e + kEps * kEps);
        }
      }
    EXPECT_NEAR(fusion_loss(p, s, LossConfig{}), oracle, 1e-11);
  }
}

TEST(TotalLoss, WeightingAndLinearity) {
  Rng rng(8);
  const Sample s = random_sample(rng, 8, 8);
  const auto probs = random_probs(rng, 64);
  const AlphaMatte det = random_matte(rng, 8, 8), alp = random_matte(rng, 8, 8);
  LossConfig cfg;
  const LossBreakdown b = total_loss<double>(probs, det.data, alp.data, s, cfg);
  EXPECT_NEAR(b.total, b.semantic + b.detail + b.fusion, 1e-12);
  EXPECT_NEAR(b.semantic, semantic_loss(probs, s.label), 1e-12);
  EXPECT_NEAR(b.detail, detail_loss(det, s.alpha, s.label, cfg), 1e-12);
  EXPECT_NEAR(b.fusion, fusion_loss(alp, s, cfg), 1e-12);

  LossConfig only_f = cfg;
  only_f.lambda1 = only_f.lambda2 = 0;
  EXPECT_NEAR(total_loss<double>(probs, det.data, alp.data, s, only_f).total, b.fusion, 1e-12);

  LossConfig dbl = cfg;
  dbl.lambda1 = dbl.lambda2 = dbl.lambda3 = 2;
  EXPECT_NEAR(total_loss<double>(probs, det.data, alp.data, s, dbl).total, 2 * b.total, 1e-11);

  LossConfig lin = cfg;
  lin.lambda1 = 0.3;
  lin.lambda2 = 1.7;
  lin.lambda3 = 0.6;
  EXPECT_NEAR(total_loss<double>(probs, det.data, alp.data, s, lin).total,
              0.3 * b.semantic + 1.7 * b.detail + 0.6 * b.fusion, 1e-11);
}

TEST(TotalLoss, NormalizeDividesEveryTermByPixelCount) {
  Rng rng(9);
  const Sample s = random_sample(rng, 8, 8);
  const auto probs = random_probs(rng, 64);
  const AlphaMatte det = random_matte(rng, 8, 8), alp = random_matte(rng, 8, 8);
  LossConfig sum_cfg, mean_cfg;
  mean_cfg.normalize = true;
  const auto a = total_loss<double>(probs, det.data, alp.data, s, sum_cfg);
  const auto b = total_loss<double>(probs, det.data, alp.data, s, mean_cfg);
  EXPECT_NEAR(b.semantic * 64, a.semantic, 1e-10);
  EXPECT_NEAR(b.detail * 64, a.detail, 1e-10);
  EXPECT_NEAR(b.fusion * 64, a.fusion, 1e-10);
}

TEST(LossConfig, Validation) {
  LossConfig c;
  c.epsilon = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = LossConfig{};
  c.lambda2 = -1;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

// Analytic gradients with respect to predictions against central
// differences, h = 1e-4 in 64-bit, on random 8x8 inputs.
TEST(LossGradients, MatchFiniteDifferences) {
  Rng rng(10);
  for (int t = 0; t < 5; ++t) {
    const Sample s = random_sample(rng, 8, 8);
    const auto mask = s.label.mask(TriClass::TR);
    const auto x0 = random_matte(rng, 8, 8).data;

    auto alpha_f = [&](const std::vector<double>& x, std::vector<double>* g) {
      return alpha_loss<double>(x, s.alpha.data, mask, kEps, g ? std::span<double>(*g) : std::span<double>{});
    };
    EXPECT_LT(gradcheck::check_scalar_function(x0, alpha_f).max_rel, 1e-4);

    auto grad_f = [&](const std::vector<double>& x, std::vector<double>* g) {
      return grad_loss<double>(x, s.alpha.data, 8, 8, {}, kEps, g ? std::span<double>(*g) : std::span<double>{});
    };
    EXPECT_LT(gradcheck::check_scalar_function(x0, grad_f).max_rel, 1e-4);

    auto comp_f = [&](const std::vector<double>& x, std::vector<double>* g) {
      return composition_loss<double>(x, s.fg.data, s.bg.data, s.image.data, kEps,
                                      g ? std::span<double>(*g) : std::span<double>{});
    };
    EXPECT_LT(gradcheck::check_scalar_function(x0, comp_f).max_rel, 1e-4);

    const auto p0 = random_probs(rng, 64);
    auto sem_f = [&](const std::vector<double>& x, std::vector<double>* g) {
      return semantic_loss<double>(x, s.label.labels, false, g ? std::span<double>(*g) : std::span<double>{});
    };
    EXPECT_LT(gradcheck::check_scalar_function(p0, sem_f).max_rel, 1e-4);
  }
}
