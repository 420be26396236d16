#include <gtest/gtest.h>

#include "gradcheck.hpp"
#include "ppmatte/autograd.hpp"

using namespace ppmatte;
using gradcheck::check_op;
using gradcheck::random_tensor;

namespace {

constexpr double kTol = 1e-6;

// Direct convolution with zero padding.
Tensor<double> naive_conv(const Tensor<double>& x, const Tensor<double>& w, const Tensor<double>* b, int stride, int pad) {
  const int k = w.h();
  const int oh = (x.h() + 2 * pad - k) / stride + 1, ow = (x.w() + 2 * pad - k) / stride + 1;
  Tensor<double> y(x.n(), w.n(), oh, ow);
  for (int n = 0; n < x.n(); ++n)
    for (int co = 0; co < w.n(); ++co)
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox) {
          double acc = b ? (*b)[co] : 0.0;
          for (int ci = 0; ci < x.c(); ++ci)
            for (int ky = 0; ky < k; ++ky)
              for (int kx = 0; kx < k; ++kx) {
                const int iy = oy * stride - pad + ky, ix = ox * stride - pad + kx;
                if (iy < 0 || iy >= x.h() || ix < 0 || ix >= x.w()) continue;
                acc += w.at(co, ci, ky, kx) * x.at(n, ci, iy, ix);
              }
          y.at(n, co, oy, ox) = acc;
        }
  return y;
}

}  // namespace

TEST(Conv2d, MatchesDirectConvolution) {
  Rng rng(1);
  struct Case {
    int cin, cout, k, stride, pad, h, w;
  };
  for (const Case c : {Case{3, 4, 3, 1, 1, 7, 6}, Case{2, 5, 3, 2, 1, 8, 9}, Case{4, 3, 1, 1, 0, 5, 5}, Case{3, 2, 1, 2, 0, 6, 6}}) {
    const auto x = random_tensor(rng, 2, c.cin, c.h, c.w);
    const auto w = random_tensor(rng, c.cout, c.cin, c.k, c.k);
    const auto b = random_tensor(rng, 1, c.cout, 1, 1);
    Graph<double> g;
    Var y = ops::conv2d(g, g.input(x), g.input(w), g.input(b), c.stride, c.pad);
    const auto want = naive_conv(x, w, &b, c.stride, c.pad);
    ASSERT_EQ(g.value(y).shape(), want.shape());
    for (std::size_t i = 0; i < want.size(); ++i) ASSERT_NEAR(g.value(y)[i], want[i], 1e-12);
  }
}

TEST(Conv2d, GradientCheck) {
  Rng rng(2);
  for (int stride : {1, 2}) {
    const auto r = check_op({random_tensor(rng, 2, 2, 6, 5), random_tensor(rng, 3, 2, 3, 3), random_tensor(rng, 1, 3, 1, 1)},
                            [stride](Graph<double>& g, const std::vector<Var>& v) {
                              return ops::conv2d(g, v[0], v[1], v[2], stride, 1);
                            },
                            10 + stride);
    EXPECT_LT(r.max_rel, kTol) << "stride " << stride;
  }
  const auto r1 = check_op({random_tensor(rng, 2, 3, 4, 4), random_tensor(rng, 2, 3, 1, 1)},
                           [](Graph<double>& g, const std::vector<Var>& v) { return ops::conv2d(g, v[0], v[1], 1, 0); }, 5);
  EXPECT_LT(r1.max_rel, kTol);
}

TEST(BatchNorm, TrainingNormalizesPerChannel) {
  Rng rng(3);
  const auto x = random_tensor(rng, 3, 2, 4, 4, 2.0, 5.0);
  Buffer<double> rm{"m", Tensor<double>(1, 2, 1, 1, 0.0)}, rv{"v", Tensor<double>(1, 2, 1, 1, 1.0)};
  Graph<double> g(true);
  Var y = ops::batch_norm(g, g.input(x), g.input(Tensor<double>(1, 2, 1, 1, 1.0)), g.input(Tensor<double>(1, 2, 1, 1, 0.0)), rm, rv);
  for (int c = 0; c < 2; ++c) {
    double mean = 0, bmean = 0, var = 0;
    const std::size_t m = 3 * 16;
    for (int n = 0; n < 3; ++n)
      for (int i = 0; i < 16; ++i) {
        mean += g.value(y).plane(n, c)[i] / m;
        bmean += x.plane(n, c)[i] / m;
      }
    for (int n = 0; n < 3; ++n)
      for (int i = 0; i < 16; ++i) var += std::pow(x.plane(n, c)[i] - bmean, 2) / m;
    EXPECT_NEAR(mean, 0.0, 1e-12);
    // running = 0.9 running + 0.1 batch
    EXPECT_NEAR(rm.value[c], 0.1 * bmean, 1e-12);
    EXPECT_NEAR(rv.value[c], 0.9 + 0.1 * var, 1e-12);
  }
}

TEST(BatchNorm, EvalUsesRunningStatistics) {
  Buffer<double> rm{"m", Tensor<double>(1, 1, 1, 1, 2.0)}, rv{"v", Tensor<double>(1, 1, 1, 1, 4.0)};
  Graph<double> g(false);
  Var y = ops::batch_norm(g, g.input(Tensor<double>(1, 1, 1, 2, 6.0)), g.input(Tensor<double>(1, 1, 1, 1, 3.0)),
                          g.input(Tensor<double>(1, 1, 1, 1, 1.0)), rm, rv);
  EXPECT_NEAR(g.value(y)[0], 3.0 * (6.0 - 2.0) / std::sqrt(4.0 + 1e-5) + 1.0, 1e-12);
  EXPECT_EQ(rm.value[0], 2.0);
}

TEST(BatchNorm, GradientCheck) {
  Rng rng(4);
  const auto r = check_op({random_tensor(rng, 3, 2, 3, 3), random_tensor(rng, 1, 2, 1, 1, 0.5, 1.5), random_tensor(rng, 1, 2, 1, 1)},
                          [](Graph<double>& g, const std::vector<Var>& v) {
                            Buffer<double> rm{"m", Tensor<double>(1, 2, 1, 1)}, rv{"v", Tensor<double>(1, 2, 1, 1, 1.0)};
                            return ops::batch_norm(g, v[0], v[1], v[2], rm, rv);
                          },
                          6);
  EXPECT_LT(r.max_rel, 1e-5);
}

TEST(Activations, GradientCheck) {
  Rng rng(5);
  const auto r1 = check_op({random_tensor(rng, 2, 3, 4, 4, -3, 3)},
                           [](Graph<double>& g, const std::vector<Var>& v) { return ops::sigmoid(g, v[0]); }, 7);
  EXPECT_LT(r1.max_rel, kTol);
  const auto r2 = check_op({random_tensor(rng, 2, 3, 4, 4, -3, 3)},
                           [](Graph<double>& g, const std::vector<Var>& v) { return ops::softmax_channels(g, v[0]); }, 8);
  EXPECT_LT(r2.max_rel, kTol);
  const auto r3 = check_op({random_tensor(rng, 2, 3, 4, 4, -3, 3)},
                           [](Graph<double>& g, const std::vector<Var>& v) { return ops::relu(g, v[0]); }, 9);
  EXPECT_LT(r3.max_rel, kTol);
}

TEST(Softmax, SumsToOneAndIsStable) {
  Tensor<double> x(1, 3, 1, 2);
  x.at(0, 0, 0, 0) = 1000;
  x.at(0, 1, 0, 0) = 999;
  x.at(0, 2, 0, 0) = -1000;
  Graph<double> g;
  Var p = ops::softmax_channels(g, g.input(x));
  for (int i = 0; i < 2; ++i) {
    double s = 0;
    for (int c = 0; c < 3; ++c) s += g.value(p).at(0, c, 0, i);
    EXPECT_NEAR(s, 1.0, 1e-15);
  }
  EXPECT_NEAR(g.value(p).at(0, 0, 0, 0), 1 / (1 + std::exp(-1.0)), 1e-12);
}

TEST(ResizeBilinear, ConstantPreservedAndGradientCheck) {
  Graph<double> g;
  Var y = ops::resize_bilinear(g, g.input(Tensor<double>(1, 2, 3, 5, 0.7)), 7, 4);
  for (double v : g.value(y).vec()) EXPECT_NEAR(v, 0.7, 1e-15);
  Rng rng(6);
  for (auto [oh, ow] : {std::pair{8, 10}, std::pair{2, 3}, std::pair{5, 5}}) {
    const auto r = check_op({random_tensor(rng, 2, 2, 4, 5)},
                            [oh, ow](Graph<double>& gg, const std::vector<Var>& v) { return ops::resize_bilinear(gg, v[0], oh, ow); },
                            11);
    EXPECT_LT(r.max_rel, kTol);
  }
}

TEST(ResizeBilinear, DoublingMatchesHalfPixelFormula) {
  // 1-D row [0, 1] doubled: sample points 0.25 px inside each source pixel.
  Tensor<double> x(1, 1, 1, 2);
  x[1] = 1.0;
  Graph<double> g;
  Var y = ops::resize_bilinear(g, g.input(x), 1, 4);
  const std::vector<double> want{0.0, 0.25, 0.75, 1.0};
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(g.value(y)[i], want[i], 1e-15);
}

TEST(AdaptivePool, AveragesAndGradientCheck) {
  Tensor<double> x(1, 1, 4, 4);
  for (int i = 0; i < 16; ++i) x[i] = i;
  Graph<double> g;
  Var p1 = ops::adaptive_avg_pool(g, g.input(x), 1);
  EXPECT_NEAR(g.value(p1)[0], 7.5, 1e-12);
  Var p2 = ops::adaptive_avg_pool(g, g.input(x), 2);
  EXPECT_NEAR(g.value(p2)[0], (0 + 1 + 4 + 5) / 4.0, 1e-12);
  Rng rng(7);
  for (int bins : {1, 2, 3, 6}) {
    const auto r = check_op({random_tensor(rng, 2, 2, 4, 5)},
                            [bins](Graph<double>& gg, const std::vector<Var>& v) { return ops::adaptive_avg_pool(gg, v[0], bins); },
                            12);
    EXPECT_LT(r.max_rel, kTol) << bins;
  }
}

TEST(Structural, ConcatAddGatedGradientCheck) {
  Rng rng(8);
  const auto r1 = check_op({random_tensor(rng, 2, 2, 3, 3), random_tensor(rng, 2, 3, 3, 3)},
                           [](Graph<double>& g, const std::vector<Var>& v) { return ops::concat_channels(g, {v[0], v[1]}); }, 13);
  EXPECT_LT(r1.max_rel, kTol);
  const auto r2 = check_op({random_tensor(rng, 2, 2, 3, 3), random_tensor(rng, 2, 2, 3, 3)},
                           [](Graph<double>& g, const std::vector<Var>& v) { return ops::add(g, v[0], v[1]); }, 14);
  EXPECT_LT(r2.max_rel, kTol);
  const auto r3 = check_op({random_tensor(rng, 2, 4, 3, 3), random_tensor(rng, 2, 1, 3, 3, 0, 1)},
                           [](Graph<double>& g, const std::vector<Var>& v) { return ops::gated_residual(g, v[0], v[1]); }, 15);
  EXPECT_LT(r3.max_rel, kTol);
}

TEST(FuseReplace, SelectsByArgmaxAndRoutesGradientToDetail) {
  Tensor<double> probs(1, 3, 1, 4), detail(1, 1, 1, 4);
  // pixel 0: FG, 1: BG, 2: TR, 3: tie FG/TR -> FG
  const double p[4][3] = {{0.6, 0.3, 0.1}, {0.2, 0.7, 0.1}, {0.1, 0.2, 0.7}, {0.4, 0.2, 0.4}};
  for (int i = 0; i < 4; ++i) {
    for (int c = 0; c < 3; ++c) probs.at(0, c, 0, i) = p[i][c];
    detail[i] = 0.3 + 0.1 * i;
  }
  Graph<double> g(true);
  Var vp = g.input(probs, true), vd = g.input(detail, true);
  Var a = ops::fuse_replace(g, vp, vd);
  EXPECT_EQ(g.value(a)[0], 1.0);
  EXPECT_EQ(g.value(a)[1], 0.0);
  EXPECT_EQ(g.value(a)[2], detail[2]);
  EXPECT_EQ(g.value(a)[3], 1.0);
  g.backward(ops::external_scalar(g, a, 0.0, Tensor<double>(1, 1, 1, 4, 1.0)));
  EXPECT_EQ(g.grad(vd)[2], 1.0);
  EXPECT_EQ(g.grad(vd)[0], 0.0);
  EXPECT_FALSE(g.has_grad(vp) && g.grad(vp)[0] != 0.0);
}

TEST(Argmax, LowestIndexWinsTies) {
  EXPECT_EQ(ops::argmax3(0.5, 0.5, 0.0), 0);
  EXPECT_EQ(ops::argmax3(0.2, 0.4, 0.4), 1);
  EXPECT_EQ(ops::argmax3(1.0 / 3, 1.0 / 3, 1.0 / 3), 0);
  EXPECT_EQ(ops::argmax3(0.1, 0.2, 0.7), 2);
}

TEST(Graph, ParameterGradientsAccumulate) {
  Parameter<double> p;
  p.name = "p";
  p.value = Tensor<double>(1, 1, 1, 2, 1.0);
  p.grad = Tensor<double>(1, 1, 1, 2);
  for (int rep = 0; rep < 2; ++rep) {
    Graph<double> g(true);
    Var v = g.param(p);
    g.backward(ops::external_scalar(g, v, 0.0, Tensor<double>(1, 1, 1, 2, 0.5)));
  }
  EXPECT_EQ(p.grad[0], 1.0);
  p.zero_grad();
  EXPECT_EQ(p.grad[1], 0.0);
}
