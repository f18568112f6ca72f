#include <gtest/gtest.h>

#include <cmath>

#include "avpred/core/autodiff.hpp"
#include "test_helpers.hpp"

using namespace avpred;
using ad::Tape;
using ad::Tensor;
using avpred::testing::probe;
using avpred::testing::random_tensor;

namespace {

constexpr int kSeeds = 20;

Tensor T2(std::size_t r, std::size_t c, std::vector<double> v) { return Tensor({r, c}, std::move(v)); }

}  // namespace

// --- matmul -----------------------------------------------------------------

TEST(Matmul, IdentityAndHandSum) {
  Tape tape(false);
  auto y = ad::matmul(tape, T2(2, 2, {1, 0, 0, 1}), T2(2, 2, {1, 2, 3, 4}));
  EXPECT_EQ(y.vec(), (std::vector<double>{1, 2, 3, 4}));
  auto z = ad::matmul(tape, T2(1, 2, {1, 2}), T2(2, 1, {3, 4}));
  EXPECT_EQ(z.vec(), std::vector<double>{11});
}

TEST(Matmul, ShapeMismatchNamesBothShapes) {
  Tape tape(false);
  try {
    ad::matmul(tape, Tensor::zeros({3, 4}), Tensor::zeros({3, 2}));
    FAIL();
  } catch (const DimensionError& e) {
    EXPECT_NE(std::string(e.what()).find("[3x4]"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("[3x2]"), std::string::npos);
  }
}

TEST(Matmul, GradientCheck) {
  for (int s = 0; s < kSeeds; ++s) {
    auto a = random_tensor({3, 4}, 100 + s), b = random_tensor({4, 2}, 200 + s);
    auto rep = ad::gradient_check_leaves(
        [&](Tape& t) { return probe(t, ad::matmul(t, a, b), s); }, {{"a", a}, {"b", b}});
    EXPECT_LT(rep.max_rel_error, 1e-6) << rep.worst;
  }
}

TEST(Matmul, BatchedGradientCheck) {
  auto a = random_tensor({2, 3, 4}, 1), b = random_tensor({2, 4, 5}, 2), c = random_tensor({4, 5}, 3);
  auto rep = ad::gradient_check_leaves(
      [&](Tape& t) { return ad::add(t, probe(t, ad::matmul(t, a, b), 1), probe(t, ad::matmul(t, a, c), 2)); },
      {{"a", a}, {"b", b}, {"c", c}});
  EXPECT_LT(rep.max_rel_error, 1e-6) << rep.worst;
}

// --- softmax ----------------------------------------------------------------

TEST(Softmax, SymmetryAndStability) {
  Tape tape(false);
  auto y = ad::softmax(tape, Tensor({3}, {0, 0, 0}), 0);
  for (double v : y.data()) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
  auto z = ad::softmax(tape, Tensor({2}, {1000, 0}), 0);
  EXPECT_NEAR(z[0], 1.0, 1e-12);
  EXPECT_NEAR(z[1], 0.0, 1e-12);
}

TEST(Softmax, MatchesExtendedPrecisionOracle) {
  Tape tape(false);
  auto y = ad::softmax(tape, Tensor({3}, {1, 2, 3}), 0);
  long double z = std::exp(1.0L) + std::exp(2.0L) + std::exp(3.0L);
  const long double expect[3] = {std::exp(1.0L) / z, std::exp(2.0L) / z, std::exp(3.0L) / z};
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(y[i], static_cast<double>(expect[i]), 1e-15);
}

TEST(Softmax, RowsSumToOneAndShiftInvariant) {
  for (int s = 0; s < kSeeds; ++s) {
    Tape tape(false);
    auto x = random_tensor({4, 7}, 300 + s, -5, 5);
    auto y = ad::softmax(tape, x, 1);
    auto y2 = ad::softmax(tape, ad::add_scalar(tape, x, 3.25), 1);
    for (std::size_t r = 0; r < 4; ++r) {
      double sum = 0;
      for (std::size_t c = 0; c < 7; ++c) {
        EXPECT_GE(y[r * 7 + c], 0.0);
        sum += y[r * 7 + c];
      }
      EXPECT_NEAR(sum, 1.0, 1e-12);
    }
    avpred::testing::expect_near_all(y, y2, 1e-12);
  }
}

TEST(Softmax, GradientCheckAnyAxis) {
  for (int s = 0; s < kSeeds; ++s) {
    auto x = random_tensor({2, 3, 4}, 400 + s, -2, 2);
    for (long axis : {0L, 1L, 2L}) {
      double err = ad::gradient_check([&](Tape& t, const Tensor& v) { return probe(t, ad::softmax(t, v, axis), s); }, x);
      EXPECT_LT(err, 1e-6);
    }
  }
}

TEST(Softmax, ComposedWithMatmul) {
  auto a = random_tensor({3, 4}, 7), b = random_tensor({4, 5}, 8);
  auto rep = ad::gradient_check_leaves(
      [&](Tape& t) { return probe(t, ad::softmax(t, ad::matmul(t, a, b), 1), 9); }, {{"a", a}, {"b", b}});
  EXPECT_LT(rep.max_rel_error, 1e-6);
}

// --- conv2d / deconv2d --------------------------------------------------------

TEST(Conv2d, IdentityKernelIsIdentityBitwise) {
  Tape tape(false);
  auto x = random_tensor({1, 1, 3, 3}, 11);
  auto y = ad::conv2d(tape, x, Tensor({1, 1, 1, 1}, {1.0}), Tensor());
  avpred::testing::expect_bitwise_equal(x, y);
}

TEST(Conv2d, CountingWindow) {
  Tape tape(false);
  auto y = ad::conv2d(tape, Tensor::ones({1, 1, 3, 3}), Tensor::ones({1, 1, 2, 2}), Tensor());
  EXPECT_EQ(y.shape(), (ad::Shape{1, 1, 2, 2}));
  for (double v : y.data()) EXPECT_EQ(v, 4.0);
}

TEST(Conv2d, OutputShapeArithmetic) {
  Tape tape(false);
  auto y = ad::conv2d(tape, Tensor::zeros({2, 3, 9, 8}), Tensor::zeros({4, 3, 4, 4}), Tensor::zeros({4}),
                      ad::Conv2dOptions::uniform(2, 1));
  EXPECT_EQ(y.shape(), (ad::Shape{2, 4, 4, 4}));
}

TEST(Conv2d, KernelLargerThanPaddedInputThrows) {
  Tape tape(false);
  EXPECT_THROW(ad::conv2d(tape, Tensor::zeros({1, 1, 2, 2}), Tensor::zeros({1, 1, 5, 5}), Tensor()),
               DimensionError);
}

TEST(Conv2d, GradientCheck) {
  for (int s = 0; s < kSeeds; ++s) {
    auto x = random_tensor({2, 3, 8, 8}, 500 + s), w = random_tensor({4, 3, 4, 4}, 600 + s),
         b = random_tensor({4}, 700 + s);
    auto rep = ad::gradient_check_leaves(
        [&](Tape& t) { return probe(t, ad::conv2d(t, x, w, b, ad::Conv2dOptions::uniform(2, 1)), s); },
        {{"x", x}, {"w", w}, {"b", b}});
    EXPECT_LT(rep.max_rel_error, 1e-5) << rep.worst;
  }
}

TEST(Conv2d, AsymmetricStrideAndPadGradient) {
  auto x = random_tensor({1, 2, 8, 6}, 1), w = random_tensor({3, 2, 4, 4}, 2), b = random_tensor({3}, 3);
  ad::Conv2dOptions opt{2, 2, 1, 2};
  auto rep = ad::gradient_check_leaves([&](Tape& t) { return probe(t, ad::conv2d(t, x, w, b, opt), 4); },
                                       {{"x", x}, {"w", w}, {"b", b}});
  EXPECT_LT(rep.max_rel_error, 1e-5) << rep.worst;
}

TEST(Deconv2d, BroadcastCase) {
  Tape tape(false);
  auto y = ad::deconv2d(tape, Tensor({1, 1, 1, 1}, {2.5}), Tensor::ones({1, 1, 2, 2}), Tensor(),
                        ad::Conv2dOptions::uniform(2, 0));
  EXPECT_EQ(y.shape(), (ad::Shape{1, 1, 2, 2}));
  for (double v : y.data()) EXPECT_EQ(v, 2.5);
}

TEST(Deconv2d, EqualsConvInputGradient) {
  // Oracle: deconv(x, w) is the input-gradient of conv(z, w) contracted with x.
  const auto opt = ad::Conv2dOptions::uniform(2, 1);
  for (int s = 0; s < 5; ++s) {
    auto x = random_tensor({2, 3, 4, 4}, 800 + s), w = random_tensor({3, 2, 4, 4}, 900 + s);
    Tape quiet(false);
    auto y = ad::deconv2d(quiet, x, w, Tensor(), opt);
    auto z = Tensor::zeros(y.shape(), true);
    Tape tape;
    auto c = ad::conv2d(tape, z, w, Tensor(), opt);
    ad::backward(ad::sum(tape, ad::mul(tape, c, x)), tape);
    for (std::size_t i = 0; i < y.numel(); ++i) EXPECT_NEAR(y[i], z.grad()[i], 1e-12);
  }
}

TEST(Deconv2d, MatchesNaiveScatterLoop) {
  auto x = random_tensor({1, 2, 3, 3}, 5), w = random_tensor({2, 3, 4, 4}, 6), b = random_tensor({3}, 7);
  const std::size_t s = 2, p = 1, k = 4, H = 3, Ho = (H - 1) * s + k - 2 * p;
  std::vector<double> ref(3 * Ho * Ho, 0.0);
  for (std::size_t co = 0; co < 3; ++co)
    for (std::size_t i = 0; i < Ho * Ho; ++i) ref[co * Ho * Ho + i] = b[co];
  for (std::size_t ci = 0; ci < 2; ++ci)
    for (std::size_t iy = 0; iy < H; ++iy)
      for (std::size_t ix = 0; ix < H; ++ix)
        for (std::size_t co = 0; co < 3; ++co)
          for (std::size_t ky = 0; ky < k; ++ky)
            for (std::size_t kx = 0; kx < k; ++kx) {
              const long oy = static_cast<long>(iy * s + ky) - static_cast<long>(p);
              const long ox = static_cast<long>(ix * s + kx) - static_cast<long>(p);
              if (oy < 0 || ox < 0 || oy >= static_cast<long>(Ho) || ox >= static_cast<long>(Ho)) continue;
              ref[co * Ho * Ho + oy * Ho + ox] +=
                  x[(ci * H + iy) * H + ix] * w[((ci * 3 + co) * k + ky) * k + kx];
            }
  Tape tape(false);
  auto y = ad::deconv2d(tape, x, w, b, ad::Conv2dOptions::uniform(s, p));
  ASSERT_EQ(y.shape(), (ad::Shape{1, 3, Ho, Ho}));
  for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(y[i], ref[i], 1e-12);
}

TEST(Deconv2d, GradientCheck) {
  for (int s = 0; s < kSeeds; ++s) {
    auto x = random_tensor({1, 2, 3, 3}, 1000 + s), w = random_tensor({2, 3, 4, 4}, 1100 + s),
         b = random_tensor({3}, 1200 + s);
    auto rep = ad::gradient_check_leaves(
        [&](Tape& t) { return probe(t, ad::deconv2d(t, x, w, b, ad::Conv2dOptions::uniform(2, 1)), s); },
        {{"x", x}, {"w", w}, {"b", b}});
    EXPECT_LT(rep.max_rel_error, 1e-5) << rep.worst;
  }
}

// --- linear -------------------------------------------------------------------

TEST(Linear, IdentityAndHandSum) {
  Tape tape(false);
  auto x = random_tensor({3, 2}, 1);
  auto y = ad::linear(tape, x, T2(2, 2, {1, 0, 0, 1}), Tensor({2}, {0, 0}));
  avpred::testing::expect_bitwise_equal(x, y);
  auto z = ad::linear(tape, T2(1, 2, {1, 1}), T2(1, 2, {2, 3}), Tensor({1}, {1}));
  EXPECT_EQ(z.vec(), std::vector<double>{6});
  EXPECT_THROW(ad::linear(tape, T2(1, 3, {1, 1, 1}), T2(1, 2, {2, 3}), Tensor()), DimensionError);
}

TEST(Linear, GradientCheck) {
  for (int s = 0; s < kSeeds; ++s) {
    auto x = random_tensor({2, 3, 5}, 1300 + s), w = random_tensor({4, 5}, 1400 + s), b = random_tensor({4}, 1500 + s);
    auto rep = ad::gradient_check_leaves([&](Tape& t) { return probe(t, ad::linear(t, x, w, b), s); },
                                         {{"x", x}, {"w", w}, {"b", b}});
    EXPECT_LT(rep.max_rel_error, 1e-6) << rep.worst;
  }
}

// --- batch norm -----------------------------------------------------------------

TEST(BatchNorm, ConstantChannelNormalizesToZero) {
  Tape tape(false);
  auto y = ad::batch_norm(tape, Tensor::full({2, 1, 2, 2}, 3.0), Tensor({1}, {1}), Tensor({1}, {0}),
                          Tensor::zeros({1}), Tensor::ones({1}), ad::NormMode::Training);
  for (double v : y.data()) EXPECT_EQ(v, 0.0);
}

TEST(BatchNorm, AlreadyNormalizedChannel) {
  Tape tape(false);
  auto y = ad::batch_norm(tape, Tensor({2, 1}, {-1, 1}), Tensor({1}, {1}), Tensor({1}, {0}), Tensor::zeros({1}),
                          Tensor::ones({1}), ad::NormMode::Training);
  EXPECT_NEAR(y[0], -1.0, 1e-5);
  EXPECT_NEAR(y[1], 1.0, 1e-5);
}

TEST(BatchNorm, SingleElementChannelInTrainingIsDegenerate) {
  Tape tape(false);
  EXPECT_THROW(ad::batch_norm(tape, Tensor({1, 2, 1, 1}, {1, 2}), Tensor::ones({2}), Tensor::zeros({2}),
                              Tensor::zeros({2}), Tensor::ones({2}), ad::NormMode::Training),
               DimensionError);
  EXPECT_NO_THROW(ad::batch_norm(tape, Tensor({1, 2, 1, 1}, {1, 2}), Tensor::ones({2}), Tensor::zeros({2}),
                                 Tensor::zeros({2}), Tensor::ones({2}), ad::NormMode::Inference));
}

TEST(BatchNorm, RunningStatisticsUseMomentum) {
  Tape tape(false);
  auto rm = Tensor::zeros({1}), rv = Tensor::ones({1});
  ad::batch_norm(tape, Tensor({4, 1}, {1, 2, 3, 4}), Tensor::ones({1}), Tensor::zeros({1}), rm, rv,
                 ad::NormMode::Training);
  EXPECT_NEAR(rm[0], 0.1 * 2.5, 1e-15);
  EXPECT_NEAR(rv[0], 0.9 + 0.1 * (5.0 / 3.0), 1e-15);  // unbiased batch variance
  auto y = ad::batch_norm(tape, Tensor({1, 1}, {rm[0]}), Tensor::ones({1}), Tensor::zeros({1}), rm, rv,
                          ad::NormMode::Inference);
  EXPECT_EQ(y[0], 0.0);
}

TEST(BatchNorm, GradientCheckTrainingMode) {
  for (int s = 0; s < kSeeds; ++s) {
    auto x = random_tensor({3, 2, 2, 3}, 1600 + s, -2, 2), g = random_tensor({2}, 1700 + s, 0.5, 1.5),
         b = random_tensor({2}, 1800 + s);
    auto rm = Tensor::zeros({2}), rv = Tensor::ones({2});
    auto rep = ad::gradient_check_leaves(
        [&](Tape& t) { return probe(t, ad::batch_norm(t, x, g, b, rm, rv, ad::NormMode::Training), s); },
        {{"x", x}, {"gamma", g}, {"beta", b}});
    EXPECT_LT(rep.max_rel_error, 1e-4) << rep.worst;
  }
}

// --- activations -------------------------------------------------------------------

TEST(Activation, ValuesAtKnownPoints) {
  Tape tape(false);
  auto r = ad::relu(tape, Tensor({3}, {-1, 0, 2}));
  EXPECT_EQ(r.vec(), (std::vector<double>{0, 0, 2}));
  EXPECT_EQ(ad::tanh(tape, Tensor::scalar(0)).item(), 0.0);
  EXPECT_EQ(ad::sigmoid(tape, Tensor::scalar(0)).item(), 0.5);
  EXPECT_DOUBLE_EQ(ad::leaky_relu(tape, Tensor::scalar(-2)).item(), -0.4);
}

TEST(Activation, GradientChecksAwayFromKinks) {
  for (int s = 0; s < kSeeds; ++s) {
    auto x = random_tensor({4, 5}, 1900 + s, -2, 2);
    auto data = x.data_mut();
    for (double& v : data) v += v >= 0 ? 0.05 : -0.05;  // keep off the kink at 0
    for (auto kind : {ad::Activation::Relu, ad::Activation::LeakyRelu, ad::Activation::Tanh, ad::Activation::Sigmoid}) {
      double err = ad::gradient_check([&](Tape& t, const Tensor& v) { return probe(t, ad::activation(t, v, kind), s); }, x);
      EXPECT_LT(err, 1e-6);
    }
  }
}

// --- pooling ---------------------------------------------------------------------------

TEST(MaxPool, ValueAndTieRule) {
  Tape tape;
  auto x = Tensor({1, 1, 2, 2}, {1, 2, 3, 4}, true);
  EXPECT_EQ(ad::max_pool2d(tape, x).vec(), std::vector<double>{4});

  Tape t2;
  auto c = Tensor::full({1, 1, 2, 2}, 7.0, true);
  auto y = ad::max_pool2d(t2, c);
  EXPECT_EQ(y.item(), 7.0);
  ad::backward(ad::sum(t2, y), t2);
  EXPECT_EQ(c.grad()[0], 1.0);
  EXPECT_EQ(c.grad()[1] + c.grad()[2] + c.grad()[3], 0.0);
}

TEST(MaxPool, OddDimensionsThrow) {
  Tape tape(false);
  EXPECT_THROW(ad::max_pool2d(tape, Tensor::zeros({1, 1, 3, 4})), DimensionError);
}

TEST(MaxPool, GradientCheck) {
  for (int s = 0; s < kSeeds; ++s) {
    auto x = random_tensor({1, 1, 4, 4}, 2000 + s);
    double err = ad::gradient_check([&](Tape& t, const Tensor& v) { return probe(t, ad::max_pool2d(t, v), s); }, x);
    EXPECT_LT(err, 1e-6);
  }
}

TEST(Upsample, GradientCheck) {
  auto x = random_tensor({2, 2, 3, 3}, 3);
  double err = ad::gradient_check([&](Tape& t, const Tensor& v) { return probe(t, ad::upsample2x(t, v), 1); }, x);
  EXPECT_LT(err, 1e-6);
  err = ad::gradient_check([&](Tape& t, const Tensor& v) { return probe(t, ad::global_avg_pool(t, v), 2); }, x);
  EXPECT_LT(err, 1e-6);
}

// --- concat / slice ----------------------------------------------------------------------

TEST(Concat, SingleInputAndOrdering) {
  Tape tape(false);
  auto a = random_tensor({2, 3}, 1);
  avpred::testing::expect_bitwise_equal(ad::concat(tape, {a}, 1), a);
  auto y = ad::concat(tape, {T2(2, 1, {1, 2}), T2(2, 2, {3, 4, 5, 6})}, 1);
  EXPECT_EQ(y.shape(), (ad::Shape{2, 3}));
  EXPECT_EQ(y.vec(), (std::vector<double>{1, 3, 4, 2, 5, 6}));
  EXPECT_THROW(ad::concat(tape, {T2(2, 1, {1, 2}), T2(3, 1, {1, 2, 3})}, 1), DimensionError);
}

TEST(Concat, SplitRoundTripsExactly) {
  Tape tape(false);
  for (long axis : {0L, 1L, 2L}) {
    auto x = random_tensor({4, 6, 2}, 10 + axis);
    auto parts = ad::split(tape, x, axis, 2);
    avpred::testing::expect_bitwise_equal(ad::concat(tape, parts, axis), x);
  }
}

TEST(Concat, GradientCheck) {
  for (int s = 0; s < kSeeds; ++s) {
    auto a = random_tensor({2, 1, 3}, 2100 + s), b = random_tensor({2, 2, 3}, 2200 + s);
    auto rep = ad::gradient_check_leaves([&](Tape& t) { return probe(t, ad::concat(t, {a, b}, 1), s); },
                                         {{"a", a}, {"b", b}});
    EXPECT_LT(rep.max_rel_error, 1e-6);
  }
}

TEST(ShapeOps, TransposeAndReshapeGradients) {
  auto x = random_tensor({2, 3, 4}, 9);
  double err = ad::gradient_check(
      [&](Tape& t, const Tensor& v) { return probe(t, ad::reshape(t, ad::transpose(t, v, 0, 2), {4, 6}), 3); }, x);
  EXPECT_LT(err, 1e-6);
  Tape tape(false);
  auto y = ad::transpose(tape, x, 1, 2);
  EXPECT_EQ(y.shape(), (ad::Shape{2, 4, 3}));
  EXPECT_EQ(y[1 * 12 + 3 * 3 + 2], x[1 * 12 + 2 * 4 + 3]);
}

// --- bilinear sampling -------------------------------------------------------------------------

TEST(BilinearSample, IdentityGridIsExact) {
  Tape tape(false);
  auto src = random_tensor({2, 3, 5, 6}, 42);
  auto y = ad::bilinear_sample(tape, src, ad::identity_grid(2, 5, 6));
  avpred::testing::expect_bitwise_equal(src, y);
}

TEST(BilinearSample, IntegerShiftWithBorderClamp) {
  Tape tape(false);
  const std::size_t H = 3, W = 4;
  std::vector<double> img(H * W);
  for (std::size_t i = 0; i < H; ++i)
    for (std::size_t j = 0; j < W; ++j) img[i * W + j] = 10.0 * static_cast<double>(j);  // distinct columns
  auto grid = ad::identity_grid(1, H, W);
  auto shift = Tensor::zeros({1, 2, H, W});
  for (std::size_t p = 0; p < H * W; ++p) shift.data_mut()[p] = 1.0;
  auto y = ad::bilinear_sample(tape, Tensor({1, 1, H, W}, img), ad::add(tape, grid, shift));
  for (std::size_t i = 0; i < H; ++i) {
    for (std::size_t j = 0; j + 1 < W; ++j) EXPECT_EQ(y[i * W + j], img[i * W + j + 1]);
    EXPECT_EQ(y[i * W + W - 1], img[i * W + W - 1]);  // border replicated
  }
}

TEST(BilinearSample, GradientCheckAtFractionalCoords) {
  for (int s = 0; s < kSeeds; ++s) {
    auto src = random_tensor({1, 2, 5, 5}, 2300 + s);
    auto coords = random_tensor({1, 2, 4, 4}, 2400 + s, 0.3, 3.7);
    for (double& v : coords.data_mut()) {
      const double f = v - std::floor(v);
      if (f < 0.05 || f > 0.95) v += 0.3;  // keep off integer cell boundaries
    }
    auto rep = ad::gradient_check_leaves([&](Tape& t) { return probe(t, ad::bilinear_sample(t, src, coords), s); },
                                         {{"src", src}, {"coords", coords}});
    EXPECT_LT(rep.max_rel_error, 1e-4) << rep.worst;
  }
}

// --- losses & backward ----------------------------------------------------------------------------

TEST(Mse, Values) {
  Tape tape(false);
  auto x = random_tensor({3, 3}, 1);
  EXPECT_EQ(ad::mse(tape, x, x).item(), 0.0);
  EXPECT_EQ(ad::mse(tape, Tensor({2}, {0, 0}), Tensor({2}, {1, 1})).item(), 1.0);
  EXPECT_THROW(ad::mse(tape, Tensor({2}, {0, 0}), Tensor({3}, {1, 1, 1})), DimensionError);
}

TEST(Mse, GradientIsTwiceDifferenceOverN) {
  auto a = random_tensor({2, 3}, 5), b = random_tensor({2, 3}, 6);
  a.set_requires_grad(true);
  Tape tape;
  ad::backward(ad::mse(tape, a, b), tape);
  for (std::size_t i = 0; i < 6; ++i) EXPECT_NEAR(a.grad()[i], 2.0 * (a[i] - b[i]) / 6.0, 1e-15);
  auto rep = ad::gradient_check_leaves([&](Tape& t) { return ad::mse(t, a, b); }, {{"a", a}, {"b", b}});
  EXPECT_LT(rep.max_rel_error, 1e-6);
}

TEST(Backward, SumGivesOnes) {
  auto x = Tensor::zeros({2, 2}, true);
  Tape tape;
  ad::backward(ad::sum(tape, x), tape);
  for (double g : x.grad()) EXPECT_EQ(g, 1.0);
}

TEST(Backward, ScalarChainRule) {
  auto w = Tensor::scalar(1.5, true);
  const double x = 2.0, y = 1.0;
  Tape tape;
  ad::backward(ad::mse(tape, ad::scale(tape, w, x), Tensor::scalar(y)), tape);
  EXPECT_DOUBLE_EQ(w.grad()[0], 2.0 * x * (1.5 * x - y));
}

TEST(Backward, UnreachableLeafHasZeroGrad) {
  auto used = Tensor::scalar(1.0, true), unused = Tensor::scalar(2.0, true);
  Tape tape;
  ad::backward(ad::square(tape, used), tape);
  EXPECT_EQ(unused.grad()[0], 0.0);
}

TEST(Backward, ErrorsOnNonScalarOrSecondCall) {
  auto x = Tensor::zeros({2}, true);
  Tape tape;
  auto y = ad::scale(tape, x, 2.0);
  EXPECT_THROW(ad::backward(y, tape), TapeError);
  auto s = ad::sum(tape, y);
  ad::backward(s, tape);
  EXPECT_THROW(ad::backward(s, tape), TapeError);
}

TEST(GradientCheck, SumOfSquaresIsTight) {
  auto x = random_tensor({5}, 3);
  double err = ad::gradient_check([](Tape& t, const Tensor& v) { return ad::sum(t, ad::square(t, v)); }, x);
  EXPECT_LT(err, 1e-9);
}

TEST(GradientCheck, NonScalarFunctionRejected) {
  auto x = random_tensor({5}, 3);
  EXPECT_THROW(ad::gradient_check([](Tape& t, const Tensor& v) { return ad::square(t, v); }, x), TapeError);
}

TEST(Finiteness, NonFiniteForwardIsAnError) {
  Tape tape(false);
  EXPECT_THROW(ad::exp(tape, Tensor::scalar(1000.0)), NumericError);
}

TEST(Determinism, IdenticalInputsBitIdenticalOutputs) {
  auto run = [] {
    Tape tape(false);
    auto x = random_tensor({2, 3, 8, 8}, 77), w = random_tensor({4, 3, 4, 4}, 78);
    auto y = ad::conv2d(tape, x, w, Tensor(), ad::Conv2dOptions::uniform(2, 1));
    return ad::softmax(tape, ad::reshape(tape, y, {2, 64}), 1);
  };
  avpred::testing::expect_bitwise_equal(run(), run());
}

TEST(SpatialDiff, ForwardDifferenceWithReplicateEdge) {
  Tape tape(false);
  auto x = Tensor({1, 1, 2, 3}, {1, 4, 9, 2, 2, 2});
  EXPECT_EQ(ad::diff_x(tape, x).vec(), (std::vector<double>{3, 5, 0, 0, 0, 0}));
  EXPECT_EQ(ad::diff_y(tape, x).vec(), (std::vector<double>{1, -2, -7, 0, 0, 0}));
  auto r = random_tensor({1, 2, 3, 4}, 8);
  double err = ad::gradient_check(
      [](Tape& t, const Tensor& v) { return ad::add(t, probe(t, ad::diff_x(t, v), 1), probe(t, ad::diff_y(t, v), 2)); }, r);
  EXPECT_LT(err, 1e-6);
}

TEST(GradientCheck, KinkGuardSkipsStencilAcrossRelu) {
  // x[0] sits 3e-6 from the ReLU kink, inside a 1e-5 stencil.
  auto x = Tensor({2}, {3e-6, 0.5});
  auto f = [&](Tape& t) { return ad::sum(t, ad::relu(t, x)); };
  EXPECT_GT(ad::gradient_check_leaves(f, {{"x", x}}).max_rel_error, 0.1);
  const auto rep = ad::gradient_check_leaves(f, {{"x", x}}, 1e-5, 0, 0, 1e-8, 1e-3);
  EXPECT_EQ(rep.coords_skipped, 1u);
  EXPECT_EQ(rep.coords_checked, 1u);
  EXPECT_LT(rep.max_rel_error, 1e-9);
}

TEST(GradientCheck, KinkGuardStillCatchesWrongGradient) {
  // Analytic path uses 3x, numeric path sees x^2 near 1: smooth, so the
  // guard leaves the coordinate in and the mismatch is reported.
  auto x = Tensor({1}, {1.0});
  auto f = [&](Tape& t) {
    return t.recording() ? ad::scale(t, ad::sum(t, x), 3.0) : ad::sum(t, ad::square(t, x));
  };
  const auto rep = ad::gradient_check_leaves(f, {{"x", x}}, 1e-5, 0, 0, 1e-8, 1e-3);
  EXPECT_EQ(rep.coords_skipped, 0u);
  EXPECT_GT(rep.max_rel_error, 0.3);
}
