#include <gtest/gtest.h>

#include <cmath>

#include "facechannel/error.hpp"
#include "facechannel/ops.hpp"
#include "facechannel/rng.hpp"

namespace fc = facechannel;

namespace {

fc::Tensor<double> random_tensor(const fc::Shape& s, std::uint64_t seed) {
  fc::Rng rng(seed);
  fc::Tensor<double> t(s);
  for (auto& v : t.data()) v = rng.uniform(-1.0, 1.0);
  return t;
}

// Direct-loop convolution with explicit zero padding.
fc::Tensor<double> naive_conv(const fc::Tensor<double>& x, const fc::Tensor<double>& w, const fc::Tensor<double>& b,
                              std::size_t pad_top, std::size_t pad_left, std::size_t oh, std::size_t ow,
                              std::size_t stride) {
  const std::size_t n = x.dim(0), cin = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const std::size_t cout = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  fc::Tensor<double> y({n, cout, oh, ow});
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t o = 0; o < cout; ++o)
      for (std::size_t i = 0; i < oh; ++i)
        for (std::size_t j = 0; j < ow; ++j) {
          double acc = b[o];
          for (std::size_t c = 0; c < cin; ++c)
            for (std::size_t u = 0; u < kh; ++u)
              for (std::size_t v = 0; v < kw; ++v) {
                const long yy = static_cast<long>(i * stride + u) - static_cast<long>(pad_top);
                const long xx = static_cast<long>(j * stride + v) - static_cast<long>(pad_left);
                if (yy < 0 || xx < 0 || yy >= static_cast<long>(h) || xx >= static_cast<long>(wd)) continue;
                acc += x.at({s, c, static_cast<std::size_t>(yy), static_cast<std::size_t>(xx)}) * w.at({o, c, u, v});
              }
          y.at({s, o, i, j}) = acc;
        }
  return y;
}

double max_abs_diff(const fc::Tensor<double>& a, const fc::Tensor<double>& b) {
  EXPECT_EQ(a.shape(), b.shape());
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace

TEST(Matmul, MatchesNaiveProduct) {
  const auto a = random_tensor({5, 7}, 1), b = random_tensor({7, 3}, 2);
  const auto c = fc::matmul(a, b);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 3; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < 7; ++k) acc += a.at({i, k}) * b.at({k, j});
      EXPECT_NEAR(c.at({i, j}), acc, 1e-12);
    }
  EXPECT_THROW(fc::matmul(a, a), fc::ShapeError);
}

TEST(Conv2d, SamePaddingMatchesDirectLoops) {
  const auto x = random_tensor({2, 3, 7, 6}, 3), w = random_tensor({4, 3, 3, 3}, 4), b = random_tensor({4}, 5);
  const auto y = fc::conv2d(x, w, b, fc::Padding::kSame);
  EXPECT_EQ(y.shape(), (fc::Shape{2, 4, 7, 6}));
  EXPECT_LT(max_abs_diff(y, naive_conv(x, w, b, 1, 1, 7, 6, 1)), 1e-12);
}

TEST(Conv2d, ValidPaddingAndStride) {
  const auto x = random_tensor({1, 2, 9, 8}, 6), w = random_tensor({3, 2, 3, 3}, 7), b = random_tensor({3}, 8);
  const auto y = fc::conv2d(x, w, b, fc::Padding::kValid, 2);
  EXPECT_EQ(y.shape(), (fc::Shape{1, 3, 4, 3}));
  EXPECT_LT(max_abs_diff(y, naive_conv(x, w, b, 0, 0, 4, 3, 2)), 1e-12);
}

TEST(Conv2d, SinglePixelKernelOnHandExample) {
  // 1x1 kernel of weight 2 plus bias 1 maps each pixel p to 2p + 1.
  const fc::Tensor<double> x({1, 1, 2, 2}, std::vector<double>{0, 1, 2, 3});
  const fc::Tensor<double> w({1, 1, 1, 1}, 2.0), b({1}, 1.0);
  const auto y = fc::conv2d(x, w, b);
  EXPECT_EQ(y.values(), (std::vector<double>{1, 3, 5, 7}));
}

TEST(Conv2d, RejectsMismatchedShapes) {
  const auto x = random_tensor({1, 2, 5, 5}, 1);
  EXPECT_THROW(fc::conv2d(x, random_tensor({3, 1, 3, 3}, 2), random_tensor({3}, 3)), fc::ShapeError);
  EXPECT_THROW(fc::conv2d(x, random_tensor({3, 2, 3, 3}, 2), random_tensor({2}, 3)), fc::ShapeError);
  EXPECT_THROW(fc::conv2d(x, random_tensor({3, 2, 2, 2}, 2), random_tensor({3}, 3)), fc::Error);
}

TEST(Conv2dBackward, KernelGradientIsCorrelationOfInputAndUpstream) {
  // For y = conv(x, w) the kernel gradient equals sum over outputs of dy * x patch.
  const auto x = random_tensor({2, 2, 5, 4}, 9), w = random_tensor({3, 2, 3, 3}, 10);
  const auto dy = random_tensor({2, 3, 5, 4}, 11);
  const auto g = fc::conv2d_backward(x, w, dy);
  for (std::size_t o = 0; o < 3; ++o)
    for (std::size_t c = 0; c < 2; ++c)
      for (std::size_t u = 0; u < 3; ++u)
        for (std::size_t v = 0; v < 3; ++v) {
          double acc = 0.0;
          for (std::size_t s = 0; s < 2; ++s)
            for (std::size_t i = 0; i < 5; ++i)
              for (std::size_t j = 0; j < 4; ++j) {
                const long yy = static_cast<long>(i + u) - 1, xx = static_cast<long>(j + v) - 1;
                if (yy < 0 || xx < 0 || yy >= 5 || xx >= 4) continue;
                acc += dy.at({s, o, i, j}) * x.at({s, c, std::size_t(yy), std::size_t(xx)});
              }
          EXPECT_NEAR(g.kernel.at({o, c, u, v}), acc, 1e-12);
        }
  double bias0 = 0.0;
  for (std::size_t s = 0; s < 2; ++s)
    for (std::size_t i = 0; i < 20; ++i) bias0 += dy[s * 60 + i];
  EXPECT_NEAR(g.bias[0], bias0, 1e-12);
}

TEST(MaxPool, HandExampleWithTiesTakingFirstIndex) {
  const fc::Tensor<double> x({1, 1, 2, 4}, std::vector<double>{1, 5, 2, 2, 3, 0, 2, 2});
  const auto r = fc::maxpool2(x);
  EXPECT_EQ(r.output.shape(), (fc::Shape{1, 1, 1, 2}));
  EXPECT_EQ(r.output.values(), (std::vector<double>{5, 2}));
  EXPECT_EQ(r.argmax[0], 1);
  EXPECT_EQ(r.argmax[1], 0);
  const auto dx = fc::maxpool2_backward(fc::Tensor<double>({1, 1, 1, 2}, std::vector<double>{10, 20}), r.argmax,
                                        x.shape());
  EXPECT_EQ(dx.values(), (std::vector<double>{0, 10, 20, 0, 0, 0, 0, 0}));
}

TEST(MaxPool, RejectsOddSizes) { EXPECT_THROW(fc::maxpool2(fc::Tensor<double>({1, 1, 3, 4})), fc::ShapeError); }

TEST(ResizeBilinear, SameSizeIsIdentity) {
  const auto x = random_tensor({2, 5, 7}, 12);
  EXPECT_EQ(fc::resize_bilinear(x, 5, 7), x);
}

TEST(ResizeBilinear, HalfPixelUpsamplingHandExample) {
  // Output column j samples input coordinate (j + 0.5) / 2 - 0.5, clamped to [0, 1]:
  // -0.25 -> 0, 0.25, 0.75, 1.25 -> 1.
  const fc::Tensor<double> x({1, 1, 2}, std::vector<double>{0.0, 1.0});
  const auto y = fc::resize_bilinear(x, 1, 4);
  const std::vector<double> expected{0.0, 0.25, 0.75, 1.0};
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(y[i], expected[i], 1e-15);
}

TEST(ResizeBilinear, DownsamplingAveragesPairs) {
  // Halving samples at the midpoint between each pair of pixels.
  const fc::Tensor<double> x({1, 2, 2}, std::vector<double>{0, 2, 4, 6});
  const auto y = fc::resize_bilinear(x, 1, 1);
  EXPECT_NEAR(y[0], 3.0, 1e-15);
}

TEST(ResizeBilinear, PreservesConstantsAndRange) {
  const fc::Tensor<double> c({3, 4, 6}, 0.3);
  const auto y = fc::resize_bilinear(c, 9, 5);
  for (double v : y.data()) EXPECT_NEAR(v, 0.3, 1e-15);
  const auto r = fc::resize_bilinear(random_tensor({1, 6, 6}, 13), 17, 11);
  for (double v : r.data()) {
    EXPECT_GE(v, -1.0);
    EXPECT_LE(v, 1.0);
  }
}
