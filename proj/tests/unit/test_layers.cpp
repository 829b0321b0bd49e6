#include <gtest/gtest.h>

#include <cmath>

#include "facechannel/error.hpp"
#include "facechannel/layer.hpp"
#include "facechannel/layers.hpp"
#include "facechannel/ops.hpp"

namespace fc = facechannel;

namespace {

fc::Tensor<double> random_tensor(const fc::Shape& s, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  fc::Rng rng(seed);
  fc::Tensor<double> t(s);
  for (auto& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

fc::ShuntingParams<double> random_shunting(std::size_t cin, std::size_t n, std::uint64_t seed) {
  return {random_tensor({n, cin, 3, 3}, seed), random_tensor({n}, seed + 1), random_tensor({n, cin, 3, 3}, seed + 2),
          random_tensor({n}, seed + 3), random_tensor({n}, seed + 4)};
}

}  // namespace

TEST(Shunting, DecayParameterisation) {
  EXPECT_NEAR(fc::softplus(fc::decay_raw_for(1.0)) + fc::kMinDecay, 1.0, 1e-15);
  EXPECT_NEAR(fc::softplus(0.0), std::log(2.0), 1e-15);
  EXPECT_NEAR(fc::softplus(800.0), 800.0, 1e-12);
  EXPECT_NEAR(fc::sigmoid(0.0), 0.5, 1e-15);
  EXPECT_THROW(fc::decay_raw_for(0.005), fc::ParameterError);
}

TEST(Shunting, ReducesToConvReluWithoutInhibitionAndUnitDecay) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    auto p = random_shunting(3, 4, seed * 10);
    p.inhibitory_kernel.fill(0.0);
    p.inhibitory_bias.fill(0.0);
    p.decay_raw.fill(fc::decay_raw_for(1.0));
    const auto x = random_tensor({2, 3, 6, 5}, seed);
    const auto s = fc::shunting_forward(x, p).output;
    auto reference = fc::conv2d(x, p.main_kernel, p.main_bias);
    for (auto& v : reference.data()) v = std::max(v, 0.0);
    double diff = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) diff = std::max(diff, std::abs(s[i] - reference[i]));
    EXPECT_LT(diff, 1e-6);
  }
}

TEST(Shunting, PointwiseDivisionOnHandExample) {
  // 1x1 kernels: u = relu(2x), I = relu(x), a = 1: S = 2x / (1 + x) for x > 0, 0 otherwise.
  fc::ShuntingParams<double> p{fc::Tensor<double>({1, 1, 1, 1}, 2.0), fc::Tensor<double>({1}, 0.0),
                               fc::Tensor<double>({1, 1, 1, 1}, 1.0), fc::Tensor<double>({1}, 0.0),
                               fc::Tensor<double>({1}, fc::decay_raw_for(1.0))};
  const fc::Tensor<double> x({1, 1, 1, 3}, std::vector<double>{1.0, 3.0, -2.0});
  const auto s = fc::shunting_forward(x, p).output;
  EXPECT_NEAR(s[0], 1.0, 1e-12);
  EXPECT_NEAR(s[1], 1.5, 1e-12);
  EXPECT_EQ(s[2], 0.0);
}

TEST(Shunting, OutputIsNonNegativeAndBoundedByExcitationOverDecay) {
  const auto p = random_shunting(2, 3, 40);
  const auto x = random_tensor({2, 2, 5, 5}, 41);
  const auto io = fc::shunting_forward(x, p);
  for (std::size_t i = 0; i < io.output.size(); ++i) {
    const std::size_t ch = (i / 25) % 3;
    EXPECT_GE(io.output[i], 0.0);
    EXPECT_LE(io.output[i], io.cache.excitation[i] / io.cache.decay[ch] + 1e-12);
  }
}

TEST(Shunting, LayerStartsAtUnitDecay) {
  fc::Rng rng(1);
  fc::ShuntingLayer<double> layer("s", 2, 3, 3, fc::ShuntingActivation::kNone, rng);
  for (double raw : layer.params().decay_raw.data()) EXPECT_NEAR(fc::softplus(raw) + fc::kMinDecay, 1.0, 1e-12);
  EXPECT_EQ(layer.output_shape({4, 2, 8, 8}), (fc::Shape{4, 3, 8, 8}));
}

TEST(BatchNorm, TrainModeNormalisesEachChannel) {
  auto p = fc::BatchNormParams<double>::identity(2);
  p.gamma[1] = 2.0;
  p.beta[1] = -1.0;
  const auto x = random_tensor({4, 2, 3, 3}, 5, -3.0, 5.0);
  const auto y = fc::batchnorm_forward(x, p, fc::Mode::kTrain).output;
  for (std::size_t c = 0; c < 2; ++c) {
    double mean = 0.0, sq = 0.0;
    for (std::size_t n = 0; n < 4; ++n)
      for (std::size_t i = 0; i < 9; ++i) mean += y[(n * 2 + c) * 9 + i];
    mean /= 36.0;
    for (std::size_t n = 0; n < 4; ++n)
      for (std::size_t i = 0; i < 9; ++i) sq += std::pow(y[(n * 2 + c) * 9 + i] - mean, 2);
    const double var = sq / 36.0;
    EXPECT_NEAR(mean, c == 0 ? 0.0 : -1.0, 1e-12);
    // Biased variance with eps: var(y) = gamma^2 * v / (v + eps).
    EXPECT_NEAR(var, c == 0 ? 1.0 : 4.0, 1e-4);
  }
}

TEST(BatchNorm, RunningStatisticsFollowMomentum) {
  auto p = fc::BatchNormParams<double>::identity(1);
  const fc::Tensor<double> x({4, 1}, std::vector<double>{1, 2, 3, 6});
  fc::batchnorm_forward(x, p, fc::Mode::kTrain);
  // batch mean 3, biased variance (4 + 1 + 0 + 9) / 4 = 3.5
  EXPECT_NEAR(p.running_mean[0], 0.01 * 3.0, 1e-15);
  EXPECT_NEAR(p.running_var[0], 0.99 * 1.0 + 0.01 * 3.5, 1e-15);
}

TEST(BatchNorm, InferModeUsesRunningStatistics) {
  auto p = fc::BatchNormParams<double>::identity(1);
  p.running_mean[0] = 2.0;
  p.running_var[0] = 4.0;
  p.gamma[0] = 3.0;
  p.beta[0] = 1.0;
  const fc::Tensor<double> x({1, 1}, std::vector<double>{6.0});
  const auto y = fc::batchnorm_forward(x, p, fc::Mode::kInfer).output;
  EXPECT_NEAR(y[0], 3.0 * (6.0 - 2.0) / std::sqrt(4.0 + 1e-5) + 1.0, 1e-12);
  EXPECT_EQ(p.running_mean[0], 2.0);
}

TEST(BatchNorm, FrozenLayerIgnoresBatchStatisticsInTrainMode) {
  fc::BatchNormLayer<double> layer("bn", 2);
  layer.params().running_mean.fill(0.5);
  layer.set_trainable(false);
  const auto x = random_tensor({3, 2, 2, 2}, 8);
  fc::Rng rng(0);
  const auto y_train = layer.forward(x, fc::Mode::kTrain, rng);
  const auto y_infer = layer.forward(x, fc::Mode::kInfer, rng);
  EXPECT_EQ(y_train, y_infer);
  EXPECT_EQ(layer.params().running_mean[0], 0.5);
}

TEST(BatchNorm, SingleValuePerChannelIsRejectedInTrainMode) {
  auto p = fc::BatchNormParams<double>::identity(3);
  EXPECT_THROW(fc::batchnorm_forward(fc::Tensor<double>({1, 3}), p, fc::Mode::kTrain), fc::ShapeError);
  EXPECT_NO_THROW(fc::batchnorm_forward(fc::Tensor<double>({1, 3}), p, fc::Mode::kInfer));
}

TEST(Dropout, InferenceIsIdentity) {
  fc::Rng rng(1);
  const auto x = random_tensor({4, 10}, 2);
  EXPECT_EQ(fc::dropout_forward(x, 0.5, fc::Mode::kInfer, rng).output, x);
}

TEST(Dropout, TrainModeKeepsExpectationAndZeroesAboutRate) {
  fc::Rng rng(3);
  const fc::Tensor<double> x({100000}, 1.0);
  const auto y = fc::dropout_forward(x, 0.5, fc::Mode::kTrain, rng).output;
  std::size_t zeros = 0;
  double sum = 0.0;
  for (double v : y.data()) {
    zeros += v == 0.0;
    EXPECT_TRUE(v == 0.0 || v == 2.0);
    sum += v;
  }
  // Binomial(1e5, 0.5): sd ~158.
  EXPECT_NEAR(static_cast<double>(zeros), 50000.0, 1000.0);
  EXPECT_NEAR(sum / 100000.0, 1.0, 0.02);
}

TEST(Dropout, RateOutsideUnitIntervalIsRejected) {
  fc::Rng rng(1);
  const fc::Tensor<double> x({2}, 1.0);
  EXPECT_THROW(fc::dropout_forward(x, 1.0, fc::Mode::kTrain, rng), fc::ParameterError);
  EXPECT_THROW(fc::dropout_forward(x, -0.1, fc::Mode::kTrain, rng), fc::ParameterError);
  EXPECT_THROW(fc::DropoutLayer<double>("d", 1.5), fc::ParameterError);
}

TEST(Dense, HandExample) {
  const fc::Tensor<double> x({1, 2}, std::vector<double>{1.0, 2.0});
  const fc::Tensor<double> w({2, 3}, std::vector<double>{1, 0, -1, 2, 1, 0});
  const fc::Tensor<double> b({3}, std::vector<double>{0.5, 0.0, 0.0});
  EXPECT_EQ(fc::dense_forward(x, w, b).output.values(), (std::vector<double>{5.5, 2.0, -1.0}));
  EXPECT_THROW(fc::dense_forward(fc::Tensor<double>({1, 3}), w, b), fc::ShapeError);
}

TEST(Softmax, RowsSumToOneAndAreShiftInvariant) {
  const auto x = random_tensor({3, 5}, 4, -20.0, 20.0);
  auto shifted = x;
  for (auto& v : shifted.data()) v += 1000.0;
  const auto p = fc::softmax(x), q = fc::softmax(shifted);
  for (std::size_t n = 0; n < 3; ++n) {
    double s = 0.0;
    for (std::size_t k = 0; k < 5; ++k) s += p[n * 5 + k];
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
  for (std::size_t i = 0; i < p.size(); ++i) EXPECT_NEAR(p[i], q[i], 1e-12);
}

TEST(Relu, ClampsNegatives) {
  const fc::Tensor<double> x({4}, std::vector<double>{-1.0, 0.0, 2.0, -0.5});
  const auto io = fc::relu_forward(x);
  EXPECT_EQ(io.output.values(), (std::vector<double>{0.0, 0.0, 2.0, 0.0}));
  const auto dx = fc::relu_backward(fc::Tensor<double>({4}, 1.0), io.cache);
  EXPECT_EQ(dx.values(), (std::vector<double>{0.0, 0.0, 1.0, 0.0}));
}

TEST(HeUniform, BoundsAndSpread) {
  fc::Rng rng(9);
  fc::Tensor<double> w({20000});
  fc::he_uniform_init(w, 54, rng);
  const double limit = std::sqrt(6.0 / 54.0);
  double sq = 0.0;
  for (double v : w.data()) {
    EXPECT_LE(std::abs(v), limit);
    sq += v * v;
  }
  // Var of U(-L, L) is L^2 / 3 = 2 / fan_in.
  EXPECT_NEAR(sq / 20000.0, 2.0 / 54.0, 0.002);
}

TEST(Layers, BackwardBeforeForwardIsAnError) {
  fc::ReluLayer<double> relu("relu");
  EXPECT_THROW(relu.backward(fc::Tensor<double>({1}), true), fc::Error);
}
