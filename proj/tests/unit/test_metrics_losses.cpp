#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "facechannel/error.hpp"
#include "facechannel/losses.hpp"
#include "facechannel/metrics.hpp"
#include "facechannel/optimizer.hpp"
#include "facechannel/rng.hpp"

namespace fc = facechannel;

namespace {

// Term-by-term long double evaluation of 2*rho*sx*sy / (sx^2 + sy^2 + (mx - my)^2).
long double ccc_oracle(const std::vector<double>& x, const std::vector<double>& y) {
  const long double n = x.size();
  long double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) mx += x[i], my += y[i];
  mx /= n;
  my /= n;
  long double vx = 0, vy = 0, cov = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    vx += (x[i] - mx) * (x[i] - mx);
    vy += (y[i] - my) * (y[i] - my);
    cov += (x[i] - mx) * (y[i] - my);
  }
  vx /= n;
  vy /= n;
  cov /= n;
  const long double rho = cov / std::sqrt(vx * vy);
  return 2 * rho * std::sqrt(vx) * std::sqrt(vy) / (vx + vy + (mx - my) * (mx - my));
}

std::vector<double> randoms(std::size_t n, std::uint64_t seed) {
  fc::Rng rng(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

}  // namespace

TEST(Ccc, Anchors) {
  const std::vector<double> x{0.1, -0.4, 0.9, 0.1, -0.7};  // zero mean
  std::vector<double> neg(x.size()), shifted(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) neg[i] = -x[i], shifted[i] = x[i] + 0.5;
  EXPECT_NEAR(fc::ccc(x, x), 1.0, 1e-15);
  EXPECT_NEAR(fc::ccc(x, neg), -1.0, 1e-15);
  EXPECT_NEAR(fc::pearson(x, shifted), 1.0, 1e-12);
  EXPECT_LT(fc::ccc(x, shifted), 1.0);
  const std::vector<double> c(5, 0.3);
  EXPECT_EQ(fc::ccc(x, c), 0.0);
}

TEST(Ccc, MatchesLongDoubleOracle) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto x = randoms(37, seed), y = randoms(37, seed + 100);
    EXPECT_NEAR(fc::ccc(x, y), static_cast<double>(ccc_oracle(x, y)), 1e-12);
  }
}

TEST(Ccc, HandExample) {
  // x = {1,2,3}, y = {2,3,5}: mx = 2, my = 10/3, vx = 2/3, vy = 14/9, cov = 1.
  const std::vector<double> x{1, 2, 3}, y{2, 3, 5};
  const double expected = 2.0 / (2.0 / 3.0 + 14.0 / 9.0 + 16.0 / 9.0);
  EXPECT_NEAR(fc::ccc(x, y), expected, 1e-15);
  const auto comp = fc::ccc_components(x, y);
  EXPECT_NEAR(comp.covariance, 1.0, 1e-15);
  EXPECT_NEAR(comp.pearson, 1.0 / std::sqrt(2.0 / 3.0 * 14.0 / 9.0), 1e-15);
}

TEST(Ccc, SymmetricAndBoundedByPearson) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    auto x = randoms(25, seed), y = randoms(25, seed + 7);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = 0.6 * x[i] + 0.4 * y[i] + 0.1;
    EXPECT_NEAR(fc::ccc(x, y), fc::ccc(y, x), 1e-15);
    EXPECT_LE(std::abs(fc::ccc(x, y)), std::abs(fc::pearson(x, y)) + 1e-15);
  }
}

TEST(Ccc, MeanShiftLowersAgreement) {
  const auto x = randoms(50, 3);
  double previous = 1.0;
  for (double shift : {0.1, 0.3, 0.9}) {
    std::vector<double> y(x);
    for (auto& v : y) v += shift;
    const double c = fc::ccc(x, y);
    EXPECT_LT(c, previous);
    previous = c;
  }
}

TEST(Ccc, ListedExamples) {
  const std::vector<double> a{1, 2, 3}, b{3, 2, 1};
  EXPECT_NEAR(fc::ccc(a, b), -1.0, 1e-15);
  const std::vector<double> x{0.1, 0.4, -0.2, 0.9}, y{0.0, 0.5, -0.1, 0.7};
  EXPECT_NEAR(fc::ccc(x, y), static_cast<double>(ccc_oracle(x, y)), 1e-14);
}

TEST(Ccc, InvalidInputs) {
  const std::vector<double> a{1.0, 2.0}, b{1.0}, c{1.0, 2.0, 3.0};
  EXPECT_THROW(fc::ccc(a, c), fc::DataError);
  EXPECT_THROW(fc::ccc(b, b), fc::DataError);
}

TEST(CrossEntropy, UniformPredictionGivesLogK) {
  const fc::Tensor<double> p({2, 4}, 0.25);
  fc::Tensor<double> t({2, 4}, 0.0);
  t[1] = 1.0;
  t[4 + 3] = 1.0;
  EXPECT_NEAR(fc::cross_entropy(p, t).loss, std::log(4.0), 1e-8);
}

TEST(CrossEntropy, GradientIsPredictionMinusTargetOverBatch) {
  const fc::Tensor<double> p({2, 2}, std::vector<double>{0.7, 0.3, 0.2, 0.8});
  const fc::Tensor<double> t({2, 2}, std::vector<double>{1.0, 0.0, 0.5, 0.5});
  const auto r = fc::cross_entropy(p, t);
  const double expected = -(std::log(0.7 + 1e-9) + 0.5 * std::log(0.2 + 1e-9) + 0.5 * std::log(0.8 + 1e-9)) / 2.0;
  EXPECT_NEAR(r.loss, expected, 1e-12);
  EXPECT_EQ(r.grad.shape(), p.shape());
  const std::vector<double> g{-0.15, 0.15, -0.15, 0.15};
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(r.grad[i], g[i], 1e-15);
}

TEST(CrossEntropy, MinimisedByTheTargetAndBoundedBelowByEntropy) {
  const fc::Tensor<double> t({1, 3}, std::vector<double>{0.2, 0.5, 0.3});
  const double entropy = -(0.2 * std::log(0.2) + 0.5 * std::log(0.5) + 0.3 * std::log(0.3));
  EXPECT_NEAR(fc::cross_entropy(t, t).loss, entropy, 1e-8);
  fc::Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    fc::Tensor<double> p({1, 3});
    double s = 0.0;
    for (auto& v : p.data()) s += v = rng.uniform(0.01, 1.0);
    for (auto& v : p.data()) v /= s;
    EXPECT_GE(fc::cross_entropy(p, t).loss, entropy - 1e-8);
  }
}

TEST(CrossEntropy, RejectsInvalidTargets) {
  const fc::Tensor<double> p({1, 2}, 0.5);
  EXPECT_THROW(fc::cross_entropy(p, fc::Tensor<double>({1, 3}, 1.0 / 3)), fc::DataError);
  EXPECT_THROW(fc::cross_entropy(p, fc::Tensor<double>({1, 2}, std::vector<double>{1.5, -0.5})), fc::DataError);
  EXPECT_THROW(fc::cross_entropy(p, fc::Tensor<double>({1, 2}, std::vector<double>{0.5, 0.4})), fc::DataError);
}

TEST(Mse, HandExample) {
  const fc::Tensor<double> p({2, 2}, std::vector<double>{0.0, 1.0, 0.5, -0.5});
  const fc::Tensor<double> t({2, 2}, std::vector<double>{1.0, 1.0, 0.0, 0.5});
  const auto r = fc::mse(p, t);
  EXPECT_NEAR(r.loss, (1.0 + 0.0 + 0.25 + 1.0) / 4.0, 1e-15);
  const std::vector<double> g{-0.5, 0.0, 0.25, -0.5};
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(r.grad[i], g[i], 1e-15);
  EXPECT_THROW(fc::mse(p, fc::Tensor<double>({4})), fc::DataError);
}

TEST(Mse, ZeroAtTargetAndConstantOffsetSquares) {
  const fc::Tensor<double> t({3, 2}, std::vector<double>{0.1, -0.2, 0.3, 0.4, -0.5, 0.6});
  EXPECT_EQ(fc::mse(t, t).loss, 0.0);
  auto p = t;
  for (auto& v : p.data()) v += 0.3;
  EXPECT_NEAR(fc::mse(p, t).loss, 0.09, 1e-15);
}

TEST(Sgd, HandComputedTwoSteps) {
  fc::Tensor<double> w({1}, 1.0), v({1}, 0.0);
  const fc::Tensor<double> g({1}, 2.0);
  fc::sgd_momentum_step(w, g, v, 0.1, 0.9);
  EXPECT_NEAR(v[0], -0.2, 1e-15);
  EXPECT_NEAR(w[0], 0.8, 1e-15);
  fc::sgd_momentum_step(w, g, v, 0.1, 0.9);
  EXPECT_NEAR(v[0], -0.38, 1e-15);
  EXPECT_NEAR(w[0], 0.42, 1e-15);
}

TEST(Sgd, ZeroLearningRateLeavesParametersUnchanged) {
  fc::Tensor<double> w({3}, std::vector<double>{1, 2, 3}), v({3}, 0.0);
  const auto before = w;
  fc::sgd_momentum_step(w, fc::Tensor<double>({3}, 5.0), v, 0.0, 0.9);
  EXPECT_EQ(w, before);
}

TEST(Sgd, ConvergesOnQuadraticBowl) {
  // f(w) = 0.5 * sum a_i (w_i - c_i)^2.
  const std::vector<double> a{1.0, 4.0, 0.25}, c{3.0, -1.0, 2.0};
  fc::Tensor<double> w({3}, 0.0), grad({3});
  fc::SgdMomentum<double> opt(0.1, 0.9);
  std::vector<fc::ParamRef<double>> params{{"w", &w, &grad}};
  for (int it = 0; it < 500; ++it) {
    for (std::size_t i = 0; i < 3; ++i) grad[i] = a[i] * (w[i] - c[i]);
    opt.step(params);
  }
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(w[i], c[i], 1e-6);
  EXPECT_EQ(opt.state().count("w"), 1u);
}

TEST(Sgd, InvalidHyperparameters) {
  EXPECT_THROW(fc::SgdMomentum<double>(-0.1, 0.9), fc::ParameterError);
  EXPECT_THROW(fc::SgdMomentum<double>(0.1, 1.0), fc::ParameterError);
  fc::Tensor<double> w({2}), v({3});
  EXPECT_THROW(fc::sgd_momentum_step(w, w, v, 0.1, 0.0), fc::ShapeError);
}

TEST(Argmax, FirstMaximumWins) {
  const fc::Tensor<float> t({2, 3}, std::vector<float>{0.1f, 0.5f, 0.5f, 0.9f, 0.0f, 0.1f});
  EXPECT_EQ(fc::argmax_row(t, 0), 1u);
  EXPECT_EQ(fc::argmax_row(t, 1), 0u);
}
