#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <set>

#include "facechannel/error.hpp"
#include "facechannel/rng.hpp"
#include "facechannel/tensor.hpp"

namespace fc = facechannel;

TEST(Tensor, ConstructionAndIndexing) {
  fc::Tensor<float> t({2, 3, 4}, 1.5f);
  EXPECT_EQ(t.size(), 24u);
  EXPECT_EQ(t.rank(), 3u);
  EXPECT_EQ(t.dim(1), 3u);
  EXPECT_FLOAT_EQ(t.at({1, 2, 3}), 1.5f);
  t.at({1, 2, 3}) = 7.0f;
  EXPECT_FLOAT_EQ(t[23], 7.0f);
  EXPECT_THROW(t.at({2, 0, 0}), fc::ShapeError);
  EXPECT_THROW(t.at({0, 0}), fc::ShapeError);
  EXPECT_THROW(t.dim(3), fc::ShapeError);
}

TEST(Tensor, DataLengthMustMatchShape) {
  EXPECT_THROW(fc::Tensor<double>({2, 2}, std::vector<double>{1, 2, 3}), fc::ShapeError);
  const fc::Tensor<double> t({2, 2}, std::vector<double>{1, 2, 3, 4});
  EXPECT_DOUBLE_EQ(t.at({1, 0}), 3.0);
}

TEST(Tensor, ReshapeKeepsDataAndChecksCount) {
  fc::Tensor<double> t({2, 3});
  std::iota(t.data().begin(), t.data().end(), 0);
  const auto r = t.reshaped({3, 2});
  EXPECT_EQ(r.shape(), (fc::Shape{3, 2}));
  EXPECT_EQ(r.values(), t.values());
  EXPECT_THROW(t.reshaped({4, 2}), fc::ShapeError);
}

TEST(Tensor, FiniteCheckAndCast) {
  fc::Tensor<double> t({3}, 0.25);
  EXPECT_TRUE(t.all_finite());
  t[1] = std::numeric_limits<double>::quiet_NaN();
  EXPECT_FALSE(t.all_finite());
  const auto f = fc::Tensor<double>({2}, 0.5).cast<float>();
  EXPECT_EQ(f.dtype(), fc::DType::kReal32);
  EXPECT_FLOAT_EQ(f[1], 0.5f);
}

TEST(Tensor, DtypeNames) {
  EXPECT_EQ(fc::dtype_name(fc::DType::kReal32), "f32");
  EXPECT_EQ(fc::parse_dtype("f64"), fc::DType::kReal64);
  EXPECT_THROW(fc::parse_dtype("i8"), fc::Error);
  EXPECT_EQ(fc::shape_to_string({1, 2, 3}), "[1,2,3]");
}

TEST(Rng, MatchesPublishedXoshiroSeedingReference) {
  // splitmix64 from state 0 yields 0xe220a8397b1dcdaf first; xoshiro256**
  // starting from four splitmix64 outputs is fully determined by that.
  // Independent re-derivation of the first xoshiro256** output:
  auto splitmix = [](std::uint64_t& s) {
    std::uint64_t z = (s += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  std::uint64_t s = 0;
  const std::uint64_t s0 = splitmix(s), s1 = splitmix(s);
  EXPECT_EQ(s0, 0xe220a8397b1dcdafULL);
  const auto rotl = [](std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); };
  fc::Rng rng(0);
  EXPECT_EQ(rng.next_u64(), rotl(s1 * 5, 7) * 9);
}

TEST(Rng, SameSeedSameStream) {
  fc::Rng a(42), b(42), c(43);
  bool differs = false;
  for (int i = 0; i < 100; ++i) {
    const auto x = a.next_u64();
    EXPECT_EQ(x, b.next_u64());
    differs |= x != c.next_u64();
  }
  EXPECT_TRUE(differs);
}

TEST(Rng, UniformRangeAndMoments) {
  fc::Rng rng(7);
  double sum = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    sum += u;
  }
  // Mean of U(0,1) is 0.5 with standard error 1/sqrt(12 n) ~ 6.5e-4.
  EXPECT_NEAR(sum / n, 0.5, 4e-3);
}

TEST(Rng, UniformIndexCoversRangeWithoutBias) {
  fc::Rng rng(3);
  std::vector<int> counts(6, 0);
  const int n = 60000;
  for (int i = 0; i < n; ++i) {
    const auto k = rng.uniform_index(6);
    ASSERT_LT(k, 6u);
    ++counts[k];
  }
  // Each bin expects 10000 with sd ~91.
  for (int c : counts) EXPECT_NEAR(c, 10000, 500);
}

TEST(Rng, ShuffleIsAPermutation) {
  fc::Rng rng(11);
  std::vector<int> v(50);
  std::iota(v.begin(), v.end(), 0);
  auto w = v;
  rng.shuffle(std::span<int>(w));
  EXPECT_NE(v, w);
  std::sort(w.begin(), w.end());
  EXPECT_EQ(v, w);
}

TEST(Rng, SplitStreamsAreIndependentOfLaterDraws) {
  fc::Rng a(5), b(5);
  auto child_a = a.split();
  auto child_b = b.split();
  EXPECT_EQ(child_a.next_u64(), child_b.next_u64());
  EXPECT_NE(a.next_u64(), child_a.next_u64());
}
