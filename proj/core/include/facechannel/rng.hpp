#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>

namespace facechannel {

/// xoshiro256** seeded through splitmix64.
///
/// Every draw is defined with integer arithmetic only, so a given seed yields
/// the same sequence on every platform and compiler:
///   - state[0..3] = four successive splitmix64 outputs starting from `seed`
///   - uniform() = (next_u64() >> 11) * 2^-53, in [0, 1)
///   - uniform_index(n) uses rejection on the top bits (no modulo bias)
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t next_u64() noexcept;
  double uniform() noexcept;
  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n); n must be > 0.
  std::uint64_t uniform_index(std::uint64_t n) noexcept;
  bool bernoulli(double p) noexcept { return uniform() < p; }

  /// Fisher-Yates over `items`, drawing indices with uniform_index.
  template <typename U>
  void shuffle(std::span<U> items) noexcept {
    for (std::size_t i = items.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(uniform_index(i));
      std::swap(items[i - 1], items[j]);
    }
  }

  /// Independent generator derived from this one's next draw.
  Rng split() noexcept { return Rng(next_u64()); }

 private:
  std::uint64_t seed_;
  std::array<std::uint64_t, 4> state_{};
};

}  // namespace facechannel
