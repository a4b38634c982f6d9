#pragma once

#include <array>
#include <cstdint>
#include <limits>

namespace nphmm {

/// Philox4x32-10 counter-based generator (Salmon et al., "Parallel random
/// numbers: as easy as 1, 2, 3").
///
/// A generator is identified by a 64-bit key (the seed) and a 64-bit stream
/// index. The 128-bit counter is laid out as (position_lo, position_hi,
/// stream_lo, stream_hi), so two generators that share a seed but differ in
/// stream never produce overlapping blocks. Each block yields two 64-bit
/// outputs.
///
/// Streams are how replications stay reproducible under any worker count:
/// replication r of a run seeded with s draws exclusively from
/// `Philox4x32(s, r)`, or from `Philox4x32(derive_seed(s, r), 0)` when an
/// API takes a single seed.
class Philox4x32 {
 public:
  using result_type = std::uint64_t;
  using Block = std::array<std::uint32_t, 4>;

  explicit Philox4x32(std::uint64_t seed = 0, std::uint64_t stream = 0) noexcept
      : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
        stream_(stream) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept {
    return std::numeric_limits<result_type>::max();
  }

  result_type operator()() noexcept {
    if (slot_ == 2) {
      buffer_ = bijection({static_cast<std::uint32_t>(position_),
                           static_cast<std::uint32_t>(position_ >> 32),
                           static_cast<std::uint32_t>(stream_),
                           static_cast<std::uint32_t>(stream_ >> 32)},
                          key_);
      ++position_;
      slot_ = 0;
    }
    const auto lo = static_cast<std::uint64_t>(buffer_[2 * slot_]);
    const auto hi = static_cast<std::uint64_t>(buffer_[2 * slot_ + 1]);
    ++slot_;
    return lo | (hi << 32);
  }

  /// Uniform double in the open interval (0, 1) with 53 random bits.
  double uniform() noexcept {
    return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53;
  }

  /// The raw ten-round bijection; exposed for known-answer tests.
  static Block bijection(Block ctr, std::array<std::uint32_t, 2> key) noexcept {
    constexpr std::uint32_t kM0 = 0xD2511F53u;
    constexpr std::uint32_t kM1 = 0xCD9E8D57u;
    constexpr std::uint32_t kW0 = 0x9E3779B9u;
    constexpr std::uint32_t kW1 = 0xBB67AE85u;
    for (int round = 0; round < 10; ++round) {
      if (round > 0) {
        key[0] += kW0;
        key[1] += kW1;
      }
      const std::uint64_t p0 = static_cast<std::uint64_t>(kM0) * ctr[0];
      const std::uint64_t p1 = static_cast<std::uint64_t>(kM1) * ctr[2];
      const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
      const auto lo0 = static_cast<std::uint32_t>(p0);
      const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
      const auto lo1 = static_cast<std::uint32_t>(p1);
      ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    }
    return ctr;
  }

 private:
  std::array<std::uint32_t, 2> key_;
  std::uint64_t stream_;
  std::uint64_t position_ = 0;
  Block buffer_{};
  int slot_ = 2;
};

/// SplitMix64 finalizer applied to (seed, index); used to hand a single
/// 64-bit seed to each replication of a seeded batch.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) noexcept {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

}  // namespace nphmm
