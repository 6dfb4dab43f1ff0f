#pragma once

#include <array>
#include <cstdint>
#include <limits>

namespace effpop {

/// Philox4x32-10 counter-based generator (Salmon et al., SC'11).
///
/// A stream is fixed by a 64-bit key (the run seed) and the upper 64 bits of
/// the counter (replicate and fraction index); the lower 64 bits count blocks
/// of four outputs. Satisfies UniformRandomBitGenerator, so it plugs into the
/// standard distributions.
class Philox4x32 {
 public:
  using result_type = std::uint32_t;
  using Block = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  Philox4x32(std::uint64_t seed, std::uint32_t stream_a, std::uint32_t stream_b)
      : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
        counter_{0, 0, stream_a, stream_b} {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() {
    if (index_ == 4) {
      buffer_ = bijection(counter_, key_);
      if (++counter_[0] == 0) ++counter_[1];
      index_ = 0;
    }
    return buffer_[index_++];
  }

  /// The keyed bijection itself: ten rounds with Weyl key schedule.
  static Block bijection(Block ctr, Key key) {
    for (int round = 0; round < 10; ++round) {
      if (round > 0) {
        key[0] += 0x9E3779B9u;
        key[1] += 0xBB67AE85u;
      }
      const std::uint64_t p0 = static_cast<std::uint64_t>(0xD2511F53u) * ctr[0];
      const std::uint64_t p1 = static_cast<std::uint64_t>(0xCD9E8D57u) * ctr[2];
      const auto hi0 = static_cast<std::uint32_t>(p0 >> 32), lo0 = static_cast<std::uint32_t>(p0);
      const auto hi1 = static_cast<std::uint32_t>(p1 >> 32), lo1 = static_cast<std::uint32_t>(p1);
      ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    }
    return ctr;
  }

 private:
  Key key_;
  Block counter_;
  Block buffer_{};
  int index_ = 4;
};

/// Stream tags used by the simulators. Fractions use their index; the total
/// process and per-replicate bookkeeping use the reserved tags below.
inline constexpr std::uint32_t kTotalStream = 0xFFFFFFFFu;
inline constexpr std::uint32_t kAuxStream = 0xFFFFFFFEu;

}  // namespace effpop
