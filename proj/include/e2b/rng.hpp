#pragma once

// Counter-based random streams built on Philox4x32-10.
//
// A stream is addressed by (seed, stream id, substream). The 64-bit seed is
// the Philox key; the counter holds a 64-bit block index in words 0-1, the
// stream id in word 2 and the substream in word 3. Every variable of every
// generator draws from its own stream, so adding draws to one variable never
// shifts another.

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace e2b {

namespace philox {

inline constexpr std::uint32_t kMul0 = 0xD2511F53u;
inline constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
inline constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
inline constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

using Counter = std::array<std::uint32_t, 4>;
using Key = std::array<std::uint32_t, 2>;

inline Counter round(const Counter& ctr, const Key& key) {
  const std::uint64_t p0 = static_cast<std::uint64_t>(kMul0) * ctr[0];
  const std::uint64_t p1 = static_cast<std::uint64_t>(kMul1) * ctr[2];
  const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
  const auto lo0 = static_cast<std::uint32_t>(p0);
  const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
  const auto lo1 = static_cast<std::uint32_t>(p1);
  return {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
}

// Philox4x32 with 10 rounds.
inline Counter block(Counter ctr, Key key) {
  for (int r = 0; r < 10; ++r) {
    if (r > 0) {
      key[0] += kWeyl0;
      key[1] += kWeyl1;
    }
    ctr = round(ctr, key);
  }
  return ctr;
}

}  // namespace philox

// Stream identifiers. Values are part of the reproducibility contract.
enum class StreamId : std::uint32_t {
  confounders = 1,
  treatment_coef = 2,
  treatment_noise = 3,
  outcome_coef = 4,
  outcome_noise = 5,
  pseudo_batch = 6,
  pseudo_validation = 7,
  net_init = 8,
  propensity_init = 9,
  propensity_split = 10,
  seed_derivation = 11,
  probe = 12,
};

class Stream {
 public:
  Stream(std::uint64_t seed, StreamId id, std::uint32_t substream = 0)
      : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
        id_(static_cast<std::uint32_t>(id)),
        substream_(substream) {}

  std::uint32_t next_u32() {
    if (pos_ == 4) refill();
    return buffer_[pos_++];
  }

  std::uint64_t next_u64() {
    const std::uint64_t lo = next_u32();
    const std::uint64_t hi = next_u32();
    return (hi << 32) | lo;
  }

  // Uniform on the open interval (0, 1) with 53 bits of resolution.
  double uniform() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal by the Box-Muller transform; both outputs are used.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

  double normal(double mean, double sd) { return mean + sd * normal(); }

  // Uniform integer in [0, bound) by rejection.
  std::uint32_t below(std::uint32_t bound) {
    const std::uint32_t limit = static_cast<std::uint32_t>(-bound) % bound;
    for (;;) {
      const std::uint64_t m = static_cast<std::uint64_t>(next_u32()) * bound;
      if (static_cast<std::uint32_t>(m) >= limit) return static_cast<std::uint32_t>(m >> 32);
    }
  }

 private:
  void refill() {
    const philox::Counter ctr{static_cast<std::uint32_t>(block_),
                              static_cast<std::uint32_t>(block_ >> 32), id_, substream_};
    buffer_ = philox::block(ctr, key_);
    ++block_;
    pos_ = 0;
  }

  philox::Key key_;
  std::uint32_t id_;
  std::uint32_t substream_;
  std::uint64_t block_ = 0;
  philox::Counter buffer_{};
  int pos_ = 4;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// Child seed for run `index` under purpose `tag`; used to fan a root seed out
// to Table-1 runs and ensemble members.
inline std::uint64_t derive_seed(std::uint64_t root, std::uint32_t tag, std::uint32_t index) {
  const philox::Counter ctr{index, 0u, static_cast<std::uint32_t>(StreamId::seed_derivation), tag};
  const auto out = philox::block(
      ctr, {static_cast<std::uint32_t>(root), static_cast<std::uint32_t>(root >> 32)});
  return (static_cast<std::uint64_t>(out[1]) << 32) | out[0];
}

}  // namespace e2b
