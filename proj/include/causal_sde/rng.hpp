#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace causal_sde {

// Philox4x32-10 counter-based generator (Salmon, Moraes, Dror, Shaw, SC'11).
namespace philox {

using Counter = std::array<std::uint32_t, 4>;
using Key = std::array<std::uint32_t, 2>;

inline constexpr std::uint32_t kMulA = 0xD2511F53;
inline constexpr std::uint32_t kMulB = 0xCD9E8D57;
inline constexpr std::uint32_t kWeylA = 0x9E3779B9;
inline constexpr std::uint32_t kWeylB = 0xBB67AE85;

constexpr Counter single_round(const Counter& ctr, const Key& key) {
  const std::uint64_t prod_a = static_cast<std::uint64_t>(kMulA) * ctr[0];
  const std::uint64_t prod_b = static_cast<std::uint64_t>(kMulB) * ctr[2];
  const auto hi_a = static_cast<std::uint32_t>(prod_a >> 32);
  const auto lo_a = static_cast<std::uint32_t>(prod_a);
  const auto hi_b = static_cast<std::uint32_t>(prod_b >> 32);
  const auto lo_b = static_cast<std::uint32_t>(prod_b);
  return {hi_b ^ ctr[1] ^ key[0], lo_b, hi_a ^ ctr[3] ^ key[1], lo_a};
}

constexpr Counter philox4x32_10(Counter ctr, Key key) {
  for (int r = 0; r < 10; ++r) {
    if (r > 0) {
      key[0] += kWeylA;
      key[1] += kWeylB;
    }
    ctr = single_round(ctr, key);
  }
  return ctr;
}

}  // namespace philox

/// Identifies one independent random stream: stream(seed, index, sub).
/// Monte Carlo paths use (seed, path, step); other consumers pick their own
/// index space via a distinct seed tag.
struct StreamId {
  std::uint64_t seed = 0;
  std::uint64_t index = 0;
  std::uint32_t sub = 0;
};

// Seed tags separating stream families that share a user seed.
inline constexpr std::uint64_t kPermutationTag = 0x5045524D55544154ULL;
inline constexpr std::uint64_t kSecondSampleTag = 0x5345434F4E445F42ULL;

/// Sequential draws from one counter-based stream. Cheap to construct; the
/// state is the stream id plus a block counter, so draws depend only on the
/// id and not on scheduling.
class Stream {
 public:
  explicit Stream(StreamId id) : key_{lo(id.seed), hi(id.seed)} {
    ctr_ = {0, id.sub, lo(id.index), hi(id.index)};
  }
  Stream(std::uint64_t seed, std::uint64_t index, std::uint32_t sub)
      : Stream(StreamId{seed, index, sub}) {}

  std::uint32_t next_u32() {
    if (used_ == 4) refill();
    return block_[used_++];
  }

  /// Uniform on the open interval (0, 1) with 53 random bits.
  double uniform() {
    const std::uint64_t a = next_u32() >> 5;
    const std::uint64_t b = next_u32() >> 6;
    const std::uint64_t bits = (a << 26) | b;
    return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
  }

  /// Standard normal via Box-Muller; the second variate of each pair is kept.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  /// Poisson(mean) by sequential inversion. exp_neg_mean = exp(-mean) may be
  /// passed in when the caller has it cached.
  std::uint64_t poisson(double mean, double exp_neg_mean) {
    if (mean <= 0.0) return 0;
    if (mean > kMaxInversionMean) {
      // Sum of independent Poisson pieces, each small enough for inversion.
      const auto pieces = static_cast<std::uint64_t>(std::ceil(mean / kMaxInversionMean));
      const double piece_mean = mean / static_cast<double>(pieces);
      const double piece_exp = std::exp(-piece_mean);
      std::uint64_t total = 0;
      for (std::uint64_t i = 0; i < pieces; ++i) total += poisson(piece_mean, piece_exp);
      return total;
    }
    const double u = uniform();
    double prob = exp_neg_mean;
    double cdf = prob;
    std::uint64_t k = 0;
    while (u > cdf) {
      ++k;
      prob *= mean / static_cast<double>(k);
      const double next = cdf + prob;
      if (next == cdf) break;  // tail exhausted in double precision
      cdf = next;
    }
    return k;
  }
  std::uint64_t poisson(double mean) { return poisson(mean, std::exp(-mean)); }

 private:
  static constexpr double kMaxInversionMean = 32.0;

  static constexpr std::uint32_t lo(std::uint64_t v) { return static_cast<std::uint32_t>(v); }
  static constexpr std::uint32_t hi(std::uint64_t v) { return static_cast<std::uint32_t>(v >> 32); }

  void refill() {
    block_ = philox::philox4x32_10(ctr_, key_);
    ++ctr_[0];
    used_ = 0;
  }

  philox::Key key_;
  philox::Counter ctr_{};
  philox::Counter block_{};
  int used_ = 4;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace causal_sde
