#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <random>

namespace compkern {

// Philox4x32-10 counter-based generator (Salmon et al. 2011).
// The 64-bit seed is the key; the upper half of the 128-bit counter holds a
// stream id, so (seed, stream) pairs give independent substreams without any
// shared state. Satisfies UniformRandomBitGenerator.
class Philox4x32 {
 public:
  using result_type = std::uint32_t;

  explicit Philox4x32(std::uint64_t seed = 0, std::uint64_t stream = 0) {
    key_ = {static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
    ctr_ = {0u, 0u, static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  }

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() {
    if (pos_ == 4) {
      block_ = bijection(ctr_, key_);
      if (++ctr_[0] == 0) ++ctr_[1];
      pos_ = 0;
    }
    return block_[pos_++];
  }

  // Uniform on the open interval (0, 1) with 53 random bits.
  double uniform() {
    const std::uint64_t a = (*this)() >> 5;
    const std::uint64_t b = (*this)() >> 6;
    return (static_cast<double>((a << 26) | b) + 0.5) * 0x1p-53;
  }

  // The raw keyed bijection; exposed for known-answer tests.
  static std::array<std::uint32_t, 4> bijection(std::array<std::uint32_t, 4> c,
                                                std::array<std::uint32_t, 2> k) {
    constexpr std::uint32_t M0 = 0xD2511F53u, M1 = 0xCD9E8D57u;
    constexpr std::uint32_t W0 = 0x9E3779B9u, W1 = 0xBB67AE85u;
    for (int r = 0; r < 10; ++r) {
      if (r > 0) {
        k[0] += W0;
        k[1] += W1;
      }
      const std::uint64_t p0 = std::uint64_t{M0} * c[0];
      const std::uint64_t p1 = std::uint64_t{M1} * c[2];
      c = {static_cast<std::uint32_t>(p1 >> 32) ^ c[1] ^ k[0], static_cast<std::uint32_t>(p1),
           static_cast<std::uint32_t>(p0 >> 32) ^ c[3] ^ k[1], static_cast<std::uint32_t>(p0)};
    }
    return c;
  }

 private:
  std::array<std::uint32_t, 2> key_{};
  std::array<std::uint32_t, 4> ctr_{};
  std::array<std::uint32_t, 4> block_{};
  int pos_ = 4;
};

// Stream ids are split into a purpose tag (high 16 bits) and an index, so
// different consumers of one user seed never overlap.
enum class StreamTag : std::uint64_t {
  hermite_mc = 1,
  gw_trials = 2,
  sphere_points = 3,
  sphere_packing = 4,
  bartlett = 5,
  features_dirs = 6,
  features_noise = 7,
  duality_mc = 8,
  misc = 15,
};

inline Philox4x32 substream(std::uint64_t seed, StreamTag tag, std::uint64_t index) {
  return Philox4x32(seed, (static_cast<std::uint64_t>(tag) << 48) | (index & 0xFFFFFFFFFFFFull));
}

// Standard normal draws. libstdc++'s normal_distribution (Marsaglia polar) is
// deterministic for a fixed engine, which is all reproducibility needs here.
class NormalSource {
 public:
  explicit NormalSource(Philox4x32 eng) : eng_(eng) {}
  double operator()() { return dist_(eng_); }
  double uniform() { return eng_.uniform(); }
  Philox4x32& engine() { return eng_; }

 private:
  Philox4x32 eng_;
  std::normal_distribution<double> dist_;
};

}  // namespace compkern
