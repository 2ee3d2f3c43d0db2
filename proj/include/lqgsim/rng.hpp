// Counter-based random numbers: Philox4x32-10 keyed per trajectory, so
// ensembles are reproducible bit for bit regardless of scheduling order.
#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <utility>

#include "lqgsim/common.hpp"

namespace lqgsim {

class Philox4x32 {
 public:
  Philox4x32(uint32_t key0, uint32_t key1) : key0_(key0), key1_(key1) {}

  explicit Philox4x32(uint64_t key)
      : Philox4x32(static_cast<uint32_t>(key), static_cast<uint32_t>(key >> 32)) {}

  // One 128-bit block for a 128-bit counter (high word fixed to zero here).
  std::array<uint32_t, 4> block(uint64_t counter) const {
    std::array<uint32_t, 4> x = {static_cast<uint32_t>(counter),
                                 static_cast<uint32_t>(counter >> 32), 0u, 0u};
    uint32_t k0 = key0_;
    uint32_t k1 = key1_;
    for (int round = 0; round < 10; ++round) {
      const uint64_t p0 = kMult0 * static_cast<uint64_t>(x[0]);
      const uint64_t p1 = kMult1 * static_cast<uint64_t>(x[2]);
      const uint32_t hi0 = static_cast<uint32_t>(p0 >> 32);
      const uint32_t lo0 = static_cast<uint32_t>(p0);
      const uint32_t hi1 = static_cast<uint32_t>(p1 >> 32);
      const uint32_t lo1 = static_cast<uint32_t>(p1);
      x = {hi1 ^ x[1] ^ k0, lo1, hi0 ^ x[3] ^ k1, lo0};
      k0 += kWeyl0;
      k1 += kWeyl1;
    }
    return x;
  }

 private:
  static constexpr uint64_t kMult0 = 0xD2511F53ull;
  static constexpr uint64_t kMult1 = 0xCD9E8D57ull;
  static constexpr uint32_t kWeyl0 = 0x9E3779B9u;
  static constexpr uint32_t kWeyl1 = 0xBB67AE85u;

  uint32_t key0_ = 0;
  uint32_t key1_ = 0;
};

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

// Derives one independent Philox key per (seed, stream index) pair.
inline uint64_t stream_key(uint64_t seed, uint64_t stream) {
  return splitmix64(seed ^ splitmix64(stream + 1));
}

// Standard normal pairs via Box-Muller on one Philox block per draw. The
// block counter is the draw index, so draw n is addressable in O(1).
class GaussianStream {
 public:
  GaussianStream(uint64_t seed, uint64_t stream)
      : engine_(stream_key(seed, stream)) {}

  std::pair<double, double> next_pair() {
    const std::array<uint32_t, 4> b = engine_.block(counter_++);
    const uint64_t w0 = (static_cast<uint64_t>(b[0]) << 32) | b[1];
    const uint64_t w1 = (static_cast<uint64_t>(b[2]) << 32) | b[3];
    const double u1 = (static_cast<double>(w0 >> 11) + 1.0) * 0x1.0p-53;  // (0, 1]
    const double u2 = static_cast<double>(w1 >> 11) * 0x1.0p-53;          // [0, 1)
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double phi = 2.0 * kPi * u2;
    return {r * std::cos(phi), r * std::sin(phi)};
  }

  uint64_t draws() const { return counter_; }

 private:
  Philox4x32 engine_;
  uint64_t counter_ = 0;
};

}  // namespace lqgsim
