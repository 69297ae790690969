#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace qpns {

// Philox4x32-10 counter-based generator. Every draw is a pure function of
// (key, counter), so any trajectory/step/direction can be addressed directly
// without sequential state.
class Philox4x32 {
 public:
  using Counter = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  static constexpr Counter generate(Counter ctr, Key key) {
    for (int round = 0; round < 10; ++round) {
      ctr = single_round(ctr, key);
      key[0] += kWeyl0;
      key[1] += kWeyl1;
    }
    return ctr;
  }

 private:
  static constexpr std::uint32_t kMul0 = 0xD2511F53u;
  static constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
  static constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
  static constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

  static constexpr Counter single_round(const Counter& c, const Key& k) {
    const std::uint64_t p0 = std::uint64_t{kMul0} * c[0];
    const std::uint64_t p1 = std::uint64_t{kMul1} * c[2];
    const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
    const auto lo0 = static_cast<std::uint32_t>(p0);
    const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
    const auto lo1 = static_cast<std::uint32_t>(p1);
    return {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
  }
};

// Stream tags separate independent uses of one master seed.
enum class StreamTag : std::uint32_t {
  kForwardIncrements = 0,
  kBackwardIncrements = 1,
  kInitialState = 2,
  kRandomField = 3,
  kSampling = 4,
  kPerturbation = 5,
};

// Addressable source of uniforms and standard normals keyed by a 64-bit seed.
class CounterRng {
 public:
  explicit constexpr CounterRng(std::uint64_t seed)
      : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)} {}

  // Two uniforms in (0, 1) with 53-bit resolution.
  std::array<double, 2> uniform2(StreamTag tag, std::uint64_t a, std::uint64_t b,
                                 std::uint32_t c) const {
    const Philox4x32::Counter ctr{
        static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32),
        static_cast<std::uint32_t>(b),
        (c & 0xFFFFu) | ((static_cast<std::uint32_t>(tag) & 0xFFu) << 16) |
            ((static_cast<std::uint32_t>(b >> 32) & 0xFFu) << 24)};
    const auto r = Philox4x32::generate(ctr, key_);
    return {to_unit(r[0], r[1]), to_unit(r[2], r[3])};
  }

  double uniform(StreamTag tag, std::uint64_t a, std::uint64_t b, std::uint32_t c) const {
    return uniform2(tag, a, b, c)[0];
  }

  // Standard normal via Box-Muller on one counter.
  double normal(StreamTag tag, std::uint64_t a, std::uint64_t b, std::uint32_t c) const {
    const auto u = uniform2(tag, a, b, c);
    return std::sqrt(-2.0 * std::log(u[0])) * std::cos(2.0 * std::numbers::pi * u[1]);
  }

  std::uint64_t seed() const {
    return std::uint64_t{key_[0]} | (std::uint64_t{key_[1]} << 32);
  }

 private:
  static constexpr double to_unit(std::uint32_t hi, std::uint32_t lo) {
    const std::uint64_t bits = (std::uint64_t{hi >> 5} << 26) | (lo >> 6);
    return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
  }

  Philox4x32::Key key_;
};

// splitmix64 finalizer, used to derive child seeds.
constexpr std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t salt) {
  return mix_seed(seed ^ mix_seed(salt));
}

}  // namespace qpns
