#ifndef FDSE_RNG_HPP
#define FDSE_RNG_HPP

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace fdse {

/// 64-bit FNV-1a over a byte string.
constexpr std::uint64_t fnv1a64(std::string_view bytes,
                                std::uint64_t h = 0xcbf29ce484222325ULL) noexcept {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Per-item seed: hash(seed, id). Output depends only on the pair, never on
/// processing order.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::string_view id) noexcept {
  return splitmix64(seed ^ fnv1a64(id));
}

constexpr std::uint64_t derive_seed(std::uint64_t seed, std::string_view id,
                                    std::string_view stream) noexcept {
  return splitmix64(derive_seed(seed, id) ^ fnv1a64(stream));
}

/// Seeded generator with platform-independent draws. std::mt19937_64 output is
/// fixed by the standard; the std distributions are not, so draws are derived
/// here directly from the raw 64-bit words.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1).
  double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform in [lo, hi); returns lo when lo == hi.
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  /// Uniform integer in [lo, hi] inclusive.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    if (hi <= lo) return lo;
    const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
    // Lemire's multiply-shift; bias is below 2^-64 * span.
    const unsigned __int128 m = static_cast<unsigned __int128>(engine_()) * span;
    return lo + static_cast<std::int64_t>(m >> 64);
  }

  bool bernoulli(double p) { return uniform01() < p; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace fdse

#endif  // FDSE_RNG_HPP
