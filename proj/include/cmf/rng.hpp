#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>

namespace cmf {

/// SplitMix64 finalizer. All randomness in the library is derived from this
/// mixer so that results are identical across platforms and standard
/// libraries.
inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Derive a child seed from a parent seed and an integer tag.
inline constexpr std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t tag) {
  return splitmix64(splitmix64(seed) ^ splitmix64(tag + 0x632be59bd9b4e019ULL));
}

/// Derive a child seed from a parent seed and a string tag (FNV-1a).
inline constexpr std::uint64_t mix_seed(std::uint64_t seed, std::string_view tag) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : tag) {
    h ^= static_cast<std::uint64_t>(static_cast<unsigned char>(c));
    h *= 0x100000001b3ULL;
  }
  return mix_seed(seed, h);
}

/// Uniform in [0, 1) addressed by (seed, i, j). Counter-based: the value of an
/// entry's draw does not depend on the order entries are visited.
inline double entry_u01(std::uint64_t seed, std::uint64_t i, std::uint64_t j) {
  const std::uint64_t h = splitmix64(splitmix64(splitmix64(seed) + i) + j);
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

/// Sequential pseudo-random stream (counter + SplitMix64).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : counter_(splitmix64(seed)) {}

  std::uint64_t next_u64() { return splitmix64(counter_++); }

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform in (0, 1]; safe as a log argument.
  double uniform_pos() {
    return (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
  }

  /// Standard normal via Box-Muller (cosine branch only, for a stateless
  /// one-draw-per-call stream).
  double normal() {
    const double u1 = uniform_pos();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * std::numbers::pi * u2);
  }

  bool bernoulli(double prob) { return uniform() < prob; }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    // Rejection-free modulo is fine here: n is tiny compared to 2^64.
    return next_u64() % n;
  }

 private:
  std::uint64_t counter_;
};

}  // namespace cmf
