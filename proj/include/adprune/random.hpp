#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string_view>

namespace adprune {

// SplitMix64 finalizer. Every derived seed and every per-entity noise draw
// in the simulator goes through this, so results do not depend on the
// standard library's distribution implementations.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t hash_combine(std::uint64_t h, std::uint64_t v) noexcept {
  return mix64(h ^ mix64(v + 0x632be59bd9b4e019ULL));
}

template <typename... Keys>
constexpr std::uint64_t hash_keys(std::uint64_t seed, Keys... keys) noexcept {
  std::uint64_t h = mix64(seed);
  ((h = hash_combine(h, static_cast<std::uint64_t>(keys))), ...);
  return h;
}

// FNV-1a, for naming independent streams ("train-query", "ab-user", ...).
constexpr std::uint64_t stream_tag(std::string_view name) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : name) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

// [0, 1) with 53 random bits.
constexpr double unit_from_bits(std::uint64_t bits) noexcept {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

// Single-owner pseudo-random stream. Parallel callers derive one stream per
// work item from (seed, keys...) instead of sharing.
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed) : engine_(mix64(seed)) {}

  template <typename... Keys>
  static RandomStream derive(std::uint64_t seed, Keys... keys) {
    return RandomStream(hash_keys(seed, keys...));
  }

  std::uint64_t next_u64() { return engine_(); }
  double uniform() { return unit_from_bits(engine_()); }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Unbiased integer in [0, n); n must be > 0.
  std::uint64_t uniform_index(std::uint64_t n);
  double normal();
  bool bernoulli(double p) { return uniform() < p; }
  // Index drawn proportionally to nonnegative weights (at least one > 0).
  std::size_t discrete(std::span<const double> weights);

 private:
  std::mt19937_64 engine_;
};

}  // namespace adprune
