#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <utility>

namespace kinface {

// Mixes a seed with a stream tag so sub-generators stay decorrelated.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/**
 * Deterministic random stream.
 *
 * The engine is std::mt19937_64, whose output sequence is fixed by the
 * standard. The standard distributions are implementation-defined, so all
 * conversions to reals, bits and indices are done here to keep streams
 * identical across standard libraries.
 */
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const noexcept { return seed_; }

  std::uint64_t next_u64() { return engine_(); }

  // Uniform on [0, 1) with 53 bits of resolution.
  double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  bool bernoulli(double p = 0.5) { return uniform01() < p; }

  // Uniform on {0, ..., n-1}; rejection sampling avoids modulo bias.
  std::uint64_t index(std::uint64_t n) {
    if (n <= 1) return 0;
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return x % n;
  }

  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::swap(items[i - 1], items[index(i)]);
    }
  }

  // Independent generator for a named sub-stream.
  SeededRng fork(std::uint64_t stream) const { return SeededRng(splitmix64(seed_ ^ splitmix64(stream))); }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

}  // namespace kinface
