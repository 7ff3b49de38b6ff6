#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>

namespace crt {

// SplitMix64 output function.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Folds a list of words into one stream key; order matters.
constexpr std::uint64_t stream_key(std::initializer_list<std::uint64_t> parts) {
  std::uint64_t h = 0x243f6a8885a308d3ULL;
  for (auto p : parts) h = mix64(h ^ mix64(p + 0x632be59bd9b4e019ULL));
  return h;
}

// Counter-based generator: output k is mix64(key + k * golden), so a stream is
// fully determined by its key and never depends on other streams.
class CounterRng {
 public:
  using result_type = std::uint64_t;
  explicit CounterRng(std::uint64_t key) : key_(key) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return ~result_type{0}; }

  result_type operator()() {
    ++counter_;
    return mix64(key_ + counter_ * 0x9e3779b97f4a7c15ULL);
  }

  // [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, n).
  std::size_t below(std::size_t n) {
    if (n <= 1) return 0;
    const std::uint64_t limit = max() - max() % n;
    std::uint64_t x;
    do {
      x = (*this)();
    } while (x >= limit);
    return static_cast<std::size_t>(x % n);
  }

  bool coin() { return ((*this)() >> 63) != 0; }

  // Index drawn from an unnormalized probability vector.
  template <class Vec>
  std::size_t categorical(const Vec& w) {
    double total = 0;
    for (auto x : w) total += x;
    double u = uniform() * total;
    std::size_t last = 0;
    for (std::size_t k = 0; k < static_cast<std::size_t>(w.size()); ++k) {
      if (w[k] <= 0) continue;
      last = k;
      if (u < w[k]) return k;
      u -= w[k];
    }
    return last;
  }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace crt
