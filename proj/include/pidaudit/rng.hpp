#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace pidaudit {

inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Counter-based generator: the i-th draw is a pure function of (key, i).
/// `split` derives an independent stream, so dropout masks for a given
/// (step, layer, site) are reproducible regardless of evaluation order.
class CounterRng {
 public:
  constexpr explicit CounterRng(std::uint64_t key = 0) : key_(splitmix64(key)) {}

  [[nodiscard]] constexpr CounterRng split(std::uint64_t stream) const {
    CounterRng child;
    child.key_ = splitmix64(key_ ^ splitmix64(stream + 0x632BE59BD9B4E019ULL));
    return child;
  }

  [[nodiscard]] constexpr std::uint64_t bits_at(std::uint64_t counter) const {
    return splitmix64(key_ + splitmix64(counter));
  }

  /// Uniform in [0, 1) with 53 random bits.
  [[nodiscard]] constexpr double uniform_at(std::uint64_t counter) const {
    return static_cast<double>(bits_at(counter) >> 11) * 0x1.0p-53;
  }

  [[nodiscard]] double normal_at(std::uint64_t counter) const {
    // Box-Muller on two derived uniforms; 1 - u keeps the log argument > 0.
    const double u1 = 1.0 - uniform_at(2 * counter);
    const double u2 = uniform_at(2 * counter + 1);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  // Sequential convenience interface.
  double uniform() { return uniform_at(next_++); }
  double normal() { return normal_at(next_++); }
  std::uint64_t next_bits() { return bits_at(next_++); }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    // Multiply-shift reduction; bias is below 2^-64 * n and irrelevant here.
    return static_cast<std::uint64_t>((static_cast<unsigned __int128>(next_bits()) * n) >> 64);
  }

 private:
  std::uint64_t key_ = 0;
  std::uint64_t next_ = 0;
};

}  // namespace pidaudit
