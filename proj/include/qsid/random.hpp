#pragma once

// Counter-based random numbers (Philox4x32-10) and the handful of
// distributions the simulator needs. Distributions are implemented here
// rather than taken from <random> because the standard library leaves their
// algorithms unspecified, and traces must be bit-reproducible from a seed.

#include <array>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <numbers>

namespace qsid {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

/// Philox4x32 with 10 rounds. Satisfies UniformRandomBitGenerator.
class Philox {
 public:
  using result_type = std::uint64_t;
  static constexpr const char* name = "philox4x32-10";

  explicit Philox(std::uint64_t key = 0) {
    key_[0] = static_cast<std::uint32_t>(key);
    key_[1] = static_cast<std::uint32_t>(key >> 32);
  }

  /// Independent stream derived from a root seed and a list of tags
  /// (system index, stage, initial state, ...).
  static Philox stream(std::uint64_t root, std::initializer_list<std::uint64_t> tags) {
    std::uint64_t k = splitmix64(root);
    for (auto t : tags) k = splitmix64(k ^ splitmix64(t + 0x632BE59BD9B4E019ull));
    return Philox(k);
  }

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  using Block = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  /// The raw bijection: one 128-bit output block per (counter, key).
  static Block block(Block c, Key k) {
    for (int round = 0; round < 10; ++round) {
      std::uint32_t hi0, lo0, hi1, lo1;
      mulhilo(0xD2511F53u, c[0], hi0, lo0);
      mulhilo(0xCD9E8D57u, c[2], hi1, lo1);
      c = {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
      k[0] += 0x9E3779B9u;
      k[1] += 0xBB67AE85u;
    }
    return c;
  }

  result_type operator()() {
    if (pos_ >= 2) {
      block_ = block(counter_, key_);
      increment();
      pos_ = 0;
    }
    const auto lo = block_[2 * pos_];
    const auto hi = block_[2 * pos_ + 1];
    ++pos_;
    return (static_cast<std::uint64_t>(hi) << 32) | lo;
  }

  /// Uniform double on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  /// Uniform double on (0, 1].
  double uniform_open0() { return static_cast<double>(((*this)() >> 11) + 1) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal by Box-Muller; no cached spare so the stream position
  /// depends only on the number of calls.
  double normal() {
    const double u1 = uniform_open0();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  /// Exact Binomial(n, p) draw by counting Bernoulli trials.
  std::int64_t binomial(std::int64_t n, double p) {
    if (n <= 0 || p <= 0.0) return 0;
    if (p >= 1.0) return n;
    std::int64_t hits = 0;
    for (std::int64_t i = 0; i < n; ++i) hits += uniform() < p ? 1 : 0;
    return hits;
  }

 private:
  static void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
    const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
    hi = static_cast<std::uint32_t>(p >> 32);
    lo = static_cast<std::uint32_t>(p);
  }

  void increment() {
    for (auto& w : counter_)
      if (++w != 0) break;
  }

  Key key_{};
  Block counter_{};
  Block block_{};
  int pos_ = 2;
};

}  // namespace qsid
