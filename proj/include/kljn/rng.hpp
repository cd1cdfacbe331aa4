#pragma once

#include <array>
#include <cstdint>
#include <initializer_list>
#include <limits>

namespace kljn {

/// SplitMix64 step. Used only to expand seeds into generator state.
std::uint64_t splitmix64(std::uint64_t& state);

/// Hashes an ordered tuple of 64-bit words into one seed.
std::uint64_t derive_seed(std::initializer_list<std::uint64_t> words);

/// xoshiro256** 1.0 (Blackman & Vigna), seeded through SplitMix64.
///
/// This is the only generator in the project. Gaussian variates come from
/// the Box-Muller transform on 53-bit uniforms, so every draw sequence is
/// fixed by the seed and independent of the standard library in use.
class Xoshiro256 {
 public:
  using result_type = std::uint64_t;

  explicit Xoshiro256(std::uint64_t seed = 0);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()();

  /// Uniform on [0, 1) with 53 bits of resolution.
  double uniform();
  /// Fair coin.
  bool bit() { return ((*this)() >> 63) != 0; }
  /// Standard normal pair from one Box-Muller evaluation.
  std::array<double, 2> normal_pair();
  /// Standard normal; caches the second half of each Box-Muller pair.
  double normal();

 private:
  std::array<std::uint64_t, 4> s_{};
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// Named streams. A stream is keyed by (seed, tag) so that each party draws
/// from its own sequence regardless of what the others consume.
enum class Stream : std::uint64_t {
  alice_choice = 0xA11CE001,
  alice_noise = 0xA11CE002,
  bob_choice = 0xB0B00001,
  bob_noise = 0xB0B00002,
  eve = 0xE7E00001,
  eve_noise_a = 0xE7E00002,
  eve_noise_b = 0xE7E00003,
  harness = 0x4A550001,
  transport = 0x7A450001,
};

inline Xoshiro256 make_stream(std::uint64_t seed, Stream tag) {
  return Xoshiro256(derive_seed({seed, static_cast<std::uint64_t>(tag)}));
}

}  // namespace kljn
