#pragma once

#include "kljn/types.hpp"

#include <optional>
#include <string>
#include <string_view>

namespace kljn {

/// Pairwise XOR: out[i] = key[2i] ^ key[2i+1]; an odd trailing bit is dropped.
Bits xor_halve(const Bits& key);

/// `steps` rounds of xor_halve.
Bits amplify(const Bits& key, int steps);

/// How Eve's knowledge of a raw bit is modelled.
///
/// certainty: a fraction of bits is known exactly, the rest not at all; an
///            amplified bit is known only if both parents were.
/// advantage: every bit is guessed right with probability 1/2 + d; the XOR
///            of two such guesses is right with p^2 + (1-p)^2, i.e. d -> 2d^2.
enum class LeakModel { certainty, advantage };

std::string_view to_string(LeakModel m);
LeakModel parse_leak_model(std::string_view s);

/// Leak after `steps` rounds. Input and output are the fraction-equivalent
/// leak 2p - 1 in [0, 1] (for the certainty model this is the known fraction).
double predict_leak(double initial, int steps, LeakModel model);

/// Eve's guessing advantage 2p' - 1 after amplifying both streams.
double empirical_leak(const Bits& alice_key, const Bits& eve_guesses, int steps);

struct AmplificationReport {
  int steps = 0;
  std::size_t key_len_before = 0;
  std::size_t key_len_after = 0;
  LeakModel model = LeakModel::certainty;
  double predicted_leak = 0.0;
  std::optional<double> empirical_leak;
  std::size_t slowdown = 1;
};

AmplificationReport amplification_report(const Bits& key, int steps, LeakModel model, double initial_leak,
                                         const Bits* eve_guesses = nullptr);

/// Bits packed MSB-first into bytes, lower-case hex. The bit count travels
/// separately because the last byte may be partial.
std::string bits_to_hex(const Bits& bits);
Bits bits_from_hex(std::string_view hex, std::size_t n_bits);

}  // namespace kljn
