#include "kljn/privacy.hpp"

#include <cmath>
#include <stdexcept>

namespace kljn {

Bits xor_halve(const Bits& key) {
  if (key.size() < 2) throw std::invalid_argument("xor_halve: key shorter than 2 bits");
  Bits out(key.size() / 2);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (key[2 * i] ^ key[2 * i + 1]) & 1;
  return out;
}

Bits amplify(const Bits& key, int steps) {
  if (steps < 0) throw std::invalid_argument("amplify: negative step count");
  if (steps >= 63 || key.size() < (std::size_t{1} << steps))
    throw std::invalid_argument("amplify: key exhausted before the requested number of steps");
  Bits out = key;
  for (int s = 0; s < steps; ++s) out = xor_halve(out);
  return out;
}

std::string_view to_string(LeakModel m) { return m == LeakModel::certainty ? "certainty" : "advantage"; }

LeakModel parse_leak_model(std::string_view s) {
  if (s == "certainty") return LeakModel::certainty;
  if (s == "advantage") return LeakModel::advantage;
  throw std::invalid_argument("unknown leak model: " + std::string(s));
}

double predict_leak(double initial, int steps, LeakModel model) {
  if (!(initial >= 0.0 && initial <= 1.0)) throw std::invalid_argument("predict_leak: initial leak must be in [0, 1]");
  if (steps < 0) throw std::invalid_argument("predict_leak: negative step count");
  switch (model) {
    case LeakModel::certainty: {
      double known = initial;
      for (int s = 0; s < steps; ++s) known *= known;
      return known;
    }
    case LeakModel::advantage: {
      double adv = initial / 2.0;  // p - 1/2
      for (int s = 0; s < steps; ++s) adv = 2.0 * adv * adv;
      return 2.0 * adv;
    }
  }
  throw std::invalid_argument("predict_leak: invalid model");
}

double empirical_leak(const Bits& alice_key, const Bits& eve_guesses, int steps) {
  if (alice_key.size() != eve_guesses.size()) throw std::invalid_argument("empirical_leak: length mismatch");
  const Bits a = amplify(alice_key, steps);
  const Bits e = amplify(eve_guesses, steps);
  std::size_t agree = 0;
  for (std::size_t i = 0; i < a.size(); ++i) agree += a[i] == e[i];
  const double p = static_cast<double>(agree) / static_cast<double>(a.size());
  return 2.0 * p - 1.0;
}

AmplificationReport amplification_report(const Bits& key, int steps, LeakModel model, double initial_leak,
                                         const Bits* eve_guesses) {
  AmplificationReport r;
  r.steps = steps;
  r.model = model;
  r.key_len_before = key.size();
  r.key_len_after = amplify(key, steps).size();
  r.predicted_leak = predict_leak(initial_leak, steps, model);
  if (eve_guesses) r.empirical_leak = empirical_leak(key, *eve_guesses, steps);
  r.slowdown = std::size_t{1} << steps;
  return r;
}

std::string bits_to_hex(const Bits& bits) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string out;
  out.reserve((bits.size() + 7) / 8 * 2);
  for (std::size_t i = 0; i < bits.size(); i += 8) {
    unsigned byte = 0;
    for (std::size_t j = 0; j < 8; ++j) {
      byte <<= 1;
      if (i + j < bits.size()) byte |= bits[i + j] & 1u;
    }
    out.push_back(digits[byte >> 4]);
    out.push_back(digits[byte & 0xF]);
  }
  return out;
}

Bits bits_from_hex(std::string_view hex, std::size_t n_bits) {
  if (hex.size() != (n_bits + 7) / 8 * 2)
    throw std::invalid_argument("bits_from_hex: hex length does not match bit count");
  auto nibble = [](char c) -> unsigned {
    if (c >= '0' && c <= '9') return static_cast<unsigned>(c - '0');
    if (c >= 'a' && c <= 'f') return static_cast<unsigned>(c - 'a' + 10);
    if (c >= 'A' && c <= 'F') return static_cast<unsigned>(c - 'A' + 10);
    throw std::invalid_argument("bits_from_hex: invalid hex digit");
  };
  Bits out(n_bits);
  for (std::size_t i = 0; i < n_bits; ++i) {
    const unsigned byte = nibble(hex[i / 8 * 2]) << 4 | nibble(hex[i / 8 * 2 + 1]);
    out[i] = (byte >> (7 - i % 8)) & 1u;
  }
  return out;
}

}  // namespace kljn
