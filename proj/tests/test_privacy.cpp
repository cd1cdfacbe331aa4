#include "kljn/privacy.hpp"
#include "kljn/rng.hpp"

#include "doctest.h"

#include <cmath>
#include <stdexcept>

using namespace kljn;

namespace {

/// Alice's key and Eve's guesses, each guess right with probability p.
std::pair<Bits, Bits> synthetic(double p, std::size_t n, std::uint64_t seed) {
  Xoshiro256 rng(seed);
  Bits key(n), guess(n);
  for (std::size_t i = 0; i < n; ++i) {
    key[i] = rng.bit();
    guess[i] = rng.uniform() < p ? key[i] : key[i] ^ 1;
  }
  return {key, guess};
}

}  // namespace

TEST_CASE("xor_halve") {
  CHECK(xor_halve(Bits{1, 0, 1, 1}) == Bits{1, 0});
  CHECK(xor_halve(Bits(8, 0)) == Bits(4, 0));
  CHECK(xor_halve(Bits{1, 0, 1}) == Bits{1});
  CHECK_THROWS_AS(xor_halve(Bits{1}), std::invalid_argument);
}

TEST_CASE("amplify lengths") {
  const Bits k{1, 0, 1, 1, 0, 1};
  CHECK(amplify(k, 0) == k);
  CHECK(amplify(Bits(74497, 1), 2).size() == 18624);
  CHECK_THROWS_AS(amplify(Bits{1, 0, 1}, 2), std::invalid_argument);
  for (int n = 1; n <= 4; ++n) {
    std::size_t len = 1000;
    for (int s = 0; s < n; ++s) len /= 2;
    CHECK(amplify(Bits(1000, 0), n).size() == len);
  }
  const AmplificationReport r = amplification_report(Bits(74497, 0), 2, LeakModel::certainty, 0.0019);
  CHECK(r.key_len_after == 18624);
  CHECK(r.slowdown == 4);
}

TEST_CASE("predict_leak") {
  CHECK(predict_leak(0.0019, 2, LeakModel::certainty) == doctest::Approx(std::pow(0.0019, 4)));
  CHECK(predict_leak(0.0019, 2, LeakModel::certainty) < 1e-8);
  for (int n = 0; n < 5; ++n) {
    CHECK(predict_leak(1.0, n, LeakModel::certainty) == 1.0);
    CHECK(predict_leak(1.0, n, LeakModel::advantage) == 1.0);
  }
  // p = 0.75 -> p' = 0.625; as 2p - 1: 0.5 -> 0.25.
  CHECK(predict_leak(0.5, 1, LeakModel::advantage) == doctest::Approx(0.25));
  double prev = 1.0;
  for (int n = 0; n < 5; ++n) {
    const double l = predict_leak(0.3, n, LeakModel::certainty);
    CHECK(l < prev);
    prev = l;
  }
  CHECK_THROWS_AS(predict_leak(1.5, 1, LeakModel::certainty), std::invalid_argument);
  CHECK_THROWS_AS(parse_leak_model("entropy"), std::invalid_argument);
  CHECK(parse_leak_model("advantage") == LeakModel::advantage);
}

TEST_CASE("empirical_leak") {
  const auto [key, guess] = synthetic(0.75, 1 << 20, 1);
  CHECK(empirical_leak(key, key, 3) == 1.0);
  const auto [k2, random] = synthetic(0.5, 1 << 16, 2);
  CHECK(std::abs(empirical_leak(k2, random, 1)) < 4.0 / std::sqrt((1 << 15) * 1.0));
  const double p1 = (1.0 + empirical_leak(key, guess, 1)) / 2.0;
  CHECK(p1 == doctest::Approx(0.625).epsilon(0.002 / 0.625));
  CHECK_THROWS_AS(empirical_leak(Bits{1, 0}, Bits{1}, 1), std::invalid_argument);
}

TEST_CASE("hex round trip") {
  const Bits b{1, 0, 1, 1, 0, 0, 0, 1, 1, 1};
  CHECK(bits_to_hex(b) == "b1c0");
  CHECK(bits_from_hex(bits_to_hex(b), b.size()) == b);
}
