#include "kljn/qkd_oracle.hpp"

#include "doctest.h"

#include <cmath>
#include <stdexcept>

using namespace kljn;

TEST_CASE("detection probability") {
  CHECK(detection_probability(0) == 0.0);
  CHECK(detection_probability(1) == 0.25);
  CHECK(detection_probability(2) == 0.4375);
  CHECK(detection_probability(10) == doctest::Approx(1.0 - std::pow(0.75, 10)));
  CHECK_THROWS_AS(detection_probability(-1), std::invalid_argument);
}

TEST_CASE("single-bit intercept-resend") {
  Xoshiro256 rng(1);
  const DetectionEstimate e = simulate_intercept_resend(1, 1000000, rng);
  CHECK(std::abs(e.probability - 0.25) < 0.0015);
  CHECK(e.detections <= e.trials);
}

TEST_CASE("ten-bit intercept-resend") {
  Xoshiro256 rng(2);
  const DetectionEstimate e = simulate_intercept_resend(10, 100000, rng);
  CHECK(std::abs(e.probability - detection_probability(10)) < 0.003);
  CHECK(std::abs(e.probability - detection_probability(10)) < 4.0 * e.std_error);
}

TEST_CASE("oracle basis is never detected") {
  Xoshiro256 rng(3);
  const DetectionEstimate e = simulate_intercept_resend(10, 10000, rng, EveBasis::oracle);
  CHECK(e.detections == 0);
  const InterceptResult one = intercept_resend_once(50, rng, EveBasis::oracle);
  CHECK(one.disturbed_count == 0);
  CHECK_FALSE(one.detected);
}

TEST_CASE("disturbed count is bounded by n") {
  Xoshiro256 rng(4);
  for (int i = 0; i < 100; ++i) {
    const InterceptResult r = intercept_resend_once(8, rng);
    CHECK(r.disturbed_count <= r.n_bits);
    CHECK(r.detected == (r.disturbed_count > 0));
  }
}
