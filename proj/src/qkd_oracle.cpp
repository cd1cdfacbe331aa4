#include "kljn/qkd_oracle.hpp"

#include <cmath>
#include <stdexcept>

namespace kljn {

double detection_probability(int n) {
  if (n < 0) throw std::invalid_argument("detection_probability: negative bit count");
  return 1.0 - std::pow(0.75, n);
}

InterceptResult intercept_resend_once(int n, Xoshiro256& rng, EveBasis eve) {
  InterceptResult r;
  r.n_bits = n;
  for (int k = 0; k < n; ++k) {
    const bool alice_basis = rng.bit();
    const bool alice_value = rng.bit();
    const bool eve_basis = eve == EveBasis::oracle ? alice_basis : rng.bit();
    const bool eve_value = eve_basis == alice_basis ? alice_value : rng.bit();
    // Resent in Eve's basis, measured by Bob in Alice's basis.
    const bool bob_value = eve_basis == alice_basis ? eve_value : rng.bit();
    if (bob_value != alice_value) ++r.disturbed_count;
  }
  r.detected = r.disturbed_count > 0;
  return r;
}

DetectionEstimate simulate_intercept_resend(int n, long trials, Xoshiro256& rng, EveBasis eve) {
  if (n < 0) throw std::invalid_argument("simulate_intercept_resend: negative bit count");
  if (trials < 1) throw std::invalid_argument("simulate_intercept_resend: trials must be >= 1");
  DetectionEstimate e;
  e.n = n;
  e.trials = trials;
  for (long t = 0; t < trials; ++t) e.detections += intercept_resend_once(n, rng, eve).detected;
  e.probability = static_cast<double>(e.detections) / static_cast<double>(trials);
  e.std_error = std::sqrt(e.probability * (1.0 - e.probability) / static_cast<double>(trials));
  e.ci95 = 1.959963984540054 * e.std_error;
  return e;
}

}  // namespace kljn
