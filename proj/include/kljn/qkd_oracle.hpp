#pragma once

#include "kljn/rng.hpp"

namespace kljn {

/// Probability that intercept-resend on n checked BB84 bits is noticed:
/// 1 - (3/4)^n.
double detection_probability(int n);

/// One intercepted block.
struct InterceptResult {
  int n_bits = 0;
  bool detected = false;
  int disturbed_count = 0;
};

enum class EveBasis {
  random,  ///< Eve measures in a uniformly random basis
  oracle,  ///< Eve always picks Alice's basis (no disturbance)
};

/// Intercept-resend on n qubits modelled as (basis, value) pairs. Eve
/// measures in her basis (a wrong basis randomizes the value) and resends in
/// her basis; Bob measures in Alice's basis and every bit is checked.
InterceptResult intercept_resend_once(int n, Xoshiro256& rng, EveBasis eve = EveBasis::random);

struct DetectionEstimate {
  int n = 0;
  long trials = 0;
  long detections = 0;
  double probability = 0.0;
  double std_error = 0.0;  ///< binomial standard error of the estimate
  double ci95 = 0.0;       ///< normal-approximation half-width
};

DetectionEstimate simulate_intercept_resend(int n, long trials, Xoshiro256& rng, EveBasis eve = EveBasis::random);

}  // namespace kljn
