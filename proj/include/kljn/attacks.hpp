#pragma once

#include "kljn/protocol.hpp"

#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace kljn {

enum class AttackKind {
  passive_ms,
  cross_correlation,
  wire_resistance,
  temperature_mismatch,
  resistor_inaccuracy,
  invasive_injection,
  mitm_splitter,
};

enum class TapPoint { end_a, mid, end_b };

std::string_view to_string(AttackKind k);
std::string_view to_string(TapPoint t);

/// Kind-specific parameters. Only the field belonging to the configured
/// kind may be set.
struct AttackParams {
  std::optional<double> r_wire_over_r_low;  ///< wire_resistance, in [0, 10]
  std::optional<double> ratio;              ///< temperature_mismatch: T_bob / T_alice, in (0, 10]
  std::optional<double> error;              ///< resistor_inaccuracy: Alice's relative error, |e| <= 0.05
  std::optional<double> amplitude;          ///< invasive_injection: RMS fraction, in [0, 10]
  std::optional<InjectionWaveform> waveform;
  std::optional<MitmMode> mode;             ///< mitm_splitter
};

struct AttackConfig {
  AttackKind kind = AttackKind::passive_ms;
  TapPoint tap_point = TapPoint::mid;
  AttackParams params;

  /// Throws std::invalid_argument for out-of-range or foreign parameters.
  void validate() const;
  /// Session configuration with this attack's scenario applied.
  SessionConfig apply(SessionConfig base) const;
  /// The kind's scalar parameter as it is reported in CSV output.
  double param_value(const SessionConfig& applied) const;
};

struct AttackReport {
  int n_trials = 0;  ///< number of scored guesses (sifted bits)
  double success_rate = 0.5;
  double ci95 = 0.5;  ///< Wilson half-width
  double ci_low = 0.0;
  double ci_high = 1.0;
  double leak_fraction = 0.0;
  double leak_mutual_info = 0.0;
  int alarms_triggered = 0;    ///< alarm events over all sessions
  int sessions = 0;
  int sessions_alarmed = 0;
  int bits_extracted_before_alarm = 0;
  std::vector<Eigen::Index> alarm_latencies;  ///< first alarm, samples since session start

  bool ci_contains(double p) const { return ci_low <= p && p <= ci_high; }
};

/// Eve's call on one sifted period.
struct Guess {
  BitState state = BitState::LH;
  double statistic = 0.0;
  std::uint8_t key_bit() const { return kljn::key_bit(state); }
};

// Decision signs. Positive values mean "Alice holds R_H" (HL). They are
// fixed against the closed-form loop in tests/test_attacks.cpp.
inline constexpr int kCrossCorrelationSign = +1;  ///< mean(u_mid * i) at the midpoint of a resistive wire
inline constexpr int kWireResistanceSign = +1;    ///< MS(u_end_a) - MS(u_end_b)
inline constexpr int kInjectionResponseSign = -1; ///< mean(i_inj * (i_b - i_a))

/// Channel voltage/current as seen at a tap point.
Trace tap(const TraceEnds& ends, TapPoint point);

/// Compares MS(u) with the public mixed level; above means HL. Carries no
/// information in an ideal loop, which is the point of the null test.
Guess eve_passive_ms(const Trace& trace, const ExpectedLevels& levels);

/// Sign of mean(u * i).
Guess eve_cross_correlation(const Trace& trace);

/// Sign of MS(u_end_a) - MS(u_end_b).
Guess eve_wire_resistance(const TraceEnds& ends);

/// Expected (LH, HL) mean squares when per-party temperatures and
/// resistances are known to Eve.
struct HypothesisLevels {
  std::array<double, 2> ms_u{};
  std::array<double, 2> ms_i{};
};

HypothesisLevels mismatch_levels(const SessionConfig& cfg);

/// Picks the hypothesis whose expected levels are closer in log distance.
Guess eve_temperature_mismatch(const Trace& trace, const HypothesisLevels& hyp);
Guess eve_resistor_inaccuracy(const Trace& trace, const HypothesisLevels& hyp);

/// Uses how Eve's own injected current splits between the two sides.
Guess eve_injection_response(const TraceEnds& ends, const Signal* injection);

/// In splitter mode Eve terminates Bob's side herself and reads his level.
Guess eve_splitter(const TraceEnds& ends, double r_eve_b, const SessionConfig& cfg);

/// Success rate, Wilson 95% interval and both leak measures.
AttackReport summarize(const Bits& guesses, const Bits& truth);

/// Binary entropy in bits.
double binary_entropy(double p);

struct AttackRun {
  AttackReport report;
  Bits guesses;
  Bits truth;
  SessionResult session;
};

/// One session under attack; Eve scores each sifted bit from published data.
AttackRun run_attack(const SessionConfig& base, const SessionSeeds& seeds, const AttackConfig& attack);

/// Pools several runs into one report (guesses concatenated).
AttackReport pool_runs(std::span<const AttackRun> runs);

AttackReport eve_invasive_injection(const SessionConfig& base, const Injection& injection,
                                    std::span<const SessionSeeds> trials);

AttackReport eve_mitm_splitter(const SessionConfig& base, MitmMode mode, std::span<const SessionSeeds> trials);

}  // namespace kljn
