#pragma once

#include "kljn/circuit.hpp"
#include "kljn/noise.hpp"

#include <array>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string_view>
#include <vector>

namespace kljn {

/// Resistor configuration of one clock period; first letter is Alice.
enum class BitState { LL, LH, HL, HH };

inline BitState bit_state(bool alice_high, bool bob_high) {
  if (alice_high) return bob_high ? BitState::HH : BitState::HL;
  return bob_high ? BitState::LH : BitState::LL;
}
inline bool is_secure(BitState s) { return s == BitState::LH || s == BitState::HL; }
/// Shared key bit of a secure period: Bob's resistor, H -> 1.
inline std::uint8_t key_bit(BitState s) { return s == BitState::LH ? 1 : 0; }
std::string_view to_string(BitState s);

/// Band of a measured mean square: LL pair, mixed (LH/HL) pair, HH pair.
enum class Level { low, mixed, high };

enum class DecisionStatistic { voltage, current, both };

/// Expected mean squares for the resistor pairs (LL, mixed, HH). Voltage
/// levels ascend, current levels descend.
struct ExpectedLevels {
  std::array<double, 3> ms_u{};
  std::array<double, 3> ms_i{};
};

ExpectedLevels expected_levels(const ResistorPair& resistors, const NoiseConfig& noise);

/// Band containing ms. Thresholds are geometric means of adjacent levels;
/// `levels` is ordered (LL, mixed, HH) and may be ascending or descending.
Level classify_level(double ms, const std::array<double, 3>& levels);

// ---------------------------------------------------------------------------
// Alarm: instantaneous comparison of the data published at both ends.

/// Reference magnitudes that residuals are measured against.
struct AlarmScale {
  double u_ref = 1.0;
  double i_ref = 1.0;
};

/// Public reference: RMS of the lowest expected voltage and current levels.
AlarmScale alarm_scale(const ExpectedLevels& levels);

struct AlarmEvent {
  int bit_index = 0;
  Eigen::Index sample_index = 0;
  double deviation = 0.0;  ///< residual / reference at the offending sample
};

/// Per-sample model-consistency check of published end data.
///
/// From the public wire model each party reconstructs the midpoint voltage
/// from both ends (u_end - i * r_wire/2). The two reconstructions must agree
/// (Kirchhoff loop), and the net current into the midpoint must match the
/// capacitor charge (zero when c_eff = 0). Any residual above
/// tol_rel * reference raises an alarm. Stateful across chunks so that
/// streamed blocks give the same result as a whole bit period.
class AlarmMonitor {
 public:
  AlarmMonitor(const WireModel& wire, double dt, double tol_rel, AlarmScale scale);

  /// Start of a new bit period (capacitor discharged).
  void reset();

  /// Checks one chunk; `offset` is the chunk's first sample index within the
  /// bit. Returns the first offending sample, if any.
  std::optional<AlarmEvent> feed(const Signal& u_end_a, const Signal& i_a, const Signal& u_end_b,
                                 const Signal& i_b, Eigen::Index offset = 0);

 private:
  double half_wire_, c_, dt_, tol_;
  AlarmScale scale_;
  bool started_ = false;
  double v_prev_ = 0.0, ic_prev_ = 0.0;
};

/// Whole-record check with the record's own RMS as reference. At most one
/// event (the first offending sample) is returned.
std::vector<AlarmEvent> check_alarm(const TraceEnds& ends, const WireModel& wire, double tol_rel);

/// Whole-record check against an explicit reference scale.
std::optional<AlarmEvent> check_alarm(const TraceEnds& ends, const WireModel& wire, double tol_rel,
                                      const AlarmScale& scale, int bit_index = 0);

// ---------------------------------------------------------------------------
// Session.

enum class InjectionWaveform { gaussian, sine, dc };

/// External current source at the wire midpoint (invasive Eve).
struct Injection {
  double amplitude_frac = 0.0;  ///< RMS relative to the mixed-state channel current RMS
  InjectionWaveform waveform = InjectionWaveform::gaussian;
  double sine_freq_hz = 100.0;

  bool active() const { return amplitude_frac > 0.0; }
};

/// none: intact wire. splitter: Eve cuts the wire and terminates each side
/// with her own KLJN resistor and generator. relay: Eve cuts the wire and
/// reconnects it unchanged (the control case; physically the intact wire).
enum class MitmMode { none, splitter, relay };

struct SessionConfig {
  int n_bits = 1000;
  NoiseConfig noise;
  ResistorPair resistors;
  WireModel wire;
  double alarm_tol_rel = 1e-6;
  DecisionStatistic decision_stat = DecisionStatistic::voltage;

  // Non-idealities and scenario knobs.
  double alice_temp_scale = 1.0;
  double bob_temp_scale = 1.0;
  double alice_resistor_error = 0.0;  ///< relative error of both of Alice's resistors
  double bob_resistor_error = 0.0;
  int quantizer_bits = 0;             ///< 0 disables quantization of published data
  double quantizer_range_rms = 5.0;   ///< full scale = +/- this many mixed-state RMS
  bool abort_on_alarm = true;
  bool oracle_levels = false;         ///< replace measured statistics by exact expected levels
  Injection injection;
  MitmMode mitm = MitmMode::none;

  void validate() const;

  double alice_resistance(bool high) const { return resistors.pick(high) * (1.0 + alice_resistor_error); }
  double bob_resistance(bool high) const { return resistors.pick(high) * (1.0 + bob_resistor_error); }
  /// Samples discarded at the start of each bit before statistics (public,
  /// worst case over resistor choices).
  Eigen::Index warmup_samples() const;
  /// True when the loop needs the full non-ideal integrator.
  bool needs_nonideal_solver() const { return !wire.ideal() || injection.active(); }
};

/// 64-bit seed of each party's private randomness.
struct SessionSeeds {
  std::uint64_t alice = 1;
  std::uint64_t bob = 2;
  std::uint64_t eve = 3;

  /// Three party seeds from one master seed.
  static SessionSeeds from(std::uint64_t master);
};

struct SessionResult {
  Bits alice_choices;  ///< 1 = R_H
  Bits bob_choices;
  std::vector<int> sifted_indices;
  Bits shared_key_alice;
  Bits shared_key_bob;
  double ber = 0.0;
  double sift_fraction = 0.0;
  std::vector<AlarmEvent> alarms;
  int bits_completed = 0;
  int erasures = 0;
  bool aborted = false;

  /// Sifted bits produced before the first alarm.
  int bits_extracted_before_alarm() const;
};

/// Applies the optional uniform quantizer to published samples.
class Quantizer {
 public:
  Quantizer(const SessionConfig& cfg, const ExpectedLevels& levels);
  bool enabled() const { return bits_ > 0; }
  void apply_voltage(Signal& x) const { apply(x, lsb_u_); }
  void apply_current(Signal& x) const { apply(x, lsb_i_); }

 private:
  void apply(Signal& x, double lsb) const;
  int bits_;
  double lsb_u_ = 0.0, lsb_i_ = 0.0;
};

/// What a passive observer of one clock period can see.
struct BitView {
  int bit_index = 0;
  /// Data broadcast by Alice and Bob (ends) plus Eve's own midpoint tap.
  const TraceEnds& published;
  bool sifted = false;
  bool alarmed = false;
  /// Eve's own injected current, when she is injecting.
  const Signal* injection = nullptr;
  /// Eve's own terminations in splitter mode (Alice side, Bob side).
  std::optional<std::array<double, 2>> splitter_resistances;
};

using BitObserver = std::function<void(const BitView&)>;

/// Per-party decision for one bit, computed from the party's own end data.
struct PartyDecision {
  Level level = Level::low;
  bool erasure = false;
  bool keep() const { return level == Level::mixed && !erasure; }
};

PartyDecision decide(const SessionConfig& cfg, const ExpectedLevels& levels, const Signal& u_end,
                     const Signal& i_end, Eigen::Index warmup);

/// Runs the full key exchange for cfg.n_bits clock periods.
SessionResult run_session(const SessionConfig& cfg, const SessionSeeds& seeds, const BitObserver& observer = {});

/// Physical layer for one bit period: given both sources, returns the end
/// data before quantization. Used by the in-process session and by the
/// network channel emulator so both produce identical samples.
TraceEnds propagate_bit(const SessionConfig& cfg, const Signal& u_a, const Signal& u_b, double r_a, double r_b,
                        const Signal& injection);

/// Injection waveform for one bit period, drawn from Eve's stream.
Signal injection_waveform(const SessionConfig& cfg, const ExpectedLevels& levels, Xoshiro256& eve_rng,
                          int bit_index);

}  // namespace kljn
