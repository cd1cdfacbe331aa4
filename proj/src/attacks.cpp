#include "kljn/attacks.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace kljn {

std::string_view to_string(AttackKind k) {
  switch (k) {
    case AttackKind::passive_ms: return "passive_ms";
    case AttackKind::cross_correlation: return "cross_correlation";
    case AttackKind::wire_resistance: return "wire_resistance";
    case AttackKind::temperature_mismatch: return "temperature_mismatch";
    case AttackKind::resistor_inaccuracy: return "resistor_inaccuracy";
    case AttackKind::invasive_injection: return "invasive_injection";
    case AttackKind::mitm_splitter: return "mitm_splitter";
  }
  return "?";
}

std::string_view to_string(TapPoint t) {
  switch (t) {
    case TapPoint::end_a: return "endA";
    case TapPoint::mid: return "mid";
    case TapPoint::end_b: return "endB";
  }
  return "?";
}

namespace {

void require_range(const std::optional<double>& v, double lo, double hi, bool lo_open, const char* name) {
  if (!v) return;
  const bool ok = (lo_open ? *v > lo : *v >= lo) && *v <= hi && std::isfinite(*v);
  if (!ok) throw std::invalid_argument(std::string("attack parameter out of range: ") + name);
}

void forbid(bool present, AttackKind kind, const char* name) {
  if (present)
    throw std::invalid_argument(std::string("attack parameter '") + name + "' does not apply to " +
                                std::string(to_string(kind)));
}

Guess by_sign(double statistic, int sign_alice_high) {
  // Ties (an exactly symmetric statistic) fall back to LH.
  const double s = statistic * sign_alice_high;
  return {s > 0.0 ? BitState::HL : BitState::LH, statistic};
}

}  // namespace

void AttackConfig::validate() const {
  require_range(params.r_wire_over_r_low, 0.0, 10.0, false, "r_wire_over_r_low");
  require_range(params.ratio, 0.0, 10.0, true, "ratio");
  require_range(params.error, -0.05, 0.05, false, "error");
  require_range(params.amplitude, 0.0, 10.0, false, "amplitude");
  forbid(params.r_wire_over_r_low && kind != AttackKind::wire_resistance, kind, "r_wire_over_r_low");
  forbid(params.ratio && kind != AttackKind::temperature_mismatch, kind, "ratio");
  forbid(params.error && kind != AttackKind::resistor_inaccuracy, kind, "error");
  forbid((params.amplitude || params.waveform) && kind != AttackKind::invasive_injection, kind, "amplitude");
  forbid(params.mode && kind != AttackKind::mitm_splitter, kind, "mode");
}

SessionConfig AttackConfig::apply(SessionConfig cfg) const {
  validate();
  switch (kind) {
    case AttackKind::wire_resistance:
      if (params.r_wire_over_r_low) cfg.wire.r_wire = *params.r_wire_over_r_low * cfg.resistors.r_low;
      break;
    case AttackKind::temperature_mismatch:
      if (params.ratio) cfg.bob_temp_scale = cfg.alice_temp_scale * *params.ratio;
      break;
    case AttackKind::resistor_inaccuracy:
      if (params.error) cfg.alice_resistor_error = *params.error;
      break;
    case AttackKind::invasive_injection:
      if (params.amplitude) cfg.injection.amplitude_frac = *params.amplitude;
      if (params.waveform) cfg.injection.waveform = *params.waveform;
      break;
    case AttackKind::mitm_splitter:
      cfg.mitm = params.mode.value_or(MitmMode::splitter);
      break;
    case AttackKind::passive_ms:
    case AttackKind::cross_correlation: break;
  }
  return cfg;
}

double AttackConfig::param_value(const SessionConfig& applied) const {
  switch (kind) {
    case AttackKind::wire_resistance: return applied.wire.r_wire / applied.resistors.r_low;
    case AttackKind::temperature_mismatch: return applied.bob_temp_scale / applied.alice_temp_scale;
    case AttackKind::resistor_inaccuracy: return applied.alice_resistor_error;
    case AttackKind::invasive_injection: return applied.injection.amplitude_frac;
    case AttackKind::mitm_splitter: return applied.mitm == MitmMode::splitter ? 1.0 : 0.0;
    case AttackKind::passive_ms:
    case AttackKind::cross_correlation: return 0.0;
  }
  return 0.0;
}

Trace tap(const TraceEnds& ends, TapPoint point) {
  switch (point) {
    case TapPoint::end_a: return {ends.u_end_a, ends.i_a, ends.dt};
    case TapPoint::end_b: return {ends.u_end_b, -ends.i_b, ends.dt};
    case TapPoint::mid: return {ends.u_mid, 0.5 * (ends.i_a - ends.i_b), ends.dt};
  }
  throw std::invalid_argument("tap: unknown tap point");
}

Guess eve_passive_ms(const Trace& trace, const ExpectedLevels& levels) {
  if (trace.size() == 0) throw std::invalid_argument("eve_passive_ms: empty trace");
  return by_sign(mean_square(trace.u_ch) - levels.ms_u[1], +1);
}

Guess eve_cross_correlation(const Trace& trace) {
  if (trace.size() == 0) throw std::invalid_argument("eve_cross_correlation: empty trace");
  if (trace.i_ch.size() != trace.u_ch.size()) throw std::invalid_argument("eve_cross_correlation: length mismatch");
  return by_sign(mean_product(trace.u_ch, trace.i_ch), kCrossCorrelationSign);
}

Guess eve_wire_resistance(const TraceEnds& ends) {
  if (ends.size() == 0) throw std::invalid_argument("eve_wire_resistance: end traces required");
  return by_sign(mean_square(ends.u_end_a) - mean_square(ends.u_end_b), kWireResistanceSign);
}

HypothesisLevels mismatch_levels(const SessionConfig& cfg) {
  const double unit = cfg.noise.four_kt() * cfg.noise.bandwidth_hz;
  const double ta = cfg.alice_temp_scale;
  const double tb = cfg.bob_temp_scale;
  HypothesisLevels out;
  for (int h = 0; h < 2; ++h) {
    const bool alice_high = h == 1;  // index 0: LH, index 1: HL
    const double ra = cfg.alice_resistance(alice_high);
    const double rb = cfg.bob_resistance(!alice_high);
    const double sum2 = (ra + rb) * (ra + rb);
    out.ms_u[h] = unit * (ta * ra * rb * rb + tb * rb * ra * ra) / sum2;
    out.ms_i[h] = unit * (ta * ra + tb * rb) / sum2;
  }
  return out;
}

namespace {

Guess nearest_hypothesis(const Trace& trace, const HypothesisLevels& hyp) {
  if (trace.size() == 0) throw std::invalid_argument("empty trace");
  const double lu = std::log(mean_square(trace.u_ch));
  const double li = std::log(mean_square(trace.i_ch));
  auto dist = [&](int h) {
    const double du = lu - std::log(hyp.ms_u[h]);
    const double di = li - std::log(hyp.ms_i[h]);
    return du * du + di * di;
  };
  return by_sign(dist(0) - dist(1), +1);
}

}  // namespace

Guess eve_temperature_mismatch(const Trace& trace, const HypothesisLevels& hyp) {
  return nearest_hypothesis(trace, hyp);
}

Guess eve_resistor_inaccuracy(const Trace& trace, const HypothesisLevels& hyp) {
  return nearest_hypothesis(trace, hyp);
}

Guess eve_injection_response(const TraceEnds& ends, const Signal* injection) {
  if (injection == nullptr || injection->size() == 0) return by_sign(0.0, kInjectionResponseSign);
  const Eigen::Index n = ends.size();
  const Signal split = ends.i_b - ends.i_a;
  return by_sign(mean_product(injection->tail(n), split), kInjectionResponseSign);
}

Guess eve_splitter(const TraceEnds& ends, double r_eve_b, const SessionConfig& cfg) {
  const double unit = cfg.noise.four_kt() * cfg.noise.bandwidth_hz;
  auto level = [&](double r) { return unit * r_eve_b * r / (r_eve_b + r); };
  const double threshold = std::sqrt(level(cfg.resistors.r_low) * level(cfg.resistors.r_high));
  // Bob high -> larger voltage on his side -> key bit 1 -> LH.
  const double stat = mean_square(ends.u_end_b) - threshold;
  return {stat > 0.0 ? BitState::LH : BitState::HL, stat};
}

double binary_entropy(double p) {
  auto term = [](double x) { return x <= 0.0 ? 0.0 : -x * std::log2(x); };
  return term(p) + term(1.0 - p);
}

namespace {

void fill_interval(AttackReport& r, std::size_t correct, std::size_t n) {
  r.n_trials = static_cast<int>(n);
  if (n == 0) return;
  constexpr double z = 1.959963984540054;
  const double nn = static_cast<double>(n);
  const double p = static_cast<double>(correct) / nn;
  const double denom = 1.0 + z * z / nn;
  const double center = (p + z * z / (2.0 * nn)) / denom;
  const double half = z * std::sqrt(p * (1.0 - p) / nn + z * z / (4.0 * nn * nn)) / denom;
  r.success_rate = p;
  r.ci95 = half;
  r.ci_low = center - half;
  r.ci_high = center + half;
  r.leak_fraction = std::max(0.0, 2.0 * p - 1.0);
  r.leak_mutual_info = 1.0 - binary_entropy(std::clamp(p, 0.0, 1.0));
}

}  // namespace

AttackReport summarize(const Bits& guesses, const Bits& truth) {
  if (guesses.size() != truth.size()) throw std::invalid_argument("summarize: length mismatch");
  if (guesses.empty()) throw std::invalid_argument("summarize: empty input");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < guesses.size(); ++i) correct += guesses[i] == truth[i];
  AttackReport r;
  fill_interval(r, correct, guesses.size());
  return r;
}

AttackRun run_attack(const SessionConfig& base, const SessionSeeds& seeds, const AttackConfig& attack) {
  const SessionConfig cfg = attack.apply(base);
  cfg.validate();
  const ExpectedLevels levels = expected_levels(cfg.resistors, cfg.noise);
  const HypothesisLevels hyp = mismatch_levels(cfg);
  const Eigen::Index warmup = cfg.warmup_samples();
  const Eigen::Index len = cfg.noise.samples_per_bit - warmup;

  AttackRun run;
  auto observer = [&](const BitView& view) {
    if (!view.sifted) return;
    const TraceEnds ends = warmup ? view.published.segment(warmup, len) : view.published;
    Guess g;
    switch (attack.kind) {
      case AttackKind::passive_ms: g = eve_passive_ms(tap(ends, attack.tap_point), levels); break;
      case AttackKind::cross_correlation: g = eve_cross_correlation(tap(ends, attack.tap_point)); break;
      case AttackKind::wire_resistance: g = eve_wire_resistance(ends); break;
      case AttackKind::temperature_mismatch: g = eve_temperature_mismatch(tap(ends, attack.tap_point), hyp); break;
      case AttackKind::resistor_inaccuracy: g = eve_resistor_inaccuracy(tap(ends, attack.tap_point), hyp); break;
      case AttackKind::invasive_injection: g = eve_injection_response(ends, view.injection); break;
      case AttackKind::mitm_splitter:
        g = view.splitter_resistances ? eve_splitter(ends, (*view.splitter_resistances)[1], cfg)
                                      : eve_passive_ms(tap(ends, attack.tap_point), levels);
        break;
    }
    run.guesses.push_back(g.key_bit());
  };

  run.session = run_session(cfg, seeds, observer);
  run.truth = run.session.shared_key_bob;
  if (!run.guesses.empty()) run.report = summarize(run.guesses, run.truth);
  run.report.sessions = 1;
  run.report.alarms_triggered = static_cast<int>(run.session.alarms.size());
  run.report.sessions_alarmed = run.session.alarms.empty() ? 0 : 1;
  run.report.bits_extracted_before_alarm = run.session.bits_extracted_before_alarm();
  if (!run.session.alarms.empty()) {
    const auto& a = run.session.alarms.front();
    run.report.alarm_latencies.push_back(static_cast<Eigen::Index>(a.bit_index) * cfg.noise.samples_per_bit +
                                         a.sample_index);
  }
  return run;
}

AttackReport pool_runs(std::span<const AttackRun> runs) {
  Bits guesses, truth;
  AttackReport out;
  for (const auto& r : runs) {
    guesses.insert(guesses.end(), r.guesses.begin(), r.guesses.end());
    truth.insert(truth.end(), r.truth.begin(), r.truth.end());
    out.sessions += r.report.sessions;
    out.alarms_triggered += r.report.alarms_triggered;
    out.sessions_alarmed += r.report.sessions_alarmed;
    out.bits_extracted_before_alarm += r.report.bits_extracted_before_alarm;
    out.alarm_latencies.insert(out.alarm_latencies.end(), r.report.alarm_latencies.begin(),
                               r.report.alarm_latencies.end());
  }
  if (!guesses.empty()) {
    const AttackReport s = summarize(guesses, truth);
    out.n_trials = s.n_trials;
    out.success_rate = s.success_rate;
    out.ci95 = s.ci95;
    out.ci_low = s.ci_low;
    out.ci_high = s.ci_high;
    out.leak_fraction = s.leak_fraction;
    out.leak_mutual_info = s.leak_mutual_info;
  }
  return out;
}

namespace {

AttackReport run_trials(const SessionConfig& base, const AttackConfig& attack, std::span<const SessionSeeds> trials) {
  std::vector<AttackRun> runs;
  runs.reserve(trials.size());
  for (const auto& seeds : trials) runs.push_back(run_attack(base, seeds, attack));
  return pool_runs(runs);
}

}  // namespace

AttackReport eve_invasive_injection(const SessionConfig& base, const Injection& injection,
                                    std::span<const SessionSeeds> trials) {
  AttackConfig attack;
  attack.kind = AttackKind::invasive_injection;
  attack.params.amplitude = injection.amplitude_frac;
  attack.params.waveform = injection.waveform;
  SessionConfig cfg = base;
  cfg.injection.sine_freq_hz = injection.sine_freq_hz;
  return run_trials(cfg, attack, trials);
}

AttackReport eve_mitm_splitter(const SessionConfig& base, MitmMode mode, std::span<const SessionSeeds> trials) {
  AttackConfig attack;
  attack.kind = AttackKind::mitm_splitter;
  attack.params.mode = mode;
  return run_trials(base, attack, trials);
}

}  // namespace kljn
