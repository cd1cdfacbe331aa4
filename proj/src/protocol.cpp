#include "kljn/protocol.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace kljn {

std::string_view to_string(BitState s) {
  switch (s) {
    case BitState::LL: return "LL";
    case BitState::LH: return "LH";
    case BitState::HL: return "HL";
    case BitState::HH: return "HH";
  }
  return "?";
}

ExpectedLevels expected_levels(const ResistorPair& resistors, const NoiseConfig& noise) {
  resistors.validate();
  const double scale = noise.four_kt() * noise.bandwidth_hz;
  const std::array<std::array<double, 2>, 3> pairs{{{resistors.r_low, resistors.r_low},
                                                    {resistors.r_low, resistors.r_high},
                                                    {resistors.r_high, resistors.r_high}}};
  ExpectedLevels out;
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    const auto [r1, r2] = pairs[k];
    out.ms_u[k] = scale * r1 * r2 / (r1 + r2);
    out.ms_i[k] = scale / (r1 + r2);
  }
  return out;
}

Level classify_level(double ms, const std::array<double, 3>& levels) {
  if (!std::isfinite(ms)) throw std::invalid_argument("classify_level: non-finite statistic");
  const double t_low = std::sqrt(levels[0] * levels[1]);
  const double t_high = std::sqrt(levels[1] * levels[2]);
  if (levels[0] < levels[2]) {
    if (ms < t_low) return Level::low;
    return ms < t_high ? Level::mixed : Level::high;
  }
  if (ms > t_low) return Level::low;
  return ms > t_high ? Level::mixed : Level::high;
}

AlarmScale alarm_scale(const ExpectedLevels& levels) {
  return {std::sqrt(levels.ms_u[0]), std::sqrt(levels.ms_i[2])};
}

AlarmMonitor::AlarmMonitor(const WireModel& wire, double dt, double tol_rel, AlarmScale scale)
    : half_wire_(wire.r_wire / 2.0), c_(wire.c_eff()), dt_(dt), tol_(tol_rel), scale_(scale) {
  if (!(tol_rel > 0.0)) throw std::invalid_argument("alarm tolerance must be positive");
}

void AlarmMonitor::reset() {
  started_ = false;
  v_prev_ = 0.0;
  ic_prev_ = 0.0;
}

std::optional<AlarmEvent> AlarmMonitor::feed(const Signal& u_end_a, const Signal& i_a, const Signal& u_end_b,
                                             const Signal& i_b, Eigen::Index offset) {
  const Eigen::Index n = u_end_a.size();
  if (i_a.size() != n || u_end_b.size() != n || i_b.size() != n)
    throw std::invalid_argument("AlarmMonitor: chunk length mismatch");
  const double u_lim = tol_ * scale_.u_ref;
  const double i_lim = tol_ * scale_.i_ref;
  std::optional<AlarmEvent> first;
  for (Eigen::Index k = 0; k < n; ++k) {
    const double mid_a = u_end_a[k] - i_a[k] * half_wire_;
    const double mid_b = u_end_b[k] - i_b[k] * half_wire_;
    const double ic = i_a[k] + i_b[k];
    double res_u = mid_a - mid_b;
    double res_i = 0.0;
    if (c_ == 0.0) {
      res_i = ic;
    } else {
      const double v = 0.5 * (mid_a + mid_b);
      if (!started_) {
        res_u = std::max(std::abs(res_u), std::abs(v));
      } else {
        res_i = 0.5 * (ic + ic_prev_) - c_ * (v - v_prev_) / dt_;
      }
      v_prev_ = v;
      ic_prev_ = ic;
      started_ = true;
    }
    const bool bad_u = std::abs(res_u) > u_lim || std::isnan(res_u);
    const bool bad_i = std::abs(res_i) > i_lim || std::isnan(res_i);
    if (!first && (bad_u || bad_i)) {
      const double dev = std::max(std::abs(res_u) / scale_.u_ref, std::abs(res_i) / scale_.i_ref);
      first = AlarmEvent{0, offset + k, dev};
    }
  }
  return first;
}

std::optional<AlarmEvent> check_alarm(const TraceEnds& ends, const WireModel& wire, double tol_rel,
                                      const AlarmScale& scale, int bit_index) {
  AlarmMonitor monitor(wire, ends.dt, tol_rel, scale);
  auto ev = monitor.feed(ends.u_end_a, ends.i_a, ends.u_end_b, ends.i_b);
  if (ev) ev->bit_index = bit_index;
  return ev;
}

std::vector<AlarmEvent> check_alarm(const TraceEnds& ends, const WireModel& wire, double tol_rel) {
  const double n = std::max<double>(1.0, static_cast<double>(ends.size()));
  const AlarmScale scale{std::sqrt(ends.u_end_a.squaredNorm() / n), std::sqrt(ends.i_a.squaredNorm() / n)};
  std::vector<AlarmEvent> out;
  if (auto ev = check_alarm(ends, wire, tol_rel, scale)) out.push_back(*ev);
  return out;
}

void SessionConfig::validate() const {
  if (n_bits < 1) throw std::invalid_argument("SessionConfig: n_bits must be >= 1");
  if (!(alarm_tol_rel > 0.0)) throw std::invalid_argument("SessionConfig: alarm_tol_rel must be positive");
  noise.validate();
  resistors.validate();
  wire.validate();
  if (!(alice_temp_scale > 0.0 && bob_temp_scale > 0.0))
    throw std::invalid_argument("SessionConfig: temperature scales must be positive");
  if (std::abs(alice_resistor_error) > 0.5 || std::abs(bob_resistor_error) > 0.5)
    throw std::invalid_argument("SessionConfig: resistor errors must lie within +/-50%");
  if (quantizer_bits < 0 || quantizer_bits > 52) throw std::invalid_argument("SessionConfig: quantizer_bits out of range");
  if (!(quantizer_range_rms > 0.0)) throw std::invalid_argument("SessionConfig: quantizer_range_rms must be positive");
  if (!(injection.amplitude_frac >= 0.0)) throw std::invalid_argument("SessionConfig: injection amplitude must be >= 0");
  if (warmup_samples() * 2 > noise.samples_per_bit)
    throw std::invalid_argument("SessionConfig: capacitor warm-up exceeds half a bit period");
  if (wire.c_eff() > 0.0) {
    // Smallest Thevenin resistance the loop can present; the integrator rejects dt above it.
    const double r_min = std::min(alice_resistance(false), bob_resistance(false)) + wire.r_wire / 2.0;
    if (!(noise.dt() < r_min / 2.0 * wire.c_eff()))
      throw std::invalid_argument("SessionConfig: sample period must be below R_th * c_eff");
  }
}

Eigen::Index SessionConfig::warmup_samples() const {
  const double err = std::max(std::abs(alice_resistor_error), std::abs(bob_resistor_error));
  const double r_side = resistors.r_high * (1.0 + err) + wire.r_wire / 2.0;
  return kljn::warmup_samples(wire, r_side / 2.0, noise.dt());
}

SessionSeeds SessionSeeds::from(std::uint64_t master) {
  return {derive_seed({master, 0xA}), derive_seed({master, 0xB}), derive_seed({master, 0xE})};
}

int SessionResult::bits_extracted_before_alarm() const {
  if (alarms.empty()) return static_cast<int>(sifted_indices.size());
  const int first = alarms.front().bit_index;
  return static_cast<int>(std::count_if(sifted_indices.begin(), sifted_indices.end(),
                                        [first](int k) { return k < first; }));
}

Quantizer::Quantizer(const SessionConfig& cfg, const ExpectedLevels& levels) : bits_(cfg.quantizer_bits) {
  if (bits_ == 0) return;
  const double steps = std::ldexp(1.0, bits_);
  lsb_u_ = 2.0 * cfg.quantizer_range_rms * std::sqrt(levels.ms_u[1]) / steps;
  lsb_i_ = 2.0 * cfg.quantizer_range_rms * std::sqrt(levels.ms_i[1]) / steps;
}

void Quantizer::apply(Signal& x, double lsb) const {
  if (bits_ == 0) return;
  const double hi = std::ldexp(1.0, bits_ - 1) - 1.0;
  const double lo = -std::ldexp(1.0, bits_ - 1);
  x = x.unaryExpr([=](double v) { return std::clamp(std::nearbyint(v / lsb), lo, hi) * lsb; });
}

PartyDecision decide(const SessionConfig& cfg, const ExpectedLevels& levels, const Signal& u_end,
                     const Signal& i_end, Eigen::Index warmup) {
  const Eigen::Index len = u_end.size() - warmup;
  const double ms_u = mean_square(u_end.tail(len));
  const double ms_i = mean_square(i_end.tail(len));
  PartyDecision d;
  switch (cfg.decision_stat) {
    case DecisionStatistic::voltage: d.level = classify_level(ms_u, levels.ms_u); break;
    case DecisionStatistic::current: d.level = classify_level(ms_i, levels.ms_i); break;
    case DecisionStatistic::both: {
      const Level lu = classify_level(ms_u, levels.ms_u);
      const Level li = classify_level(ms_i, levels.ms_i);
      d.level = lu;
      d.erasure = lu != li;
      break;
    }
  }
  return d;
}

namespace {

PartyDecision oracle_decision(BitState s) {
  PartyDecision d;
  d.level = is_secure(s) ? Level::mixed : (s == BitState::LL ? Level::low : Level::high);
  return d;
}

}  // namespace

TraceEnds propagate_bit(const SessionConfig& cfg, const Signal& u_a, const Signal& u_b, double r_a, double r_b,
                        const Signal& injection) {
  const double dt = cfg.noise.dt();
  if (!cfg.wire.ideal() || injection.size() != 0) return solve_nonideal(u_a, u_b, r_a, r_b, cfg.wire, dt, injection);
  return TraceEnds::from_ideal(solve_ideal(u_a, u_b, r_a, r_b, dt));
}

Signal injection_waveform(const SessionConfig& cfg, const ExpectedLevels& levels, Xoshiro256& eve_rng,
                          int bit_index) {
  const Eigen::Index m = cfg.noise.samples_per_bit;
  const double rms = cfg.injection.amplitude_frac * std::sqrt(levels.ms_i[1]);
  switch (cfg.injection.waveform) {
    case InjectionWaveform::gaussian:
      return Signal::NullaryExpr(m, [&](Eigen::Index) { return rms * eve_rng.normal(); });
    case InjectionWaveform::sine: {
      const double w = 2.0 * std::numbers::pi * cfg.injection.sine_freq_hz * cfg.noise.dt();
      const double t0 = static_cast<double>(bit_index) * static_cast<double>(m);
      // Phase offset keeps the first sample of each period non-zero.
      return Signal::NullaryExpr(m, [&](Eigen::Index k) {
        return rms * std::numbers::sqrt2 * std::sin(w * (t0 + static_cast<double>(k)) + 0.25 * std::numbers::pi);
      });
    }
    case InjectionWaveform::dc: return Signal::Constant(m, rms);
  }
  return Signal::Zero(m);
}

SessionResult run_session(const SessionConfig& cfg, const SessionSeeds& seeds, const BitObserver& observer) {
  cfg.validate();
  Xoshiro256 alice_choice = make_stream(seeds.alice, Stream::alice_choice);
  Xoshiro256 bob_choice = make_stream(seeds.bob, Stream::bob_choice);
  Xoshiro256 eve = make_stream(seeds.eve, Stream::eve);
  JohnsonNoiseSource alice_noise(cfg.noise, make_stream(seeds.alice, Stream::alice_noise));
  JohnsonNoiseSource bob_noise(cfg.noise, make_stream(seeds.bob, Stream::bob_noise));
  std::optional<JohnsonNoiseSource> eve_noise_a, eve_noise_b;
  if (cfg.mitm == MitmMode::splitter) {
    eve_noise_a.emplace(cfg.noise, make_stream(seeds.eve, Stream::eve_noise_a));
    eve_noise_b.emplace(cfg.noise, make_stream(seeds.eve, Stream::eve_noise_b));
  }

  const ExpectedLevels levels = expected_levels(cfg.resistors, cfg.noise);
  const AlarmScale scale = alarm_scale(levels);
  const Quantizer quantizer(cfg, levels);
  const Eigen::Index warmup = cfg.warmup_samples();
  AlarmMonitor monitor(cfg.wire, cfg.noise.dt(), cfg.alarm_tol_rel, scale);

  SessionResult res;
  res.alice_choices.reserve(cfg.n_bits);
  res.bob_choices.reserve(cfg.n_bits);

  for (int k = 0; k < cfg.n_bits; ++k) {
    const bool a_high = alice_choice.bit();
    const bool b_high = bob_choice.bit();
    const double r_a = cfg.alice_resistance(a_high);
    const double r_b = cfg.bob_resistance(b_high);
    const Signal u_a = alice_noise.block(r_a, cfg.alice_temp_scale);
    const Signal u_b = bob_noise.block(r_b, cfg.bob_temp_scale);

    Signal injection;
    if (cfg.injection.active()) injection = injection_waveform(cfg, levels, eve, k);

    TraceEnds ends;
    std::optional<std::array<double, 2>> eve_r;
    if (cfg.mitm == MitmMode::splitter) {
      const double r_ea = cfg.resistors.pick(eve.bit());
      const double r_eb = cfg.resistors.pick(eve.bit());
      const Signal u_ea = eve_noise_a->block(r_ea);
      const Signal u_eb = eve_noise_b->block(r_eb);
      const TraceEnds side_a = propagate_bit(cfg, u_a, u_ea, r_a, r_ea, injection);
      const TraceEnds side_b = propagate_bit(cfg, u_eb, u_b, r_eb, r_b, injection);
      ends = TraceEnds{side_a.u_end_a, side_b.u_end_b, side_a.i_a, side_b.i_b, side_a.u_mid, side_a.dt};
      eve_r = std::array<double, 2>{r_ea, r_eb};
    } else {
      ends = propagate_bit(cfg, u_a, u_b, r_a, r_b, injection);
    }
    if (quantizer.enabled()) {
      quantizer.apply_voltage(ends.u_end_a);
      quantizer.apply_voltage(ends.u_end_b);
      quantizer.apply_current(ends.i_a);
      quantizer.apply_current(ends.i_b);
    }

    monitor.reset();
    auto alarm = monitor.feed(ends.u_end_a, ends.i_a, ends.u_end_b, ends.i_b);
    if (alarm) {
      alarm->bit_index = k;
      res.alarms.push_back(*alarm);
    }

    const BitState truth = bit_state(a_high, b_high);
    PartyDecision alice_d, bob_d;
    if (cfg.oracle_levels) {
      alice_d = bob_d = oracle_decision(truth);
    } else {
      alice_d = decide(cfg, levels, ends.u_end_a, ends.i_a, warmup);
      bob_d = decide(cfg, levels, ends.u_end_b, ends.i_b, warmup);
    }
    if (alice_d.erasure || bob_d.erasure) ++res.erasures;
    const bool sifted = !alarm && alice_d.keep() && bob_d.keep();

    res.alice_choices.push_back(a_high ? 1 : 0);
    res.bob_choices.push_back(b_high ? 1 : 0);
    if (sifted) {
      res.sifted_indices.push_back(k);
      res.shared_key_alice.push_back(a_high ? 0 : 1);
      res.shared_key_bob.push_back(b_high ? 1 : 0);
    }
    res.bits_completed = k + 1;

    if (observer) {
      observer(BitView{k, ends, sifted, alarm.has_value(), injection.size() ? &injection : nullptr, eve_r});
    }
    if (alarm && cfg.abort_on_alarm) {
      res.aborted = true;
      break;
    }
  }

  std::size_t mismatches = 0;
  for (std::size_t i = 0; i < res.shared_key_alice.size(); ++i)
    mismatches += res.shared_key_alice[i] != res.shared_key_bob[i];
  res.ber = res.shared_key_alice.empty() ? 0.0
                                         : static_cast<double>(mismatches) / static_cast<double>(res.shared_key_alice.size());
  res.sift_fraction = res.bits_completed == 0 ? 0.0
                                              : static_cast<double>(res.sifted_indices.size()) / res.bits_completed;
  return res;
}

}  // namespace kljn
