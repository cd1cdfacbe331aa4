#include "kljn/config_json.hpp"

#include <fstream>
#include <initializer_list>
#include <string_view>

namespace kljn {

using nlohmann::json;

namespace {

void check_keys(const json& j, std::initializer_list<std::string_view> allowed, std::string_view context) {
  if (!j.is_object()) throw ConfigError(std::string(context) + ": expected a JSON object");
  for (const auto& [key, _] : j.items()) {
    bool known = false;
    for (auto a : allowed) known = known || key == a;
    if (!known) throw ConfigError(std::string(context) + ": unknown key '" + key + "'");
  }
}

template <typename T>
void read(const json& j, const char* key, T& out, std::string_view context) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string(context) + "." + key + ": " + e.what());
  }
}

template <typename Enum, typename Parse>
void read_enum(const json& j, const char* key, Enum& out, std::string_view context, Parse parse) {
  if (!j.contains(key)) return;
  if (!j.at(key).is_string()) throw ConfigError(std::string(context) + "." + key + ": expected a string");
  try {
    out = parse(j.at(key).get<std::string>());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string(context) + "." + key + ": " + e.what());
  }
}

ScaleMode parse_scale_mode(const std::string& s) {
  if (s == "physical") return ScaleMode::physical;
  if (s == "normalized") return ScaleMode::normalized;
  throw std::invalid_argument("unknown scale_mode '" + s + "'");
}

DecisionStatistic parse_decision(const std::string& s) {
  if (s == "voltage") return DecisionStatistic::voltage;
  if (s == "current") return DecisionStatistic::current;
  if (s == "both") return DecisionStatistic::both;
  throw std::invalid_argument("unknown decision_stat '" + s + "'");
}

std::string_view to_string(DecisionStatistic d) {
  switch (d) {
    case DecisionStatistic::voltage: return "voltage";
    case DecisionStatistic::current: return "current";
    case DecisionStatistic::both: return "both";
  }
  return "?";
}

InjectionWaveform parse_waveform(const std::string& s) {
  if (s == "gaussian") return InjectionWaveform::gaussian;
  if (s == "sine") return InjectionWaveform::sine;
  if (s == "dc") return InjectionWaveform::dc;
  throw std::invalid_argument("unknown waveform '" + s + "'");
}

std::string_view to_string(InjectionWaveform w) {
  switch (w) {
    case InjectionWaveform::gaussian: return "gaussian";
    case InjectionWaveform::sine: return "sine";
    case InjectionWaveform::dc: return "dc";
  }
  return "?";
}

}  // namespace

AttackKind parse_attack_kind(const std::string& s) {
  for (auto k : {AttackKind::passive_ms, AttackKind::cross_correlation, AttackKind::wire_resistance,
                 AttackKind::temperature_mismatch, AttackKind::resistor_inaccuracy, AttackKind::invasive_injection,
                 AttackKind::mitm_splitter})
    if (to_string(k) == s) return k;
  throw std::invalid_argument("unknown attack kind '" + s + "'");
}

TapPoint parse_tap_point(const std::string& s) {
  for (auto t : {TapPoint::end_a, TapPoint::mid, TapPoint::end_b})
    if (to_string(t) == s) return t;
  throw std::invalid_argument("unknown tap_point '" + s + "'");
}

std::string_view to_string(MitmMode m) {
  switch (m) {
    case MitmMode::none: return "none";
    case MitmMode::splitter: return "splitter";
    case MitmMode::relay: return "relay";
  }
  return "?";
}

MitmMode parse_mitm_mode(const std::string& s) {
  for (auto m : {MitmMode::none, MitmMode::splitter, MitmMode::relay})
    if (to_string(m) == s) return m;
  throw std::invalid_argument("unknown mitm mode '" + s + "'");
}

void to_json(json& j, const NoiseConfig& c) {
  j = json{{"t_eff", c.t_eff},
           {"bandwidth_hz", c.bandwidth_hz},
           {"sample_rate_hz", c.sample_rate_hz},
           {"samples_per_bit", c.samples_per_bit},
           {"scale_mode", c.scale_mode == ScaleMode::physical ? "physical" : "normalized"},
           {"seed", c.seed}};
}

void from_json(const json& j, NoiseConfig& c) {
  constexpr std::string_view ctx = "noise";
  check_keys(j, {"t_eff", "bandwidth_hz", "sample_rate_hz", "samples_per_bit", "scale_mode", "seed"}, ctx);
  read(j, "t_eff", c.t_eff, ctx);
  read(j, "bandwidth_hz", c.bandwidth_hz, ctx);
  read(j, "sample_rate_hz", c.sample_rate_hz, ctx);
  read(j, "samples_per_bit", c.samples_per_bit, ctx);
  read_enum(j, "scale_mode", c.scale_mode, ctx, parse_scale_mode);
  read(j, "seed", c.seed, ctx);
}

void to_json(json& j, const ResistorPair& c) { j = json{{"r_low", c.r_low}, {"r_high", c.r_high}}; }

void from_json(const json& j, ResistorPair& c) {
  check_keys(j, {"r_low", "r_high"}, "resistors");
  read(j, "r_low", c.r_low, "resistors");
  read(j, "r_high", c.r_high, "resistors");
}

void to_json(json& j, const WireModel& c) {
  j = json{{"r_wire", c.r_wire}, {"c_cable", c.c_cable}, {"killer_on", c.killer_on}};
}

void from_json(const json& j, WireModel& c) {
  check_keys(j, {"r_wire", "c_cable", "killer_on"}, "wire");
  read(j, "r_wire", c.r_wire, "wire");
  read(j, "c_cable", c.c_cable, "wire");
  read(j, "killer_on", c.killer_on, "wire");
}

void to_json(json& j, const Injection& c) {
  j = json{{"amplitude_frac", c.amplitude_frac},
           {"waveform", to_string(c.waveform)},
           {"sine_freq_hz", c.sine_freq_hz}};
}

void from_json(const json& j, Injection& c) {
  check_keys(j, {"amplitude_frac", "waveform", "sine_freq_hz"}, "injection");
  read(j, "amplitude_frac", c.amplitude_frac, "injection");
  read_enum(j, "waveform", c.waveform, "injection", parse_waveform);
  read(j, "sine_freq_hz", c.sine_freq_hz, "injection");
}

void to_json(json& j, const SessionConfig& c) {
  j = json{{"n_bits", c.n_bits},
           {"noise", c.noise},
           {"resistors", c.resistors},
           {"wire", c.wire},
           {"alarm_tol_rel", c.alarm_tol_rel},
           {"decision_stat", to_string(c.decision_stat)},
           {"alice_temp_scale", c.alice_temp_scale},
           {"bob_temp_scale", c.bob_temp_scale},
           {"alice_resistor_error", c.alice_resistor_error},
           {"bob_resistor_error", c.bob_resistor_error},
           {"quantizer_bits", c.quantizer_bits},
           {"quantizer_range_rms", c.quantizer_range_rms},
           {"abort_on_alarm", c.abort_on_alarm},
           {"oracle_levels", c.oracle_levels},
           {"injection", c.injection},
           {"mitm", to_string(c.mitm)}};
}

void from_json(const json& j, SessionConfig& c) {
  constexpr std::string_view ctx = "session";
  check_keys(j,
             {"n_bits", "noise", "resistors", "wire", "alarm_tol_rel", "decision_stat", "alice_temp_scale",
              "bob_temp_scale", "alice_resistor_error", "bob_resistor_error", "quantizer_bits",
              "quantizer_range_rms", "abort_on_alarm", "oracle_levels", "injection", "mitm"},
             ctx);
  read(j, "n_bits", c.n_bits, ctx);
  if (j.contains("noise")) from_json(j.at("noise"), c.noise);
  if (j.contains("resistors")) from_json(j.at("resistors"), c.resistors);
  if (j.contains("wire")) from_json(j.at("wire"), c.wire);
  read(j, "alarm_tol_rel", c.alarm_tol_rel, ctx);
  read_enum(j, "decision_stat", c.decision_stat, ctx, parse_decision);
  read(j, "alice_temp_scale", c.alice_temp_scale, ctx);
  read(j, "bob_temp_scale", c.bob_temp_scale, ctx);
  read(j, "alice_resistor_error", c.alice_resistor_error, ctx);
  read(j, "bob_resistor_error", c.bob_resistor_error, ctx);
  read(j, "quantizer_bits", c.quantizer_bits, ctx);
  read(j, "quantizer_range_rms", c.quantizer_range_rms, ctx);
  read(j, "abort_on_alarm", c.abort_on_alarm, ctx);
  read(j, "oracle_levels", c.oracle_levels, ctx);
  if (j.contains("injection")) from_json(j.at("injection"), c.injection);
  read_enum(j, "mitm", c.mitm, ctx, parse_mitm_mode);
}

void to_json(json& j, const AttackConfig& c) {
  json params = json::object();
  if (c.params.r_wire_over_r_low) params["r_wire_over_r_low"] = *c.params.r_wire_over_r_low;
  if (c.params.ratio) params["ratio"] = *c.params.ratio;
  if (c.params.error) params["error"] = *c.params.error;
  if (c.params.amplitude) params["amplitude"] = *c.params.amplitude;
  if (c.params.waveform) params["waveform"] = to_string(*c.params.waveform);
  if (c.params.mode) params["mode"] = to_string(*c.params.mode);
  j = json{{"kind", to_string(c.kind)}, {"tap_point", to_string(c.tap_point)}, {"params", params}};
}

void from_json(const json& j, AttackConfig& c) {
  constexpr std::string_view ctx = "attack";
  check_keys(j, {"kind", "tap_point", "params"}, ctx);
  if (!j.contains("kind")) throw ConfigError("attack: missing 'kind'");
  read_enum(j, "kind", c.kind, ctx, parse_attack_kind);
  read_enum(j, "tap_point", c.tap_point, ctx, parse_tap_point);
  c.params = {};
  if (j.contains("params") && !j.at("params").is_null()) {
    const json& p = j.at("params");
    check_keys(p, {"r_wire_over_r_low", "ratio", "error", "amplitude", "waveform", "mode"}, "attack.params");
    auto opt = [&](const char* key, std::optional<double>& out) {
      if (p.contains(key)) {
        double v = 0.0;
        read(p, key, v, "attack.params");
        out = v;
      }
    };
    opt("r_wire_over_r_low", c.params.r_wire_over_r_low);
    opt("ratio", c.params.ratio);
    opt("error", c.params.error);
    opt("amplitude", c.params.amplitude);
    if (p.contains("waveform")) {
      InjectionWaveform w{};
      read_enum(p, "waveform", w, "attack.params", parse_waveform);
      c.params.waveform = w;
    }
    if (p.contains("mode")) {
      MitmMode m{};
      read_enum(p, "mode", m, "attack.params", parse_mitm_mode);
      c.params.mode = m;
    }
  }
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

void to_json(json& j, const SessionResult& r) {
  json alarms = json::array();
  for (const auto& a : r.alarms)
    alarms.push_back({{"bit_index", a.bit_index}, {"sample_index", a.sample_index}, {"deviation", a.deviation}});
  j = json{{"n_bits", r.alice_choices.size()},
           {"alice_choices_hex", bits_to_hex(r.alice_choices)},
           {"bob_choices_hex", bits_to_hex(r.bob_choices)},
           {"sifted_indices", r.sifted_indices},
           {"key_length", r.shared_key_alice.size()},
           {"shared_key_alice_hex", bits_to_hex(r.shared_key_alice)},
           {"shared_key_bob_hex", bits_to_hex(r.shared_key_bob)},
           {"ber", r.ber},
           {"sift_fraction", r.sift_fraction},
           {"alarms", alarms},
           {"bits_completed", r.bits_completed},
           {"erasures", r.erasures},
           {"aborted", r.aborted}};
}

void to_json(json& j, const AttackReport& r) {
  j = json{{"n_trials", r.n_trials},
           {"success_rate", r.success_rate},
           {"ci95", r.ci95},
           {"ci_low", r.ci_low},
           {"ci_high", r.ci_high},
           {"leak_fraction", r.leak_fraction},
           {"leak_mutual_info", r.leak_mutual_info},
           {"alarms_triggered", r.alarms_triggered},
           {"sessions", r.sessions},
           {"sessions_alarmed", r.sessions_alarmed},
           {"bits_extracted_before_alarm", r.bits_extracted_before_alarm},
           {"alarm_latencies", r.alarm_latencies}};
}

void to_json(json& j, const AmplificationReport& r) {
  j = json{{"steps", r.steps},
           {"key_len_before", r.key_len_before},
           {"key_len_after", r.key_len_after},
           {"model", to_string(r.model)},
           {"predicted_leak", r.predicted_leak},
           {"slowdown", r.slowdown}};
  j["empirical_leak"] = r.empirical_leak ? json(*r.empirical_leak) : json(nullptr);
}

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("invalid JSON in " + path + ": " + e.what());
  }
}

}  // namespace kljn
