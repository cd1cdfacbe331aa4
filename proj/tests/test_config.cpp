#include "kljn/config_json.hpp"
#include "kljn/harness.hpp"

#include "doctest.h"

#include <string>

using namespace kljn;
using nlohmann::json;

TEST_CASE("session config round trip") {
  SessionConfig c;
  c.n_bits = 123;
  c.wire = WireModel{12.5, 3e-9, true};
  c.resistors = ResistorPair{2.0, 3.0};
  c.decision_stat = DecisionStatistic::both;
  c.injection.amplitude_frac = 0.2;
  c.injection.waveform = InjectionWaveform::sine;
  c.mitm = MitmMode::relay;
  c.noise.scale_mode = ScaleMode::physical;
  const json j = c;
  const SessionConfig d = j.get<SessionConfig>();
  CHECK(json(d) == j);
  CHECK(d.n_bits == 123);
  CHECK(d.wire.killer_on);
  CHECK(d.mitm == MitmMode::relay);
}

TEST_CASE("unknown keys are rejected") {
  CHECK_THROWS_AS(json::parse(R"({"n_bit": 5})").get<SessionConfig>(), ConfigError);
  CHECK_THROWS_AS(json::parse(R"({"wire": {"r_wires": 1}})").get<SessionConfig>(), ConfigError);
  CHECK_THROWS_AS(json::parse(R"({"kind": "wire_resistance", "params": {"ratio": 2}})").get<AttackConfig>(),
                  ConfigError);
  CHECK_THROWS_AS(json::parse(R"({"kind": "teleport"})").get<AttackConfig>(), ConfigError);
  CHECK_THROWS_AS(json::parse(R"({"base": {}, "sweeps": {}})").get<ExperimentSpec>(), ConfigError);
  CHECK_THROWS_AS(json::parse(R"({"n_bits": "many"})").get<SessionConfig>(), ConfigError);
}

TEST_CASE("missing keys keep defaults") {
  const SessionConfig d = json::parse(R"({"n_bits": 9})").get<SessionConfig>();
  CHECK(d.n_bits == 9);
  CHECK(d.resistors.r_low == SessionConfig{}.resistors.r_low);
  CHECK(d.alarm_tol_rel == SessionConfig{}.alarm_tol_rel);
}

TEST_CASE("attack config round trip") {
  AttackConfig a;
  a.kind = AttackKind::invasive_injection;
  a.tap_point = TapPoint::end_b;
  a.params.amplitude = 0.1;
  a.params.waveform = InjectionWaveform::dc;
  const json j = a;
  const AttackConfig b = j.get<AttackConfig>();
  CHECK(json(b) == j);
  CHECK(b.params.amplitude == 0.1);
}

TEST_CASE("experiment spec parsing") {
  const json j = json::parse(R"({
    "name": "t", "base": {"n_bits": 10},
    "attack": {"kind": "temperature_mismatch"},
    "sweep": {"path": "ratio", "values": [1, 2]},
    "trials_per_point": 2, "seed": 5})");
  const ExperimentSpec s = j.get<ExperimentSpec>();
  CHECK(s.resolved_sweep_path() == "attack.params.ratio");
  CHECK(s.n_points() == 2);
  const auto [cfg, attack] = s.point(1);
  REQUIRE(attack.has_value());
  CHECK(attack->params.ratio == 2.0);
  CHECK(json(s).get<ExperimentSpec>().seed == 5);
}

TEST_CASE("missing config file names the path") {
  try {
    read_json_file("/nonexistent/cfg.json");
    FAIL("no exception");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("/nonexistent/cfg.json") != std::string::npos);
  }
}
