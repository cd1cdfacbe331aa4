#pragma once

// JSON mapping of the configuration and result types. Field names match the
// C++ members. Parsing is strict: unknown keys throw ConfigError, missing
// keys keep their defaults.

#include "kljn/attacks.hpp"
#include "kljn/privacy.hpp"
#include "kljn/protocol.hpp"

#include "json.hpp"

#include <stdexcept>
#include <string>

namespace kljn {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void to_json(nlohmann::json& j, const NoiseConfig& c);
void from_json(const nlohmann::json& j, NoiseConfig& c);
void to_json(nlohmann::json& j, const ResistorPair& c);
void from_json(const nlohmann::json& j, ResistorPair& c);
void to_json(nlohmann::json& j, const WireModel& c);
void from_json(const nlohmann::json& j, WireModel& c);
void to_json(nlohmann::json& j, const Injection& c);
void from_json(const nlohmann::json& j, Injection& c);
void to_json(nlohmann::json& j, const SessionConfig& c);
void from_json(const nlohmann::json& j, SessionConfig& c);
void to_json(nlohmann::json& j, const AttackConfig& c);
void from_json(const nlohmann::json& j, AttackConfig& c);

void to_json(nlohmann::json& j, const SessionResult& r);
void to_json(nlohmann::json& j, const AttackReport& r);
void to_json(nlohmann::json& j, const AmplificationReport& r);

AttackKind parse_attack_kind(const std::string& s);
TapPoint parse_tap_point(const std::string& s);
MitmMode parse_mitm_mode(const std::string& s);
std::string_view to_string(MitmMode m);

/// Reads and parses a JSON file; ConfigError names the path on failure.
nlohmann::json read_json_file(const std::string& path);

}  // namespace kljn
