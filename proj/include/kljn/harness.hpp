#pragma once

// Configuration-driven Monte Carlo runner. One experiment is a base session
// configuration, an optional one-dimensional sweep, an optional attack and
// an optional privacy-amplification step count. Every (point, trial) pair
// runs an independent session whose seeds depend only on (seed, trial), so
// all sweep points see the same noise realizations and results do not
// depend on the number of worker threads.

#include "kljn/attacks.hpp"
#include "kljn/privacy.hpp"

#include "json.hpp"

#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace kljn {

/// Versioned CSV schema tags. The first line of every CSV is `#schema=<tag>`.
inline constexpr const char* kExperimentSchema = "kljn.experiment.v1";
inline constexpr const char* kBb84Schema = "kljn.bb84.v1";
inline constexpr const char* kAmplificationSchema = "kljn.amplification.v1";
inline constexpr const char* kPsdSchema = "kljn.psd.v1";

/// Party seeds of trial `trial` under experiment seed `seed`. The networked
/// processes use trial 0, so `simulate --seed s` and a networked run with
/// the same seed exchange the same key.
SessionSeeds trial_seeds(std::uint64_t seed, std::uint64_t trial);

struct Sweep {
  /// Dotted path into the experiment spec: "base.wire.r_wire", "attack.params.ratio".
  /// A path without the "base."/"attack." prefix is relative to base; a
  /// bare field name is accepted when it is unambiguous.
  std::string path;
  std::vector<double> values;
};

struct ExperimentSpec {
  std::string name = "experiment";
  SessionConfig base;
  std::optional<Sweep> sweep;
  std::optional<AttackConfig> attack;
  std::optional<int> amplification_steps;
  int trials_per_point = 1;
  std::uint64_t seed = 1;
  std::string output;  ///< path prefix for <output>.csv and <output>.summary.json

  /// Throws ConfigError (unknown sweep path, empty sweep, bad values).
  void validate() const;
  /// Fully qualified sweep path ("base.…" or "attack.params.…").
  std::string resolved_sweep_path() const;
  /// Base config and attack for point `index`, sweep value applied.
  std::pair<SessionConfig, std::optional<AttackConfig>> point(std::size_t index) const;
  std::size_t n_points() const { return sweep ? sweep->values.size() : 1; }
};

void to_json(nlohmann::json& j, const ExperimentSpec& s);
void from_json(const nlohmann::json& j, ExperimentSpec& s);

struct ExperimentRow {
  std::size_t point = 0;
  std::string sweep_path;
  double sweep_value = 0.0;
  std::string kind = "none";
  std::string tap_point = "none";
  double param = 0.0;
  int trials = 0;
  long bits_completed = 0;
  long sifted_bits = 0;
  double ber = 0.0;
  double sift_fraction = 0.0;
  AttackReport attack;
  int amp_steps = 0;
  std::size_t key_len_after = 0;
  double predicted_leak = 0.0;
  double empirical_leak = 0.0;
  double wall_seconds = 0.0;  ///< summary JSON only, never in the CSV
};

struct ExperimentResult {
  std::vector<ExperimentRow> rows;
  double wall_seconds = 0.0;
  unsigned threads = 1;
};

struct RunOptions {
  unsigned threads = 0;  ///< 0: hardware concurrency
};

ExperimentResult run_experiment(const ExperimentSpec& spec, const RunOptions& opts = {});

/// CSV header line (without the schema comment).
std::string experiment_csv_header();
void write_experiment_csv(std::ostream& out, const ExperimentResult& result);
nlohmann::json experiment_summary(const ExperimentSpec& spec, const ExperimentResult& result);

/// Writes <prefix>.csv and <prefix>.summary.json; throws on I/O failure.
void write_experiment_outputs(const std::string& prefix, const ExperimentSpec& spec, const ExperimentResult& result);

/// Output of `git describe` captured at configure time.
const char* git_describe();

/// Parallel map over [0, n) on a fixed pool; results are placed by index.
/// The first exception thrown by any task is rethrown after all workers stop.
void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& task);

/// Decimal rendering used in every CSV (round-trips doubles).
std::string format_number(double v);

}  // namespace kljn
