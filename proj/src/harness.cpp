#include "kljn/harness.hpp"

#include "kljn/config_json.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <exception>
#include <fstream>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

#ifndef KLJN_GIT_DESCRIBE
#define KLJN_GIT_DESCRIBE "unknown"
#endif

namespace kljn {

using nlohmann::json;

namespace {

constexpr std::string_view kAttackScalarParams[] = {"r_wire_over_r_low", "ratio", "error", "amplitude"};

std::vector<std::string> split_path(const std::string& path) {
  std::vector<std::string> parts;
  std::stringstream ss(path);
  std::string item;
  while (std::getline(ss, item, '.')) parts.push_back(item);
  return parts;
}

void collect_leaves(const json& j, const std::string& prefix, const std::string& name, std::vector<std::string>& out) {
  for (const auto& [key, value] : j.items()) {
    const std::string p = prefix + "." + key;
    if (value.is_object())
      collect_leaves(value, p, name, out);
    else if (key == name)
      out.push_back(p);
  }
}

json spec_document(const ExperimentSpec& s) {
  return json{{"base", s.base}, {"attack", s.attack ? json(*s.attack) : json(nullptr)}};
}

[[noreturn]] void unknown_path(const std::string& path) { throw ConfigError("unknown sweep path '" + path + "'"); }

}  // namespace

SessionSeeds trial_seeds(std::uint64_t seed, std::uint64_t trial) {
  return SessionSeeds::from(derive_seed({seed, trial}));
}

std::string ExperimentSpec::resolved_sweep_path() const {
  if (!sweep) return {};
  const std::string& p = sweep->path;
  if (p.empty()) unknown_path(p);
  std::string full;
  if (p.starts_with("base.") || p.starts_with("attack.")) {
    full = p;
  } else if (p.find('.') != std::string::npos) {
    full = "base." + p;
  } else {
    std::vector<std::string> hits;
    collect_leaves(json(base), "base", p, hits);
    if (attack)
      for (auto name : kAttackScalarParams)
        if (p == name) hits.push_back("attack.params." + p);
    if (hits.size() > 1) throw ConfigError("ambiguous sweep path '" + p + "'");
    if (hits.empty()) unknown_path(p);
    full = hits.front();
  }

  const json doc = spec_document(*this);
  const auto parts = split_path(full);
  const json* node = &doc;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const bool last = i + 1 == parts.size();
    if (!node->is_object()) unknown_path(p);
    if (!node->contains(parts[i])) {
      // Optional attack parameters do not exist until they are set.
      const bool optional_param = last && parts.size() == 3 && parts[0] == "attack" && parts[1] == "params" &&
                                  std::find(std::begin(kAttackScalarParams), std::end(kAttackScalarParams),
                                            parts[2]) != std::end(kAttackScalarParams);
      if (!optional_param) unknown_path(p);
      return full;
    }
    node = &node->at(parts[i]);
    if (last && !(node->is_number() || node->is_boolean())) unknown_path(p);
  }
  return full;
}

std::pair<SessionConfig, std::optional<AttackConfig>> ExperimentSpec::point(std::size_t index) const {
  if (!sweep) return {base, attack};
  if (index >= sweep->values.size()) throw std::out_of_range("ExperimentSpec::point: index out of range");
  const double value = sweep->values[index];
  const auto parts = split_path(resolved_sweep_path());

  json doc = spec_document(*this);
  json* node = &doc;
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) node = &(*node)[parts[i]];
  json& leaf = (*node)[parts.back()];
  if (leaf.is_number_integer() || leaf.is_boolean()) {
    if (value != std::floor(value))
      throw ConfigError("sweep value " + format_number(value) + " is not an integer for '" + sweep->path + "'");
    if (leaf.is_boolean())
      leaf = value != 0.0;
    else
      leaf = static_cast<std::int64_t>(value);
  } else {
    leaf = value;
  }

  std::pair<SessionConfig, std::optional<AttackConfig>> out;
  try {
    out.first = doc.at("base").get<SessionConfig>();
    if (attack) out.second = doc.at("attack").get<AttackConfig>();
    out.first.validate();
    if (out.second) out.second->apply(out.first).validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError("sweep value " + format_number(value) + " for '" + sweep->path + "': " + e.what());
  }
  return out;
}

void ExperimentSpec::validate() const {
  if (trials_per_point < 1) throw ConfigError("trials_per_point must be >= 1");
  if (amplification_steps) {
    if (*amplification_steps < 0) throw ConfigError("amplification_steps must be >= 0");
    if (!attack) throw ConfigError("amplification_steps requires an attack");
  }
  try {
    base.validate();
    if (attack) attack->apply(base).validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (sweep) {
    if (sweep->values.empty()) throw ConfigError("empty sweep");
    for (double v : sweep->values)
      if (!std::isfinite(v)) throw ConfigError("sweep values must be finite");
    resolved_sweep_path();
    for (std::size_t i = 0; i < sweep->values.size(); ++i) point(i);
  }
}

void to_json(json& j, const ExperimentSpec& s) {
  j = json{{"name", s.name},
           {"base", s.base},
           {"trials_per_point", s.trials_per_point},
           {"seed", s.seed},
           {"output", s.output}};
  if (s.sweep) j["sweep"] = json{{"path", s.sweep->path}, {"values", s.sweep->values}};
  if (s.attack) j["attack"] = *s.attack;
  if (s.amplification_steps) j["amplification_steps"] = *s.amplification_steps;
}

void from_json(const json& j, ExperimentSpec& s) {
  if (!j.is_object()) throw ConfigError("experiment: expected a JSON object");
  for (const auto& [key, _] : j.items()) {
    static constexpr std::string_view known[] = {"name", "base", "sweep", "attack", "amplification_steps",
                                                 "trials_per_point", "seed", "output"};
    if (std::find(std::begin(known), std::end(known), key) == std::end(known))
      throw ConfigError("experiment: unknown key '" + key + "'");
  }
  try {
    if (j.contains("name")) s.name = j.at("name").get<std::string>();
    if (j.contains("base")) s.base = j.at("base").get<SessionConfig>();
    if (j.contains("sweep") && !j.at("sweep").is_null()) {
      const json& sw = j.at("sweep");
      if (!sw.is_object()) throw ConfigError("sweep: expected a JSON object");
      for (const auto& [key, _] : sw.items())
        if (key != "path" && key != "values") throw ConfigError("sweep: unknown key '" + key + "'");
      Sweep sweep;
      sweep.path = sw.value("path", std::string{});
      if (sw.contains("values")) sweep.values = sw.at("values").get<std::vector<double>>();
      s.sweep = sweep;
    }
    if (j.contains("attack") && !j.at("attack").is_null()) s.attack = j.at("attack").get<AttackConfig>();
    if (j.contains("amplification_steps") && !j.at("amplification_steps").is_null())
      s.amplification_steps = j.at("amplification_steps").get<int>();
    if (j.contains("trials_per_point")) s.trials_per_point = j.at("trials_per_point").get<int>();
    if (j.contains("seed")) s.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("output")) s.output = j.at("output").get<std::string>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("experiment: ") + e.what());
  }
}

void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& task) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, std::max<std::size_t>(n, 1)));
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < n && !failed; i = next++) {
      try {
        task(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        failed = true;
      }
    }
  };
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  if (error) std::rethrow_exception(error);
}

std::string format_number(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

const char* git_describe() { return KLJN_GIT_DESCRIBE; }

namespace {

AttackRun session_only(const SessionConfig& cfg, const SessionSeeds& seeds) {
  AttackRun run;
  run.session = run_session(cfg, seeds);
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

}  // namespace

ExperimentResult run_experiment(const ExperimentSpec& spec, const RunOptions& opts) {
  using clock = std::chrono::steady_clock;
  const auto t0 = clock::now();
  spec.validate();

  const std::size_t n_points = spec.n_points();
  const std::size_t n_trials = static_cast<std::size_t>(spec.trials_per_point);
  std::vector<std::pair<SessionConfig, std::optional<AttackConfig>>> points;
  points.reserve(n_points);
  for (std::size_t p = 0; p < n_points; ++p) points.push_back(spec.point(p));

  std::vector<AttackRun> runs(n_points * n_trials);
  std::vector<double> task_seconds(runs.size(), 0.0);
  const unsigned threads = opts.threads ? opts.threads : std::max(1u, std::thread::hardware_concurrency());
  parallel_for(runs.size(), threads, [&](std::size_t idx) {
    const auto start = clock::now();
    const std::size_t p = idx / n_trials;
    const std::size_t t = idx % n_trials;
    const SessionSeeds seeds = trial_seeds(spec.seed, t);
    const auto& [cfg, attack] = points[p];
    runs[idx] = attack ? run_attack(cfg, seeds, *attack) : session_only(cfg, seeds);
    task_seconds[idx] = std::chrono::duration<double>(clock::now() - start).count();
  });

  ExperimentResult result;
  result.threads = threads;
  const std::string path = spec.sweep ? spec.resolved_sweep_path() : std::string{};
  for (std::size_t p = 0; p < n_points; ++p) {
    const auto& [cfg, attack] = points[p];
    const std::span<const AttackRun> slice(runs.data() + p * n_trials, n_trials);
    ExperimentRow row;
    row.point = p;
    row.sweep_path = path;
    row.sweep_value = spec.sweep ? spec.sweep->values[p] : 0.0;
    row.trials = spec.trials_per_point;
    row.attack = pool_runs(slice);

    long mismatches = 0;
    Bits truth, guesses;
    for (const auto& r : slice) {
      row.bits_completed += r.session.bits_completed;
      row.sifted_bits += static_cast<long>(r.session.sifted_indices.size());
      for (std::size_t i = 0; i < r.session.shared_key_alice.size(); ++i)
        mismatches += r.session.shared_key_alice[i] != r.session.shared_key_bob[i];
      truth.insert(truth.end(), r.truth.begin(), r.truth.end());
      guesses.insert(guesses.end(), r.guesses.begin(), r.guesses.end());
    }
    row.ber = row.sifted_bits ? static_cast<double>(mismatches) / static_cast<double>(row.sifted_bits) : 0.0;
    row.sift_fraction =
        row.bits_completed ? static_cast<double>(row.sifted_bits) / static_cast<double>(row.bits_completed) : 0.0;

    row.key_len_after = static_cast<std::size_t>(row.sifted_bits);
    if (attack) {
      row.kind = std::string(to_string(attack->kind));
      row.tap_point = std::string(to_string(attack->tap_point));
      row.param = attack->param_value(attack->apply(cfg));
      row.amp_steps = spec.amplification_steps.value_or(0);
      if (!truth.empty()) {
        if (truth.size() < (std::size_t{1} << row.amp_steps))
          throw ConfigError("amplification_steps " + std::to_string(row.amp_steps) + " exceeds the " +
                            std::to_string(truth.size()) + " scored bits at point " + std::to_string(p));
        row.key_len_after = amplify(truth, row.amp_steps).size();
        row.predicted_leak = predict_leak(row.attack.leak_fraction, row.amp_steps, LeakModel::certainty);
        row.empirical_leak = empirical_leak(truth, guesses, row.amp_steps);
      } else {
        row.key_len_after = 0;
      }
    }
    for (std::size_t t = 0; t < n_trials; ++t) row.wall_seconds += task_seconds[p * n_trials + t];
    result.rows.push_back(std::move(row));
  }
  result.wall_seconds = std::chrono::duration<double>(clock::now() - t0).count();
  return result;
}

std::string experiment_csv_header() {
  return "point,sweep_path,sweep_value,kind,tap_point,param,trials,bits_completed,sifted_bits,ber,sift_fraction,"
         "n_trials,p,ci95,ci_low,ci_high,leak_fraction,leak_mi,alarms,sessions_alarmed,"
         "bits_extracted_before_alarm,amp_steps,key_len_after,predicted_leak,empirical_leak";
}

void write_experiment_csv(std::ostream& out, const ExperimentResult& result) {
  out << "#schema=" << kExperimentSchema << '\n' << experiment_csv_header() << '\n';
  for (const auto& r : result.rows) {
    const auto& a = r.attack;
    out << r.point << ',' << r.sweep_path << ',' << format_number(r.sweep_value) << ',' << r.kind << ','
        << r.tap_point << ',' << format_number(r.param) << ',' << r.trials << ',' << r.bits_completed << ','
        << r.sifted_bits << ',' << format_number(r.ber) << ',' << format_number(r.sift_fraction) << ','
        << a.n_trials << ',' << format_number(a.success_rate) << ',' << format_number(a.ci95) << ','
        << format_number(a.ci_low) << ',' << format_number(a.ci_high) << ',' << format_number(a.leak_fraction)
        << ',' << format_number(a.leak_mutual_info) << ',' << a.alarms_triggered << ',' << a.sessions_alarmed
        << ',' << a.bits_extracted_before_alarm << ',' << r.amp_steps << ',' << r.key_len_after << ','
        << format_number(r.predicted_leak) << ',' << format_number(r.empirical_leak) << '\n';
  }
}

json experiment_summary(const ExperimentSpec& spec, const ExperimentResult& result) {
  json rows = json::array();
  for (const auto& r : result.rows) {
    rows.push_back({{"point", r.point},
                    {"sweep_value", r.sweep_value},
                    {"kind", r.kind},
                    {"param", r.param},
                    {"ber", r.ber},
                    {"sift_fraction", r.sift_fraction},
                    {"sifted_bits", r.sifted_bits},
                    {"attack", r.attack},
                    {"key_len_after", r.key_len_after},
                    {"predicted_leak", r.predicted_leak},
                    {"empirical_leak", r.empirical_leak},
                    {"wall_seconds", r.wall_seconds}});
  }
  return json{{"schema", kExperimentSchema},
              {"name", spec.name},
              {"spec", spec},
              {"git_describe", git_describe()},
              {"threads", result.threads},
              {"timings", {{"total_seconds", result.wall_seconds}}},
              {"rows", rows}};
}

void write_experiment_outputs(const std::string& prefix, const ExperimentSpec& spec, const ExperimentResult& result) {
  const std::string csv_path = prefix + ".csv";
  const std::string json_path = prefix + ".summary.json";
  {
    std::ofstream csv(csv_path, std::ios::binary);
    if (!csv) throw std::runtime_error("cannot write " + csv_path);
    write_experiment_csv(csv, result);
    if (!csv) throw std::runtime_error("write failed: " + csv_path);
  }
  std::ofstream js(json_path, std::ios::binary);
  if (!js) throw std::runtime_error("cannot write " + json_path);
  js << experiment_summary(spec, result).dump(2) << '\n';
  if (!js) throw std::runtime_error("write failed: " + json_path);
}

}  // namespace kljn
