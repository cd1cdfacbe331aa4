// kljn: command-line front end for the simulator, attack sweeps, the BB84
// baseline, privacy amplification and the networked processes.

#include "kljn/config_json.hpp"
#include "kljn/harness.hpp"
#include "kljn/netwire.hpp"
#include "kljn/privacy.hpp"
#include "kljn/qkd_oracle.hpp"

#include "CLI11.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <iterator>
#include <sstream>

namespace {

using namespace kljn;
using nlohmann::json;

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool quiet = false;
  unsigned threads = 0;
};

void add_common(CLI::App* app, Common& c, bool config_required) {
  auto* opt = app->add_option("--config", c.config, "JSON configuration file");
  if (config_required) opt->required();
  app->add_option("--seed", c.seed, "64-bit master seed (overrides the config)");
  app->add_option("--out", c.out, "output path prefix");
  app->add_flag("--quiet", c.quiet, "suppress the summary line");
}

ExperimentSpec load_spec(const Common& c) {
  ExperimentSpec spec = read_json_file(c.config).get<ExperimentSpec>();
  if (c.seed) spec.seed = *c.seed;
  if (!c.out.empty())
    spec.output = c.out;
  else if (spec.output.empty())
    spec.output = std::filesystem::path(c.config).stem().string();
  return spec;
}

/// Accepts either an experiment spec (uses its base) or a bare session config.
SessionConfig load_session(const std::string& path) {
  const json j = read_json_file(path);
  if (j.is_object() && j.contains("base")) return j.get<ExperimentSpec>().base;
  return j.get<SessionConfig>();
}

std::vector<std::uint8_t> read_key_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open auth key file: " + path);
  std::vector<std::uint8_t> key((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (key.empty()) throw ConfigError("auth key file is empty: " + path);
  return key;
}

std::pair<int, int> parse_range(const std::string& s) {
  const auto dots = s.find("..");
  try {
    if (dots == std::string::npos) {
      const int n = std::stoi(s);
      return {n, n};
    }
    return {std::stoi(s.substr(0, dots)), std::stoi(s.substr(dots + 2))};
  } catch (const std::exception&) {
    throw ConfigError("bad range '" + s + "' (expected N or A..B)");
  }
}

std::ofstream open_csv(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  return out;
}

int run_spec(const Common& c, bool require_attack) {
  ExperimentSpec spec = load_spec(c);
  if (require_attack && (!spec.attack || !spec.sweep))
    throw ConfigError("attack-sweep needs both 'attack' and 'sweep' in " + c.config);
  const ExperimentResult result = run_experiment(spec, {c.threads});
  write_experiment_outputs(spec.output, spec, result);
  if (!c.quiet) {
    long bits = 0, sifted = 0;
    int alarms = 0;
    for (const auto& r : result.rows) {
      bits += r.bits_completed;
      sifted += r.sifted_bits;
      alarms += r.attack.alarms_triggered;
    }
    std::cout << spec.name << ": " << result.rows.size() << " point(s) x " << spec.trials_per_point
              << " trial(s), " << bits << " bits, " << sifted << " sifted, " << alarms << " alarm(s)";
    if (spec.attack) {
      const auto& last = result.rows.back().attack;
      std::cout << ", " << to_string(spec.attack->kind) << " p=" << format_number(last.success_rate)
                << " (last point)";
    }
    std::cout << " -> " << spec.output << ".csv [" << result.wall_seconds << " s]\n";
  }
  return 0;
}

void write_psd(const std::string& path, const ExperimentSpec& spec) {
  // Alice on R_L, Bob on R_H, ideal wire; 64 bit periods of samples.
  const SessionConfig& cfg = spec.base;
  const SessionSeeds seeds = trial_seeds(spec.seed, 0);
  JohnsonNoiseSource a(cfg.noise, make_stream(seeds.alice, Stream::alice_noise));
  JohnsonNoiseSource b(cfg.noise, make_stream(seeds.bob, Stream::bob_noise));
  const double r_l = cfg.resistors.r_low, r_h = cfg.resistors.r_high;
  const Eigen::Index n = 64 * cfg.noise.samples_per_bit;
  const Trace t = solve_ideal(a.samples(r_l, n), b.samples(r_h, n), r_l, r_h, cfg.noise.dt());
  const PsdEstimate su = estimate_psd(t.u_ch, cfg.noise.sample_rate_hz);
  const PsdEstimate si = estimate_psd(t.i_ch, cfg.noise.sample_rate_hz);
  const double s_u = cfg.noise.four_kt() * r_l * r_h / (r_l + r_h);
  const double s_i = cfg.noise.four_kt() / (r_l + r_h);
  std::ofstream out = open_csv(path);
  out << "#schema=" << kPsdSchema << "\nfreq_hz,s_u_ch,s_i_ch,s_u_ch_analytic,s_i_ch_analytic\n";
  for (Eigen::Index k = 0; k < su.freqs.size(); ++k) {
    const double f = su.freqs[k];
    const bool in_band = f > 0.0 && f <= cfg.noise.bandwidth_hz;
    out << format_number(f) << ',' << format_number(su.psd[k]) << ',' << format_number(si.psd[k]) << ','
        << format_number(in_band ? s_u : 0.0) << ',' << format_number(in_band ? s_i : 0.0) << '\n';
  }
}

int cmd_bb84(const std::string& range, long trials, std::uint64_t seed, const std::string& out_prefix, bool quiet,
             unsigned threads) {
  const auto [lo, hi] = parse_range(range);
  if (lo < 0 || hi < lo) throw ConfigError("bb84-oracle: need 0 <= A <= B in --n A..B");
  const std::size_t count = static_cast<std::size_t>(hi - lo + 1);
  std::vector<DetectionEstimate> est(count);
  parallel_for(count, threads, [&](std::size_t i) {
    const int n = lo + static_cast<int>(i);
    Xoshiro256 rng = make_stream(derive_seed({seed, static_cast<std::uint64_t>(n)}), Stream::harness);
    est[i] = simulate_intercept_resend(n, trials, rng);
  });
  const std::string path = out_prefix + ".csv";
  std::ofstream out = open_csv(path);
  out << "#schema=" << kBb84Schema << "\nn,trials,analytic,empirical,std_error,ci95,detections\n";
  for (const auto& e : est)
    out << e.n << ',' << e.trials << ',' << format_number(detection_probability(e.n)) << ','
        << format_number(e.probability) << ',' << format_number(e.std_error) << ',' << format_number(e.ci95) << ','
        << e.detections << '\n';
  if (!quiet) std::cout << "bb84-oracle: n=" << lo << ".." << hi << ", " << trials << " trials each -> " << path << '\n';
  return 0;
}

int cmd_amplify(const std::vector<double>& ps, int max_steps, long bits, const std::string& model_name,
                std::uint64_t seed, const std::string& out_prefix, bool quiet) {
  const LeakModel model = parse_leak_model(model_name);
  if (max_steps < 0 || bits < 2) throw ConfigError("amplify: need --max-steps >= 0 and --bits >= 2");
  const std::string path = out_prefix + ".csv";
  std::ofstream out = open_csv(path);
  out << "#schema=" << kAmplificationSchema << "\nmodel,p,steps,key_len,predicted_leak,empirical_leak,std_error\n";
  for (std::size_t pi = 0; pi < ps.size(); ++pi) {
    const double p = ps[pi];
    if (!(p >= 0.5 && p <= 1.0)) throw ConfigError("amplify: p must be in [0.5, 1]");
    Xoshiro256 rng = make_stream(derive_seed({seed, pi}), Stream::harness);
    Bits alice(static_cast<std::size_t>(bits)), eve(alice.size());
    const double leak = 2.0 * p - 1.0;
    for (std::size_t i = 0; i < alice.size(); ++i) {
      alice[i] = rng.bit();
      if (model == LeakModel::certainty)
        eve[i] = rng.uniform() < leak ? alice[i] : rng.bit();  // known exactly, or a coin flip
      else
        eve[i] = rng.uniform() < p ? alice[i] : alice[i] ^ 1;
    }
    for (int s = 0; s <= max_steps && (std::size_t{1} << s) <= alice.size(); ++s) {
      const std::size_t len = alice.size() >> s;
      const double emp = empirical_leak(alice, eve, s);
      const double q = (1.0 + emp) / 2.0;
      const double se = 2.0 * std::sqrt(std::max(q * (1.0 - q), 0.0) / static_cast<double>(len));
      out << to_string(model) << ',' << format_number(p) << ',' << s << ',' << len << ','
          << format_number(predict_leak(leak, s, model)) << ',' << format_number(emp) << ',' << format_number(se)
          << '\n';
    }
  }
  if (!quiet) std::cout << "amplify: " << ps.size() << " p value(s), steps 0.." << max_steps << " -> " << path << '\n';
  return 0;
}

int cmd_report(const std::string& in) {
  const json s = read_json_file(in);
  if (s.value("schema", "") != kExperimentSchema) throw ConfigError(in + ": not a " + kExperimentSchema + " summary");
  std::cout << s.value("name", "?") << " (" << s.value("git_describe", "?") << ")\n";
  std::cout << "point  sweep_value  kind  p  ci95  leak_fraction  alarms  sifted\n";
  for (const auto& r : s.at("rows")) {
    const auto& a = r.at("attack");
    std::cout << r.at("point") << "  " << r.at("sweep_value") << "  " << r.at("kind").get<std::string>() << "  "
              << a.at("success_rate") << "  " << a.at("ci95") << "  " << a.at("leak_fraction") << "  "
              << a.at("alarms_triggered") << "  " << r.at("sifted_bits") << '\n';
  }
  return 0;
}

void print_party(const net::PartyOutcome& o, net::Role role, const std::string& out_path, bool quiet) {
  const SessionResult& r = o.result;
  const Bits& key = role == net::Role::alice ? r.shared_key_alice : r.shared_key_bob;
  if (!out_path.empty()) {
    std::ofstream out(out_path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + out_path);
    json j = r;
    j["role"] = net::to_string(role);
    j["abort_reason"] = o.abort_reason;
    j["retransmits"] = o.channel.retransmits;
    j["crc_failures"] = o.channel.crc_failures;
    out << j.dump(2) << '\n';
  }
  if (!quiet)
    std::cout << net::to_string(role) << ": " << r.bits_completed << " bits, key " << key.size() << " bits ["
              << bits_to_hex(key) << "], " << r.alarms.size() << " alarm(s)"
              << (r.aborted ? ", aborted: " + o.abort_reason : std::string()) << '\n';
}

void write_channel(const net::ChannelReport& r, const std::string& out_path) {
  std::ofstream out(out_path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + out_path);
  auto link = [](const net::LinkStats& s) {
    return json{{"frames_sent", s.frames_sent},   {"frames_received", s.frames_received},
                {"crc_failures", s.crc_failures}, {"retransmits", s.retransmits},
                {"corrupted", s.corrupted}};
  };
  const json j{{"bits_completed", r.bits_completed}, {"aborted", r.aborted}, {"reason", r.reason},
               {"alice_link", link(r.alice)},       {"bob_link", link(r.bob)}};
  out << j.dump(2) << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"KLJN secure key exchange simulator"};
  app.require_subcommand(1);

  Common sim, sweep, net_c;
  std::string psd_out;
  auto* simulate = app.add_subcommand("simulate", "run an experiment spec (sessions, optional attack and sweep)");
  add_common(simulate, sim, true);
  simulate->add_option("--threads", sim.threads, "worker threads (0: all cores)");
  simulate->add_option("--psd-out", psd_out, "also write channel PSDs of an LH loop to this CSV");

  auto* attack_sweep = app.add_subcommand("attack-sweep", "run an attack over a parameter sweep");
  add_common(attack_sweep, sweep, true);
  attack_sweep->add_option("--threads", sweep.threads, "worker threads (0: all cores)");

  std::vector<double> amp_p{0.6, 0.75, 0.9};
  int amp_steps = 3;
  long amp_bits = 1'000'000;
  std::string amp_model = "advantage";
  std::uint64_t amp_seed = 1;
  std::string amp_out = "amplification";
  bool amp_quiet = false;
  auto* amplify_cmd = app.add_subcommand("amplify", "empirical vs predicted leak under XOR privacy amplification");
  amplify_cmd->add_option("--p", amp_p, "Eve's per-bit success probabilities")->delimiter(',');
  amplify_cmd->add_option("--max-steps", amp_steps, "largest number of XOR halvings");
  amplify_cmd->add_option("--bits", amp_bits, "raw key length");
  amplify_cmd->add_option("--model", amp_model, "certainty | advantage");
  amplify_cmd->add_option("--seed", amp_seed, "64-bit seed");
  amplify_cmd->add_option("--out", amp_out, "output path prefix");
  amplify_cmd->add_flag("--quiet", amp_quiet);

  std::string bb_range = "1..10";
  long bb_trials = 100000;
  std::uint64_t bb_seed = 1;
  std::string bb_out = "bb84";
  bool bb_quiet = false;
  unsigned bb_threads = 0;
  auto* bb84 = app.add_subcommand("bb84-oracle", "BB84 intercept-resend detection vs 1 - (3/4)^n");
  bb84->add_option("--n", bb_range, "N or A..B");
  bb84->add_option("--trials", bb_trials, "Monte Carlo trials per n");
  bb84->add_option("--seed", bb_seed, "64-bit seed");
  bb84->add_option("--out", bb_out, "output path prefix");
  bb84->add_option("--threads", bb_threads, "worker threads (0: all cores)");
  bb84->add_flag("--quiet", bb_quiet);

  // Networked processes.
  std::string connect, listen, compare, key_file, mode = "tap", eve_net = "none";
  std::uint64_t session_id = 1;
  double timeout_s = 5.0, corrupt_rate = 0.0;
  auto add_net = [&](CLI::App* a) {
    add_common(a, net_c, true);
    a->add_option("--session-id", session_id, "shared session identifier");
    a->add_option("--timeout", timeout_s, "receive timeout in seconds");
  };
  auto* net_alice = app.add_subcommand("net-alice", "Alice process");
  auto* net_bob = app.add_subcommand("net-bob", "Bob process");
  for (auto* a : {net_alice, net_bob}) {
    add_net(a);
    a->add_option("--connect", connect, "channel host:port")->required();
    a->add_option("--compare", compare, "comparison link host:port (Alice listens, Bob connects)")->required();
    a->add_option("--auth-key-file", key_file, "pre-shared authentication key")->required();
    a->add_option("--corrupt-rate", corrupt_rate, "probability of damaging an outgoing frame");
  }
  auto* net_channel = app.add_subcommand("net-channel", "wire emulator process");
  add_net(net_channel);
  net_channel->add_option("--listen", listen, "host:port")->required();
  net_channel->add_option("--corrupt-rate", corrupt_rate, "probability of damaging an outgoing frame");
  net_channel->add_option("--eve", eve_net, "expect an Eve endpoint: none | tap | inject");
  auto* net_eve = app.add_subcommand("net-eve", "Eve process: tap, inject, or splitter (replaces the channel)");
  add_net(net_eve);
  net_eve->add_option("--mode", mode, "tap | inject | splitter");
  net_eve->add_option("--connect", connect, "channel host:port (tap, inject)");
  net_eve->add_option("--listen", listen, "host:port (splitter)");

  std::string report_in;
  auto* report = app.add_subcommand("report", "print a summary JSON as a table");
  report->add_option("--in", report_in, "<prefix>.summary.json")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    if (rc == 0) return 0;
    std::cerr << app.help();
    return 2;
  }

  try {
    if (*simulate) {
      const int rc = run_spec(sim, false);
      if (!psd_out.empty()) write_psd(psd_out, load_spec(sim));
      return rc;
    }
    if (*attack_sweep) return run_spec(sweep, true);
    if (*amplify_cmd) return cmd_amplify(amp_p, amp_steps, amp_bits, amp_model, amp_seed, amp_out, amp_quiet);
    if (*bb84) return cmd_bb84(bb_range, bb_trials, bb_seed, bb_out, bb_quiet, bb_threads);
    if (*report) return cmd_report(report_in);

    const SessionConfig cfg = load_session(net_c.config);
    const SessionSeeds seeds = trial_seeds(net_c.seed.value_or(1), 0);
    if (*net_alice || *net_bob) {
      net::PartyOptions o;
      o.role = *net_alice ? net::Role::alice : net::Role::bob;
      o.channel = net::Endpoint::parse(connect);
      o.compare = net::Endpoint::parse(compare);
      o.cfg = cfg;
      o.seed = o.role == net::Role::alice ? seeds.alice : seeds.bob;
      o.session_id = session_id;
      o.auth_key = read_key_file(key_file);
      o.timeout_s = timeout_s;
      o.corrupt_rate = corrupt_rate;
      const net::PartyOutcome res = net::run_party(o);
      print_party(res, o.role, net_c.out.empty() ? std::string() : net_c.out + ".json", net_c.quiet);
      return res.result.aborted ? 3 : 0;
    }
    if (*net_channel) {
      net::ChannelOptions o;
      o.listen = net::Endpoint::parse(listen);
      o.cfg = cfg;
      o.session_id = session_id;
      o.timeout_s = timeout_s;
      o.corrupt_rate = corrupt_rate;
      o.corrupt_seed = net_c.seed.value_or(1);
      o.eve = net::parse_eve_mode(eve_net);
      const net::ChannelReport r = net::run_channel(o);
      if (!net_c.out.empty()) write_channel(r, net_c.out + ".json");
      if (!net_c.quiet)
        std::cout << "channel: " << r.bits_completed << " bits, retransmits " << r.alice.retransmits + r.bob.retransmits
                  << (r.aborted ? ", aborted: " + r.reason : std::string()) << '\n';
      return r.aborted ? 3 : 0;
    }
    if (*net_eve) {
      if (mode == "splitter") {
        net::ChannelOptions o;
        o.listen = net::Endpoint::parse(listen);
        o.cfg = cfg;
        o.session_id = session_id;
        o.timeout_s = timeout_s;
        o.splitter = true;
        o.eve_seed = seeds.eve;
        const net::ChannelReport r = net::run_channel(o);
        if (!net_c.quiet)
          std::cout << "eve (splitter): " << r.bits_completed << " bits"
                    << (r.aborted ? ", session aborted: " + r.reason : std::string()) << '\n';
        return 0;
      }
      net::EveOptions o;
      o.channel = net::Endpoint::parse(connect);
      o.mode = net::parse_eve_mode(mode);
      o.cfg = cfg;
      o.seed = seeds.eve;
      o.session_id = session_id;
      o.timeout_s = timeout_s;
      const net::EveReport r = net::run_eve(o);
      if (!net_c.out.empty()) {
        std::ofstream out = open_csv(net_c.out + ".csv");
        out << "bit,statistic,guess\n";
        for (std::size_t i = 0; i < r.guesses.size(); ++i)
          out << i << ',' << format_number(r.statistic[i]) << ',' << int(r.guesses[i]) << '\n';
      }
      if (!net_c.quiet)
        std::cout << "eve (" << mode << "): observed " << r.bits_observed << " bits"
                  << (r.aborted ? ", session aborted" : "") << '\n';
      return 0;
    }
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
