#include "kljn/circuit.hpp"
#include "kljn/noise.hpp"

#include "doctest.h"

#include <cmath>

using namespace kljn;

namespace {

struct Pair {
  Signal u_a, u_b;
};

Pair johnson_pair(double r_a, double r_b, Eigen::Index n, std::uint64_t seed) {
  NoiseConfig cfg;
  cfg.seed = seed;
  Xoshiro256 ga = make_stream(seed, Stream::alice_noise);
  Xoshiro256 gb = make_stream(seed, Stream::bob_noise);
  return {gen_johnson_noise(cfg, r_a, n, ga), gen_johnson_noise(cfg, r_b, n, gb)};
}

double in_band(const Signal& x) {
  const PsdEstimate est = estimate_psd(x, 20000.0);
  return est.band_mean(2.0 * est.resolution_hz, 1000.0 - 2.0 * est.resolution_hz);
}

/// Mean of x and its standard error from per-block means (blocks are independent).
std::pair<double, double> block_mean(const Signal& x, Eigen::Index block) {
  const Eigen::Index nb = x.size() / block;
  Signal means(nb);
  for (Eigen::Index b = 0; b < nb; ++b) means[b] = x.segment(b * block, block).mean();
  const double m = means.mean();
  const double var = (means.array() - m).square().sum() / static_cast<double>(nb - 1);
  return {m, std::sqrt(var / static_cast<double>(nb))};
}

}  // namespace

TEST_CASE("solve_ideal: symmetric divider") {
  const Signal ua = Signal::Constant(1, 1.0);
  const Signal ub = Signal::Zero(1);
  const Trace t = solve_ideal(ua, ub, 1.0, 1.0);
  CHECK(t.u_ch[0] == 0.5);
  CHECK(t.i_ch[0] == 0.5);
}

TEST_CASE("solve_ideal: swapping the parties negates the current only") {
  const auto [ua, ub] = johnson_pair(2.0, 3.0, 4096, 3);
  const Trace t = solve_ideal(ua, ub, 2.0, 3.0);
  const Trace s = solve_ideal(ub, ua, 3.0, 2.0);
  CHECK((t.u_ch - s.u_ch).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((t.i_ch + s.i_ch).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("solve_ideal: argument errors") {
  const Signal a = Signal::Zero(4), b = Signal::Zero(5);
  CHECK_THROWS_AS(solve_ideal(a, b, 1.0, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(solve_ideal(a, a, 0.0, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(solve_ideal(a, a, -1.0, 2.0), std::invalid_argument);
}

TEST_CASE("linearity") {
  const auto [ua, ub] = johnson_pair(2.0, 3.0, 4096, 4);
  const double alpha = 3.7;
  const Trace t = solve_ideal(ua, ub, 2.0, 3.0);
  const Trace s = solve_ideal(Signal(alpha * ua), Signal(alpha * ub), 2.0, 3.0);
  const double scale = t.u_ch.cwiseAbs().maxCoeff();
  CHECK((s.u_ch - alpha * t.u_ch).cwiseAbs().maxCoeff() <= 8.0 * alpha * scale * 1e-16);
  CHECK((s.i_ch - alpha * t.i_ch).cwiseAbs().maxCoeff() <= 8.0 * alpha * scale * 1e-16);

  WireModel wire{50.0, 1e-6, false};
  const TraceEnds e = solve_nonideal(ua, ub, 2000.0, 3000.0, wire, 5e-5);
  const TraceEnds f = solve_nonideal(Signal(alpha * ua), Signal(alpha * ub), 2000.0, 3000.0, wire, 5e-5);
  CHECK((f.u_mid - alpha * e.u_mid).cwiseAbs().maxCoeff() <= 1e-12 * alpha * scale);
}

TEST_CASE("channel spectra of an LH loop") {
  const Eigen::Index n = Eigen::Index{1} << 20;
  const auto [ua, ub] = johnson_pair(2.0, 3.0, n, 11);
  const Trace t = solve_ideal(ua, ub, 2.0, 3.0);
  CHECK(in_band(t.u_ch) == doctest::Approx(1.2).epsilon(0.10));
  CHECK(in_band(t.i_ch) == doctest::Approx(0.2).epsilon(0.10));

  const Signal zero = Signal::Zero(n);
  const Trace from_a = solve_ideal(ua, zero, 2.0, 3.0);
  CHECK(in_band(from_a.u_ch) == doctest::Approx(2.0 * 9.0 / 25.0).epsilon(0.10));
  CHECK(in_band(from_a.i_ch) == doctest::Approx(2.0 / 25.0).epsilon(0.10));
  const Trace from_b = solve_ideal(zero, ub, 2.0, 3.0);
  CHECK(in_band(from_b.u_ch) == doctest::Approx(3.0 * 4.0 / 25.0).epsilon(0.10));
  CHECK(in_band(from_b.i_ch) == doctest::Approx(3.0 / 25.0).epsilon(0.10));
}

TEST_CASE("zero cross-correlation on an ideal wire") {
  for (auto [ra, rb] : {std::pair{2.0, 3.0}, std::pair{3.0, 2.0}}) {
    const auto [ua, ub] = johnson_pair(ra, rb, Eigen::Index{1} << 19, 21);
    const Trace t = solve_ideal(ua, ub, ra, rb);
    const auto [m, se] = block_mean(Signal(t.u_ch.cwiseProduct(t.i_ch)), 4096);
    CHECK(std::abs(m) < 4.0 * se);
  }
}

TEST_CASE("power flows") {
  const auto [ua, ub] = johnson_pair(2.0, 3.0, Eigen::Index{1} << 20, 31);
  const PowerReport only_a = power_flows(ua, Signal(Signal::Zero(ua.size())), 2.0, 3.0);
  CHECK(only_a.p_b_to_a == 0.0);
  CHECK(only_a.p_a_to_b > 0.0);

  const PowerReport p = power_flows(ua, ub, 2.0, 3.0);
  NoiseConfig cfg;
  const double n_eff = 2.0 * cfg.in_band_bins() * static_cast<double>(ua.size() / cfg.samples_per_bit);
  // Each power is a mean square: relative SE sqrt(2 / n_eff). The two are independent.
  const double se = 240.0 * std::sqrt(2.0 / n_eff);
  CHECK(std::abs(p.p_a_to_b - 240.0) < 4.0 * se);
  CHECK(std::abs(p.p_b_to_a - 240.0) < 4.0 * se);
  CHECK(std::abs(p.p_a_to_b - p.p_b_to_a) < 4.0 * std::sqrt(2.0) * se);
}

TEST_CASE("solve_nonideal: degenerate wire equals the ideal loop") {
  const auto [ua, ub] = johnson_pair(1000.0, 10000.0, 4096, 5);
  const Trace t = solve_ideal(ua, ub, 1000.0, 10000.0);
  const TraceEnds e = solve_nonideal(ua, ub, 1000.0, 10000.0, WireModel{}, 5e-5);
  CHECK((e.u_mid - t.u_ch).cwiseAbs().maxCoeff() == 0.0);
  CHECK((e.u_end_a - t.u_ch).cwiseAbs().maxCoeff() == 0.0);
  CHECK((e.u_end_b - t.u_ch).cwiseAbs().maxCoeff() == 0.0);
  CHECK((e.i_a - t.i_ch).cwiseAbs().maxCoeff() == 0.0);
  CHECK((e.i_b + t.i_ch).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("solve_nonideal: capacitor killer behaves as c = 0") {
  const auto [ua, ub] = johnson_pair(1000.0, 10000.0, 4096, 6);
  const TraceEnds killed = solve_nonideal(ua, ub, 1000.0, 10000.0, WireModel{100.0, 1e-6, true}, 5e-5);
  const TraceEnds none = solve_nonideal(ua, ub, 1000.0, 10000.0, WireModel{100.0, 0.0, false}, 5e-5);
  CHECK((killed.u_mid - none.u_mid).cwiseAbs().maxCoeff() == 0.0);
  CHECK((killed.i_a - none.i_a).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("solve_nonideal: end voltages differ by the wire drop") {
  const auto [ua, ub] = johnson_pair(1000.0, 10000.0, 4096, 7);
  const double r_wire = 100.0;
  const TraceEnds e = solve_nonideal(ua, ub, 1000.0, 10000.0, WireModel{r_wire, 0.0, false}, 5e-5);
  CHECK((e.i_a + e.i_b).cwiseAbs().maxCoeff() < 1e-18);
  const Signal drop = e.i_a * r_wire;
  const double scale = e.u_end_a.cwiseAbs().maxCoeff();
  CHECK((e.u_end_a - e.u_end_b - drop).cwiseAbs().maxCoeff() <= 1e-12 * scale);
}

TEST_CASE("solve_nonideal: RC step response") {
  const double r = 1000.0, r_wire = 100.0, c = 1e-9;
  const WireModel wire{r_wire, c, false};
  LoopIntegrator<double> probe(r, r, wire, 1e-12);
  const double tau = probe.time_constant();
  CHECK(tau == doctest::Approx(525e-9));
  const double dt = tau / 50.0;
  const Eigen::Index n = 500;
  const TraceEnds e = solve_nonideal(Signal(Signal::Ones(n)), Signal(Signal::Zero(n)), r, r, wire, dt);
  CHECK(e.u_mid[0] == 0.0);
  for (Eigen::Index k = 0; k < n; k += 25) {
    const double exact = 0.5 * (1.0 - std::exp(-static_cast<double>(k) * dt / tau));
    CHECK(e.u_mid[k] == doctest::Approx(exact).epsilon(1e-3).scale(1.0));
  }
  const Eigen::Index settled = warmup_samples(wire, probe.thevenin_resistance(), dt);
  CHECK(settled == 250);
  CHECK(e.u_mid[settled] == doctest::Approx(0.5).epsilon(0.01));
  // End B sits on the far side of r_wire/2 from the midpoint.
  CHECK(e.u_end_b[n - 1] == doctest::Approx(1000.0 / 2100.0).epsilon(1e-3));
  CHECK(e.u_end_a[n - 1] == doctest::Approx(1100.0 / 2100.0).epsilon(1e-3));
}

TEST_CASE("solve_nonideal: accuracy guard and argument errors") {
  const Signal x = Signal::Zero(8);
  CHECK_THROWS_AS(solve_nonideal(x, x, 1000.0, 1000.0, WireModel{100.0, 1e-9, false}, 1e-6),
                  std::invalid_argument);
  CHECK_NOTHROW(solve_nonideal(x, x, 1000.0, 1000.0, WireModel{100.0, 1e-9, true}, 1e-6));
  CHECK_THROWS_AS(solve_nonideal(x, x, 0.0, 1000.0, WireModel{}, 1e-6), std::invalid_argument);
  CHECK_THROWS_AS(solve_nonideal(x, x, 1000.0, 1000.0, WireModel{}, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(solve_nonideal(x, x, 1000.0, 1000.0, WireModel{-1.0, 0.0, false}, 1e-6),
                  std::invalid_argument);
  CHECK_THROWS_AS(solve_nonideal(x, x, 1000.0, 1000.0, WireModel{}, 1e-6, Signal(Signal::Zero(3))),
                  std::invalid_argument);
}

TEST_CASE("injection into the midpoint splits by conductance") {
  const Eigen::Index n = 4;
  const Signal z = Signal::Zero(n);
  const Signal inj = Signal::Constant(n, 1e-3);
  const TraceEnds e = solve_nonideal(z, z, 1000.0, 3000.0, WireModel{0.0, 0.0, false}, 1.0, inj);
  // With both sources silent, each current flows back into its source.
  CHECK(e.i_a[0] == doctest::Approx(-0.75e-3));
  CHECK(e.i_b[0] == doctest::Approx(-0.25e-3));
  CHECK(e.u_mid[0] == doctest::Approx(0.75));
}
