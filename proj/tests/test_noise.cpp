#include "kljn/noise.hpp"

#include "doctest.h"

#include <cmath>

using namespace kljn;

namespace {

NoiseConfig normalized() {
  NoiseConfig cfg;
  cfg.seed = 12345;
  return cfg;
}

double variance(const Signal& x) {
  const double m = x.mean();
  return (x.array() - m).square().mean();
}

/// Independent real degrees of freedom in n samples: 2 per in-band bin per block.
double effective_samples(const NoiseConfig& cfg, Eigen::Index n) {
  return 2.0 * cfg.in_band_bins() * static_cast<double>(n) / cfg.samples_per_bit;
}

}  // namespace

TEST_CASE("zero resistance gives an all-zero vector") {
  const Signal x = gen_johnson_noise(normalized(), 0.0, 5000);
  CHECK(x.size() == 5000);
  CHECK(x.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("invalid arguments are rejected") {
  CHECK_THROWS_AS(gen_johnson_noise(normalized(), -1.0, 10), std::invalid_argument);
  CHECK_THROWS_AS(gen_johnson_noise(normalized(), 1.0, 0), std::invalid_argument);
  NoiseConfig slow = normalized();
  slow.sample_rate_hz = 10.0 * slow.bandwidth_hz;
  CHECK_THROWS_AS(slow.validate(), std::invalid_argument);
  NoiseConfig short_bit = normalized();
  short_bit.samples_per_bit = 1;
  CHECK_THROWS_AS(short_bit.validate(), std::invalid_argument);
}

TEST_CASE("normalized variance is r * B") {
  const NoiseConfig cfg = normalized();
  const Eigen::Index n = Eigen::Index{1} << 20;
  const Signal x = gen_johnson_noise(cfg, 1.0, n);
  // Block variance is a sum of in-band bin powers: relative SE = 1/sqrt(bins * blocks).
  const double rel_se = 1.0 / std::sqrt(cfg.in_band_bins() * static_cast<double>(n / cfg.samples_per_bit));
  CHECK(std::abs(x.mean()) < 1e-9);
  CHECK(variance(x) == doctest::Approx(1000.0).epsilon(3.0 * rel_se));
}

TEST_CASE("physical mode uses 4kT") {
  NoiseConfig cfg = normalized();
  cfg.scale_mode = ScaleMode::physical;
  CHECK(cfg.four_kt() == doctest::Approx(4.0 * 1.380649e-23 * 1e18));
  CHECK(cfg.voltage_variance(10.0) == doctest::Approx(4.0 * 1.380649e-23 * 1e18 * 10.0 * 1000.0));
}

TEST_CASE("same stream: doubling r scales the waveform by sqrt(2)") {
  const NoiseConfig cfg = normalized();
  const Signal a = gen_johnson_noise(cfg, 1.0, 8192);
  const Signal b = gen_johnson_noise(cfg, 2.0, 8192);
  CHECK((b - std::sqrt(2.0) * a).cwiseAbs().maxCoeff() < 1e-9);
  CHECK(variance(b) / variance(a) == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("variance scaling across independent streams") {
  NoiseConfig cfg = normalized();
  const Eigen::Index n = Eigen::Index{1} << 19;
  const double rel_se = 1.0 / std::sqrt(cfg.in_band_bins() * static_cast<double>(n / cfg.samples_per_bit));
  cfg.seed = 1;
  const double v1 = variance(gen_johnson_noise(cfg, 1.0, n));
  std::uint64_t seed = 2;
  for (double r : {0.5, 2.0, 10.0}) {
    CAPTURE(r);
    cfg.seed = seed++;
    const double vr = variance(gen_johnson_noise(cfg, r, n));
    CHECK(std::abs(vr / v1 - r) < 3.0 * std::sqrt(2.0) * rel_se * r);
  }
}

TEST_CASE("determinism and independence") {
  NoiseConfig cfg = normalized();
  const Eigen::Index n = 1 << 18;
  const Signal a = gen_johnson_noise(cfg, 1.0, n);
  const Signal a2 = gen_johnson_noise(cfg, 1.0, n);
  CHECK((a - a2).cwiseAbs().maxCoeff() == 0.0);

  cfg.seed = 999;
  const Signal b = gen_johnson_noise(cfg, 1.0, n);
  const double rho = a.dot(b) / std::sqrt(a.squaredNorm() * b.squaredNorm());
  CHECK(std::abs(rho) < 4.0 / std::sqrt(effective_samples(cfg, n)));
}

TEST_CASE("named streams are independent of each other's consumption") {
  Xoshiro256 a1 = make_stream(5, Stream::alice_noise);
  Xoshiro256 a2 = make_stream(5, Stream::alice_noise);
  Xoshiro256 b = make_stream(5, Stream::bob_noise);
  for (int i = 0; i < 100; ++i) b();
  CHECK(a1() == a2());
  CHECK(make_stream(5, Stream::alice_noise)() != make_stream(5, Stream::bob_noise)());
}

TEST_CASE("psd of a pure DC input sits in the lowest bins") {
  const Signal dc = Signal::Constant(8192, 3.0);
  const PsdEstimate est = estimate_psd(dc, 20000.0);
  Eigen::Index at = 0;
  est.psd.maxCoeff(&at);
  CHECK(at == 0);
  // The Hann main lobe spreads DC over bins 0 and 1 only.
  CHECK(est.psd.tail(est.psd.size() - 2).maxCoeff() < 1e-20 * est.psd[0]);
  CHECK(est.freqs[0] == 0.0);
  CHECK(est.freqs[est.freqs.size() - 1] == doctest::Approx(10000.0));
}

TEST_CASE("psd of Johnson noise: level, stop band, integral and flatness") {
  const NoiseConfig cfg = normalized();
  const Signal x = gen_johnson_noise(cfg, 1.0, Eigen::Index{1} << 20);
  const PsdEstimate est = estimate_psd(x, cfg.sample_rate_hz);
  CHECK(est.n_segments >= 64);
  const double in_band = est.band_mean(2.0 * est.resolution_hz, cfg.bandwidth_hz - 2.0 * est.resolution_hz);
  CHECK(in_band == doctest::Approx(1.0).epsilon(0.10));
  const double stop = est.band_mean(1.25 * cfg.bandwidth_hz, cfg.sample_rate_hz / 2.0);
  CHECK(stop <= 0.01 * in_band);
  CHECK(est.integral() == doctest::Approx(variance(x)).epsilon(0.05));

  double lo = 1e300, hi = 0.0;
  for (Eigen::Index k = 0; k < est.freqs.size(); ++k) {
    const double f = est.freqs[k];
    if (f < 2.0 * est.resolution_hz || f > cfg.bandwidth_hz - 2.0 * est.resolution_hz) continue;
    lo = std::min(lo, est.psd[k]);
    hi = std::max(hi, est.psd[k]);
  }
  CHECK(hi / lo <= 1.25);
}

TEST_CASE("psd argument checks") {
  const Signal x = Signal::Random(100);
  CHECK_THROWS_AS(estimate_psd(x, 1000.0, 1024), std::invalid_argument);
  CHECK_THROWS_AS(estimate_psd(x, 1000.0, 50, 1.0), std::invalid_argument);
}

TEST_CASE("gaussianity of generated noise") {
  const Signal x = gen_johnson_noise(normalized(), 1.0, Eigen::Index{1} << 20);
  const Moments m = gaussianity_check(x);
  CHECK(std::abs(m.skewness) < 0.02);
  CHECK(std::abs(m.excess_kurtosis) < 0.05);
}

TEST_CASE("gaussianity of uniform and degenerate input") {
  Xoshiro256 rng(77);
  Signal u(200000);
  for (Eigen::Index i = 0; i < u.size(); ++i) u[i] = rng.uniform();
  const Moments m = gaussianity_check(u);
  CHECK(m.excess_kurtosis == doctest::Approx(-1.2).epsilon(0.02));
  CHECK(std::abs(m.skewness) < 0.02);
  CHECK_THROWS_AS(gaussianity_check(Signal::Constant(5000, 1.0)), std::domain_error);
  CHECK_THROWS_AS(gaussianity_check(Signal::Random(999)), std::invalid_argument);
}
