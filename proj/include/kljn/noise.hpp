#pragma once

#include "kljn/rng.hpp"
#include "kljn/types.hpp"

#include <unsupported/Eigen/FFT>

#include <complex>
#include <cstdint>
#include <memory>

namespace kljn {

/// Boltzmann constant, J/K (exact SI value).
inline constexpr double kBoltzmann = 1.380649e-23;

enum class ScaleMode { physical, normalized };

/// Parameters of the band-limited Johnson-noise emulation.
///
/// In normalized mode 4*k*T_eff is fixed to 1 V^2/(Ohm*Hz), so a resistor
/// r generates a voltage with variance r * bandwidth_hz.
struct NoiseConfig {
  double t_eff = 1e18;
  double bandwidth_hz = 1000.0;
  double sample_rate_hz = 20000.0;
  int samples_per_bit = 4096;
  ScaleMode scale_mode = ScaleMode::normalized;
  std::uint64_t seed = 0;

  /// Throws std::invalid_argument on a violated invariant.
  void validate() const;

  /// 4*k*T_eff in V^2/(Ohm*Hz).
  double four_kt() const { return scale_mode == ScaleMode::normalized ? 1.0 : 4.0 * kBoltzmann * t_eff; }
  double dt() const { return 1.0 / sample_rate_hz; }
  /// Number of synthesis bins with 0 < f <= bandwidth_hz in one bit period.
  int in_band_bins() const;
  /// Voltage variance of a resistor r: 4*k*T_eff*r*B.
  double voltage_variance(double r) const { return four_kt() * r * bandwidth_hz; }
};

/// Frequency-domain Johnson-noise synthesizer.
///
/// Every block of samples_per_bit samples is synthesized independently:
/// the in_band_bins() lowest non-DC bins receive independent complex
/// Gaussian coefficients, all other bins are zero, and one inverse FFT
/// yields the block. The per-bin variance is set so that the block variance
/// is exactly 4*k*T_eff*r*B in expectation. Blocks are zero-mean by
/// construction (the DC bin is never populated).
class JohnsonNoiseSource {
 public:
  JohnsonNoiseSource(const NoiseConfig& cfg, Xoshiro256 rng);

  /// One bit period of noise for resistance r. temp_scale multiplies T_eff.
  Signal block(double r, double temp_scale = 1.0);

  /// n samples assembled from consecutive blocks (last block truncated).
  Signal samples(double r, Eigen::Index n, double temp_scale = 1.0);

  const NoiseConfig& config() const { return cfg_; }
  const Xoshiro256& stream() const { return rng_; }

 private:
  NoiseConfig cfg_;
  Xoshiro256 rng_;
  int bins_;
  Eigen::FFT<double> fft_;
  Eigen::VectorXcd spectrum_;
};

/// n samples of Johnson noise for resistance r, seeded from cfg.seed.
Signal gen_johnson_noise(const NoiseConfig& cfg, double r, Eigen::Index n);

/// Same, drawing from an explicit stream.
Signal gen_johnson_noise(const NoiseConfig& cfg, double r, Eigen::Index n, Xoshiro256& rng);

/// One-sided power spectral density estimate.
struct PsdEstimate {
  Signal freqs;
  Signal psd;
  int n_segments = 0;
  double resolution_hz = 0.0;

  /// Mean psd over bins with lo <= f <= hi.
  double band_mean(double lo_hz, double hi_hz) const;
  /// Rectangle-rule integral of psd over all bins.
  double integral() const { return psd.sum() * resolution_hz; }
};

/// Welch averaged periodogram with a periodic Hann window, no detrending.
PsdEstimate estimate_psd(const Eigen::Ref<const Signal>& samples, double sample_rate_hz,
                         Eigen::Index segment_len = 1024, double overlap = 0.5);

struct Moments {
  double skewness = 0.0;
  double excess_kurtosis = 0.0;
};

/// Sample skewness and excess kurtosis. Throws std::invalid_argument for
/// fewer than 1000 samples and std::domain_error for a constant input.
Moments gaussianity_check(const Eigen::Ref<const Signal>& samples);

}  // namespace kljn
