#include "kljn/noise.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace kljn {

void NoiseConfig::validate() const {
  if (!(t_eff > 0.0)) throw std::invalid_argument("noise: t_eff must be positive");
  if (!(bandwidth_hz > 0.0)) throw std::invalid_argument("noise: bandwidth_hz must be positive");
  if (!(sample_rate_hz >= 20.0 * bandwidth_hz))
    throw std::invalid_argument("noise: sample_rate_hz must be at least 20 * bandwidth_hz");
  if (samples_per_bit < 2) throw std::invalid_argument("noise: samples_per_bit must be >= 2");
  if (in_band_bins() < 1)
    throw std::invalid_argument("noise: bit period too short to hold one in-band bin (" +
                                std::to_string(samples_per_bit) + " samples)");
}

int NoiseConfig::in_band_bins() const {
  // Bin k sits at k * f_s / M. Small epsilon so that B landing exactly on a bin counts.
  const double bins = bandwidth_hz * samples_per_bit / sample_rate_hz;
  return static_cast<int>(std::floor(bins * (1.0 + 1e-12)));
}

JohnsonNoiseSource::JohnsonNoiseSource(const NoiseConfig& cfg, Xoshiro256 rng)
    : cfg_(cfg), rng_(rng), bins_(0) {
  cfg_.validate();
  bins_ = cfg_.in_band_bins();
  fft_.SetFlag(Eigen::FFT<double>::HalfSpectrum);
  spectrum_ = Eigen::VectorXcd::Zero(cfg_.samples_per_bit / 2 + 1);
}

Signal JohnsonNoiseSource::block(double r, double temp_scale) {
  if (!(r >= 0.0)) throw std::invalid_argument("gen_johnson_noise: negative resistance");
  if (!(temp_scale > 0.0)) throw std::invalid_argument("gen_johnson_noise: temp_scale must be positive");
  const int m = cfg_.samples_per_bit;
  const double variance = cfg_.voltage_variance(r) * temp_scale;
  // x[n] = sigma * sum_k (g1 cos - g2 sin) has variance bins * sigma^2.
  const double sigma = std::sqrt(variance / bins_);
  const double scale = 0.5 * m * sigma;
  for (int k = 1; k <= bins_; ++k) {
    const auto [g1, g2] = rng_.normal_pair();
    spectrum_[k] = std::complex<double>(scale * g1, scale * g2);
  }
  Signal out(m);
  if (variance == 0.0) {
    out.setZero();
    return out;
  }
  fft_.inv(out.data(), spectrum_.data(), m);
  return out;
}

Signal JohnsonNoiseSource::samples(double r, Eigen::Index n, double temp_scale) {
  if (n < 1) throw std::invalid_argument("gen_johnson_noise: sample count must be >= 1");
  Signal out(n);
  const Eigen::Index m = cfg_.samples_per_bit;
  for (Eigen::Index pos = 0; pos < n; pos += m) {
    const Signal b = block(r, temp_scale);
    const Eigen::Index len = std::min(m, n - pos);
    out.segment(pos, len) = b.head(len);
  }
  return out;
}

Signal gen_johnson_noise(const NoiseConfig& cfg, double r, Eigen::Index n, Xoshiro256& rng) {
  JohnsonNoiseSource src(cfg, rng);
  Signal out = src.samples(r, n);
  rng = src.stream();
  return out;
}

Signal gen_johnson_noise(const NoiseConfig& cfg, double r, Eigen::Index n) {
  Xoshiro256 rng(cfg.seed);
  return gen_johnson_noise(cfg, r, n, rng);
}

double PsdEstimate::band_mean(double lo_hz, double hi_hz) const {
  double sum = 0.0;
  int count = 0;
  for (Eigen::Index k = 0; k < freqs.size(); ++k) {
    if (freqs[k] >= lo_hz && freqs[k] <= hi_hz) {
      sum += psd[k];
      ++count;
    }
  }
  if (count == 0) throw std::invalid_argument("PsdEstimate::band_mean: empty band");
  return sum / count;
}

PsdEstimate estimate_psd(const Eigen::Ref<const Signal>& samples, double sample_rate_hz,
                         Eigen::Index segment_len, double overlap) {
  const Eigen::Index n = samples.size();
  if (segment_len < 2) throw std::invalid_argument("estimate_psd: segment_len must be >= 2");
  if (segment_len > n) throw std::invalid_argument("estimate_psd: segment longer than data");
  if (!(overlap >= 0.0 && overlap < 1.0)) throw std::invalid_argument("estimate_psd: overlap must be in [0, 1)");
  if (!(sample_rate_hz > 0.0)) throw std::invalid_argument("estimate_psd: sample rate must be positive");

  const Eigen::Index hop =
      std::max<Eigen::Index>(1, segment_len - static_cast<Eigen::Index>(std::llround(overlap * segment_len)));
  const Eigen::Index n_seg = 1 + (n - segment_len) / hop;
  const Eigen::Index n_bins = segment_len / 2 + 1;

  // Periodic Hann: a DC input leaks only into bin 1.
  const Signal window = Signal::NullaryExpr(segment_len, [segment_len](Eigen::Index i) {
    return 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(segment_len));
  });
  const double norm = sample_rate_hz * window.squaredNorm();

  Eigen::FFT<double> fft;
  fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
  Signal acc = Signal::Zero(n_bins);
  Signal seg(segment_len);
  Eigen::VectorXcd spec(n_bins);
  for (Eigen::Index s = 0; s < n_seg; ++s) {
    seg = samples.segment(s * hop, segment_len).cwiseProduct(window);
    fft.fwd(spec, seg);
    acc += spec.head(n_bins).cwiseAbs2();
  }

  PsdEstimate out;
  out.n_segments = static_cast<int>(n_seg);
  out.resolution_hz = sample_rate_hz / static_cast<double>(segment_len);
  out.freqs = Signal::LinSpaced(n_bins, 0.0, out.resolution_hz * static_cast<double>(n_bins - 1));
  out.psd = acc / (norm * static_cast<double>(n_seg));
  // One-sided: double every bin except DC and (for even lengths) Nyquist.
  const Eigen::Index last_doubled = (segment_len % 2 == 0) ? n_bins - 2 : n_bins - 1;
  out.psd.segment(1, last_doubled) *= 2.0;
  return out;
}

Moments gaussianity_check(const Eigen::Ref<const Signal>& samples) {
  const Eigen::Index n = samples.size();
  if (n < 1000) throw std::invalid_argument("gaussianity_check: too few samples (need >= 1000)");
  const double mean = samples.mean();
  const Signal centered = samples.array() - mean;
  const double m2 = centered.squaredNorm() / n;
  if (!(m2 > 0.0) || m2 <= 1e-28 * (mean * mean))
    throw std::domain_error("gaussianity_check: degenerate (constant) input");
  const double m3 = centered.array().cube().sum() / n;
  const double m4 = centered.array().square().square().sum() / n;
  return {m3 / std::pow(m2, 1.5), m4 / (m2 * m2) - 3.0};
}

}  // namespace kljn
