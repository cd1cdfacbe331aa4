#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

namespace kljn {

template <typename Scalar>
using Samples = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Sampled waveform in SI units (volts or amperes).
using Signal = Samples<double>;

/// Key material, one bit per element (values 0 or 1).
using Bits = std::vector<std::uint8_t>;

/// Mean of squares; zero for an empty range.
template <typename Derived>
typename Derived::Scalar mean_square(const Eigen::MatrixBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  if (x.size() == 0) return Scalar(0);
  return x.squaredNorm() / static_cast<Scalar>(x.size());
}

/// Mean of the elementwise product of two equal-length vectors.
template <typename DA, typename DB>
typename DA::Scalar mean_product(const Eigen::MatrixBase<DA>& a, const Eigen::MatrixBase<DB>& b) {
  using Scalar = typename DA::Scalar;
  if (a.size() == 0) return Scalar(0);
  return a.dot(b) / static_cast<Scalar>(a.size());
}

}  // namespace kljn
