#pragma once

// Kirchhoff loop solvers.
//
// Sign convention (used everywhere in the project): i_a and i_b are the
// currents flowing out of each party's source into the wire. In the ideal
// loop the channel current i_ch flows from Alice towards Bob, so
// i_a = i_ch and i_b = -i_ch.

#include "kljn/types.hpp"

#include <cmath>
#include <stdexcept>

namespace kljn {

/// The two public resistor values; r_low encodes bit 0, r_high bit 1.
struct ResistorPair {
  double r_low = 1000.0;
  double r_high = 10000.0;

  void validate() const {
    if (!(r_low > 0.0 && r_low < r_high))
      throw std::invalid_argument("ResistorPair requires 0 < r_low < r_high");
  }
  double pick(bool high) const { return high ? r_high : r_low; }
};

/// Lumped wire: series resistance split in two halves around one
/// capacitor to ground at the midpoint.
struct WireModel {
  double r_wire = 0.0;
  double c_cable = 0.0;
  bool killer_on = false;

  void validate() const {
    if (!(r_wire >= 0.0)) throw std::invalid_argument("WireModel: r_wire must be >= 0");
    if (!(c_cable >= 0.0)) throw std::invalid_argument("WireModel: c_cable must be >= 0");
  }
  /// Capacitance seen by the loop; the capacitor killer nulls it.
  double c_eff() const { return killer_on ? 0.0 : c_cable; }
  bool ideal() const { return r_wire == 0.0 && c_eff() == 0.0; }
};

template <typename Scalar>
struct BasicTrace {
  Samples<Scalar> u_ch;
  Samples<Scalar> i_ch;
  Scalar dt = Scalar(1);

  Eigen::Index size() const { return u_ch.size(); }
};

template <typename Scalar>
struct BasicTraceEnds {
  Samples<Scalar> u_end_a;
  Samples<Scalar> u_end_b;
  Samples<Scalar> i_a;
  Samples<Scalar> i_b;
  Samples<Scalar> u_mid;
  Scalar dt = Scalar(1);

  Eigen::Index size() const { return u_end_a.size(); }

  void resize(Eigen::Index n) {
    u_end_a.resize(n);
    u_end_b.resize(n);
    i_a.resize(n);
    i_b.resize(n);
    u_mid.resize(n);
  }

  /// Samples [start, start + len).
  BasicTraceEnds segment(Eigen::Index start, Eigen::Index len) const {
    return {u_end_a.segment(start, len), u_end_b.segment(start, len), i_a.segment(start, len),
            i_b.segment(start, len),     u_mid.segment(start, len),   dt};
  }

  /// Ends of an ideal wire carrying the given channel trace.
  static BasicTraceEnds from_ideal(const BasicTrace<Scalar>& t) {
    return {t.u_ch, t.u_ch, t.i_ch, -t.i_ch, t.u_ch, t.dt};
  }
};

using Trace = BasicTrace<double>;
using TraceEnds = BasicTraceEnds<double>;

/// Power each generator delivers into the opposite resistor.
struct PowerReport {
  double p_a_to_b = 0.0;
  double p_b_to_a = 0.0;
};

/// Exact solution of the ideal loop, sample by sample.
template <typename DA, typename DB>
BasicTrace<typename DA::Scalar> solve_ideal(const Eigen::MatrixBase<DA>& u_a, const Eigen::MatrixBase<DB>& u_b,
                                            typename DA::Scalar r_a, typename DA::Scalar r_b,
                                            typename DA::Scalar dt = typename DA::Scalar(1)) {
  using Scalar = typename DA::Scalar;
  if (u_a.size() != u_b.size()) throw std::invalid_argument("solve_ideal: length mismatch");
  if (!(r_a >= 0 && r_b >= 0)) throw std::invalid_argument("solve_ideal: negative resistance");
  const Scalar total = r_a + r_b;
  if (!(total > 0)) throw std::invalid_argument("solve_ideal: zero total resistance");
  if (!(dt > 0)) throw std::invalid_argument("solve_ideal: dt must be positive");
  BasicTrace<Scalar> out;
  out.dt = dt;
  out.i_ch = (u_a - u_b) / total;
  out.u_ch = (u_a * r_b + u_b * r_a) / total;
  return out;
}

/// Stateful trapezoidal integrator for the non-ideal loop.
///
/// Circuit: source_a - r_a - [end A] - r_wire/2 - [mid] - r_wire/2 - [end B]
/// - r_b - source_b, with c_eff from [mid] to ground and an optional
/// external current injected into [mid]. The capacitor starts discharged,
/// so u_mid is 0 at the first sample after reset(). With c_eff = 0 every
/// sample is the exact resistive-divider solution.
template <typename Scalar>
class LoopIntegrator {
 public:
  struct Sample {
    Scalar u_end_a, u_end_b, i_a, i_b, u_mid;
  };

  LoopIntegrator(Scalar r_a, Scalar r_b, const WireModel& wire, Scalar dt)
      : half_wire_(Scalar(wire.r_wire) / 2), c_(Scalar(wire.c_eff())), dt_(dt) {
    wire.validate();
    if (!(dt > 0)) throw std::invalid_argument("solve_nonideal: dt must be positive");
    if (!(r_a >= 0 && r_b >= 0)) throw std::invalid_argument("solve_nonideal: negative resistance");
    ra_ = r_a + half_wire_;
    rb_ = r_b + half_wire_;
    if (!(half_wire_ + std::min(r_a, r_b) > 0))
      throw std::invalid_argument("solve_nonideal: r_wire/2 + min(r_a, r_b) must be positive");
    total_ = ra_ + rb_;
    g_ = Scalar(1) / ra_ + Scalar(1) / rb_;
    if (c_ > 0) {
      if (!(dt < thevenin_resistance() * c_))
        throw std::invalid_argument("solve_nonideal: dt must be below R_th * c_eff for accurate integration");
      lhs_ = c_ / dt_ + g_ / 2;
      rhs_ = c_ / dt_ - g_ / 2;
    }
  }

  /// Resistance seen by the capacitor.
  Scalar thevenin_resistance() const { return Scalar(1) / g_; }
  Scalar time_constant() const { return thevenin_resistance() * c_; }

  void reset() {
    started_ = false;
    v_prev_ = 0;
    s_prev_ = 0;
  }

  Sample step(Scalar u_a, Scalar u_b, Scalar i_inject = Scalar(0)) {
    Sample out;
    if (c_ == 0) {
      const Scalar i_loop = (u_a - u_b) / total_;
      out.u_mid = (u_a * rb_ + u_b * ra_) / total_;
      out.i_a = i_loop;
      out.i_b = -i_loop;
      if (i_inject != 0) {
        out.u_mid += i_inject * ra_ * rb_ / total_;
        out.i_a -= i_inject * rb_ / total_;
        out.i_b -= i_inject * ra_ / total_;
      }
    } else {
      const Scalar s = u_a / ra_ + u_b / rb_ + i_inject;
      out.u_mid = started_ ? (v_prev_ * rhs_ + (s + s_prev_) / 2) / lhs_ : Scalar(0);
      out.i_a = (u_a - out.u_mid) / ra_;
      out.i_b = (u_b - out.u_mid) / rb_;
      v_prev_ = out.u_mid;
      s_prev_ = s;
      started_ = true;
    }
    out.u_end_a = out.u_mid + out.i_a * half_wire_;
    out.u_end_b = out.u_mid + out.i_b * half_wire_;
    return out;
  }

 private:
  Scalar half_wire_, c_, dt_;
  Scalar ra_{}, rb_{}, total_{}, g_{};
  Scalar lhs_{}, rhs_{};
  Scalar v_prev_{}, s_prev_{};
  bool started_ = false;
};

/// Non-ideal loop over a whole record. `injection` is either empty or a
/// current waveform (A, positive into the midpoint node) of the same length.
template <typename DA, typename DB>
BasicTraceEnds<typename DA::Scalar> solve_nonideal(const Eigen::MatrixBase<DA>& u_a, const Eigen::MatrixBase<DB>& u_b,
                                                   typename DA::Scalar r_a, typename DA::Scalar r_b,
                                                   const WireModel& wire, typename DA::Scalar dt,
                                                   const Samples<typename DA::Scalar>& injection = {}) {
  using Scalar = typename DA::Scalar;
  if (u_a.size() != u_b.size()) throw std::invalid_argument("solve_nonideal: length mismatch");
  if (injection.size() != 0 && injection.size() != u_a.size())
    throw std::invalid_argument("solve_nonideal: injection length mismatch");
  LoopIntegrator<Scalar> loop(r_a, r_b, wire, dt);
  BasicTraceEnds<Scalar> out;
  out.dt = dt;
  const Eigen::Index n = u_a.size();
  out.resize(n);
  const bool inject = injection.size() != 0;
  for (Eigen::Index k = 0; k < n; ++k) {
    const auto s = loop.step(u_a[k], u_b[k], inject ? injection[k] : Scalar(0));
    out.u_end_a[k] = s.u_end_a;
    out.u_end_b[k] = s.u_end_b;
    out.i_a[k] = s.i_a;
    out.i_b[k] = s.i_b;
    out.u_mid[k] = s.u_mid;
  }
  return out;
}

/// Samples to discard at the start of a bit period before the capacitor
/// transient has decayed (five time constants), for a given Thevenin
/// resistance.
inline Eigen::Index warmup_samples(const WireModel& wire, double r_thevenin, double dt) {
  const double c = wire.c_eff();
  if (c == 0.0) return 0;
  return static_cast<Eigen::Index>(std::ceil(5.0 * r_thevenin * c / dt));
}

/// Superposition power flows: each source alone drives the loop and the
/// power it dissipates in the far resistor is averaged over the record.
template <typename DA, typename DB>
PowerReport power_flows(const Eigen::MatrixBase<DA>& u_a, const Eigen::MatrixBase<DB>& u_b, double r_a, double r_b) {
  const Signal zero = Signal::Zero(u_a.size());
  const Trace from_a = solve_ideal(u_a.template cast<double>(), zero, r_a, r_b);
  const Trace from_b = solve_ideal(zero, u_b.template cast<double>(), r_a, r_b);
  return {mean_square(from_a.i_ch) * r_b, mean_square(from_b.i_ch) * r_a};
}

}  // namespace kljn
