#pragma once

// Square-normalized temporal envelopes xi(t) for traveling wave packets.
//
// Four kinds are supported:
//   gaussian     (Dw^2/2pi)^(1/4) exp(-Dw^2 (t-ta)^2 / 4)
//   rising_exp   sqrt(Dw) exp(Dw (t-ta)/2) for t <= ta, zero after
//   rectangular  1/sqrt(tmax) on [0, tmax]
//   sampled      linear interpolation of user samples, normalized on input
//
// Carrier detuning is folded into the system Hamiltonian, not the envelope,
// so the built-in kinds are real; complex values are allowed for the sampled
// kind. Every envelope declares a finite support window outside of which it
// evaluates to exactly zero, plus the breakpoints (discontinuities) that time
// integrators must not straddle.

#include <algorithm>
#include <cmath>
#include <complex>
#include <memory>
#include <stdexcept>
#include <vector>

#include "quadrature.hpp"

namespace fockflow {

enum class EnvelopeKind { gaussian, rising_exp, rectangular, sampled };

class Envelope {
 public:
  /// Gaussian wave packet of bandwidth `bandwidth` peaking at `arrival`.
  static Envelope gaussian(double bandwidth, double arrival = 0.0) {
    require_positive(bandwidth, "gaussian bandwidth");
    Envelope e;
    e.kind_ = EnvelopeKind::gaussian;
    e.bandwidth_ = bandwidth;
    e.arrival_ = arrival;
    // exp(-Dw^2 t^2/4) at |t| = 9/Dw is below 2e-9; the squared-norm tail is
    // below 1e-17, invisible at every tolerance used in the library.
    e.t_lo_ = arrival - 9.0 / bandwidth;
    e.t_hi_ = arrival + 9.0 / bandwidth;
    return e;
  }

  /// Rising exponential, optimal for single-photon excitation at Dw = Gamma.
  static Envelope rising_exp(double bandwidth, double arrival = 0.0) {
    require_positive(bandwidth, "rising_exp bandwidth");
    Envelope e;
    e.kind_ = EnvelopeKind::rising_exp;
    e.bandwidth_ = bandwidth;
    e.arrival_ = arrival;
    // |xi|^2 integrates to exp(Dw (t - ta)); truncating 42/Dw before the
    // cutoff discards mass ~6e-19.
    e.t_lo_ = arrival - 42.0 / bandwidth;
    e.t_hi_ = arrival;
    return e;
  }

  /// Rectangular pulse 1/sqrt(duration) on [0, duration].
  static Envelope rectangular(double duration) {
    require_positive(duration, "rectangular duration");
    Envelope e;
    e.kind_ = EnvelopeKind::rectangular;
    e.duration_ = duration;
    e.arrival_ = 0.5 * duration;
    e.t_lo_ = 0.0;
    e.t_hi_ = duration;
    return e;
  }

  /// Piecewise-linear interpolant of user samples, square-normalized here.
  /// Throws if the sample grid carries no usable norm.
  static Envelope sampled(std::vector<double> times,
                          std::vector<Complex> values) {
    if (times.size() != values.size() || times.size() < 2) {
      throw std::invalid_argument("sampled envelope: need >= 2 samples");
    }
    for (std::size_t i = 1; i < times.size(); ++i) {
      if (!(times[i] > times[i - 1])) {
        throw std::invalid_argument(
            "sampled envelope: times must strictly increase");
      }
    }
    Envelope e;
    e.kind_ = EnvelopeKind::sampled;
    e.samples_ = std::make_shared<SampleData>();
    e.samples_->t = std::move(times);
    e.samples_->v = std::move(values);
    e.t_lo_ = e.samples_->t.front();
    e.t_hi_ = e.samples_->t.back();
    e.arrival_ = 0.0;
    double best = 0.0;
    for (std::size_t i = 0; i < e.samples_->t.size(); ++i) {
      if (std::abs(e.samples_->v[i]) > best) {
        best = std::abs(e.samples_->v[i]);
        e.arrival_ = e.samples_->t[i];
      }
    }
    e.normalize_samples();
    return e;
  }

  EnvelopeKind kind() const { return kind_; }
  double bandwidth() const { return bandwidth_; }
  double arrival() const { return arrival_; }
  double duration() const { return duration_; }
  double support_lo() const { return t_lo_; }
  double support_hi() const { return t_hi_; }

  /// xi(t); exactly zero outside the declared support.
  Complex operator()(double t) const {
    switch (kind_) {
      case EnvelopeKind::gaussian: {
        if (t < t_lo_ || t > t_hi_) return 0.0;
        const double x = t - arrival_;
        const double amp = std::pow(bandwidth_ * bandwidth_ / (2.0 * M_PI), 0.25);
        return amp * std::exp(-0.25 * bandwidth_ * bandwidth_ * x * x);
      }
      case EnvelopeKind::rising_exp: {
        if (t < t_lo_ || t > arrival_) return 0.0;
        return std::sqrt(bandwidth_) *
               std::exp(0.5 * bandwidth_ * (t - arrival_));
      }
      case EnvelopeKind::rectangular: {
        if (t < 0.0 || t > duration_) return 0.0;
        return 1.0 / std::sqrt(duration_);
      }
      case EnvelopeKind::sampled: {
        const auto& s = *samples_;
        if (t < s.t.front() || t > s.t.back()) return 0.0;
        const auto it = std::upper_bound(s.t.begin(), s.t.end(), t);
        const std::size_t hi = std::min<std::size_t>(
            std::max<std::ptrdiff_t>(1, it - s.t.begin()), s.t.size() - 1);
        const std::size_t lo = hi - 1;
        const double f = (t - s.t[lo]) / (s.t[hi] - s.t[lo]);
        return (1.0 - f) * s.v[lo] + f * s.v[hi];
      }
    }
    return 0.0;
  }

  /// Residual weight w(t) = integral_t^inf |xi|^2 dt'. Closed form for the
  /// built-in kinds; exact per-segment integration for sampled envelopes.
  double residual_weight(double t) const {
    switch (kind_) {
      case EnvelopeKind::gaussian:
        return 0.5 * std::erfc((t - arrival_) * bandwidth_ / std::sqrt(2.0));
      case EnvelopeKind::rising_exp:
        if (t >= arrival_) return 0.0;
        return 1.0 - std::exp(bandwidth_ * (t - arrival_));
      case EnvelopeKind::rectangular:
        return std::clamp(1.0 - t / duration_, 0.0, 1.0);
      case EnvelopeKind::sampled: {
        const auto& s = *samples_;
        if (t <= s.t.front()) return 1.0;
        if (t >= s.t.back()) return 0.0;
        const auto it = std::upper_bound(s.t.begin(), s.t.end(), t);
        const std::size_t hi = std::min<std::size_t>(
            std::max<std::ptrdiff_t>(1, it - s.t.begin()), s.t.size() - 1);
        const std::size_t lo = hi - 1;
        // suffix[hi] plus the part of segment [lo, hi] after t
        return s.suffix[hi] +
               segment_tail(s.t[lo], s.t[hi], s.v[lo], s.v[hi], t);
      }
    }
    return 0.0;
  }

  /// Times at which xi or its derivative jumps; integrators align steps here.
  std::vector<double> breakpoints() const {
    switch (kind_) {
      case EnvelopeKind::gaussian:
        return {t_lo_, t_hi_};
      case EnvelopeKind::rising_exp:
        return {t_lo_, arrival_};
      case EnvelopeKind::rectangular:
        return {0.0, duration_};
      case EnvelopeKind::sampled:
        return {t_lo_, t_hi_};
    }
    return {};
  }

  /// max_t |xi(t)| (used by the small-bandwidth recursion check).
  double max_abs() const {
    switch (kind_) {
      case EnvelopeKind::gaussian:
        return std::pow(bandwidth_ * bandwidth_ / (2.0 * M_PI), 0.25);
      case EnvelopeKind::rising_exp:
        return std::sqrt(bandwidth_);
      case EnvelopeKind::rectangular:
        return 1.0 / std::sqrt(duration_);
      case EnvelopeKind::sampled: {
        double best = 0.0;
        for (const auto& v : samples_->v) best = std::max(best, std::abs(v));
        return best;
      }
    }
    return 0.0;
  }

  /// integral |xi|^2 over the support, by quadrature (normalization check).
  double squared_norm(double abs_tol = 1e-10) const {
    double total = 0.0;
    auto pieces = breakpoints();
    for (std::size_t i = 0; i + 1 < pieces.size(); ++i) {
      total += integrate_real(
          [&](double t) { return std::norm((*this)(t)); }, pieces[i],
          pieces[i + 1], abs_tol);
    }
    return total;
  }

 private:
  struct SampleData {
    std::vector<double> t;
    std::vector<Complex> v;
    std::vector<double> suffix;  ///< suffix[i] = integral_{t[i]}^{end} |xi|^2
  };

  static void require_positive(double x, const char* what) {
    if (!(x > 0.0)) {
      throw std::invalid_argument(std::string(what) + " must be positive");
    }
  }

  // integral_tc^th |linear interpolant|^2 over one segment; the integrand is
  // a quadratic polynomial, so Simpson's rule is exact.
  static double segment_tail(double ta, double tb, Complex va, Complex vb,
                             double tc) {
    auto value = [&](double t) {
      const double f = (t - ta) / (tb - ta);
      return std::norm((1.0 - f) * va + f * vb);
    };
    const double h = tb - tc;
    return h / 6.0 * (value(tc) + 4.0 * value(0.5 * (tc + tb)) + value(tb));
  }

  void normalize_samples() {
    auto& s = *samples_;
    const std::size_t n = s.t.size();
    s.suffix.assign(n, 0.0);
    for (std::size_t i = n - 1; i-- > 0;) {
      s.suffix[i] = s.suffix[i + 1] +
                    segment_tail(s.t[i], s.t[i + 1], s.v[i], s.v[i + 1], s.t[i]);
    }
    const double norm2 = s.suffix[0];
    if (!(norm2 > 1e-300)) {
      throw std::invalid_argument("sampled envelope: grid not normalizable");
    }
    const double scale = 1.0 / std::sqrt(norm2);
    for (auto& v : s.v) v *= scale;
    for (auto& w : s.suffix) w /= norm2;
  }

  EnvelopeKind kind_ = EnvelopeKind::gaussian;
  double bandwidth_ = 1.0;
  double arrival_ = 0.0;
  double duration_ = 1.0;
  double t_lo_ = 0.0;
  double t_hi_ = 0.0;
  std::shared_ptr<SampleData> samples_;
};

/// integral xi*(t) eta(t) dt by adaptive quadrature over the intersection of
/// supports, split at both envelopes' breakpoints.
inline Complex overlap(const Envelope& xi, const Envelope& eta) {
  const double lo = std::max(xi.support_lo(), eta.support_lo());
  const double hi = std::min(xi.support_hi(), eta.support_hi());
  if (!(lo < hi)) return 0.0;
  std::vector<double> cuts{lo, hi};
  for (const auto& e : {xi, eta}) {
    for (double b : e.breakpoints()) {
      if (b > lo && b < hi) cuts.push_back(b);
    }
  }
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
  Complex total = 0.0;
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
    total += integrate(
        [&](double t) { return std::conj(xi(t)) * eta(t); }, cuts[i],
        cuts[i + 1], 1e-11);
  }
  return total;
}

}  // namespace fockflow
