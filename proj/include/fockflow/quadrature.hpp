#pragma once

// Adaptive Gauss-Kronrod quadrature for temporal-envelope integrals.
//
// A 7-point Gauss / 15-point Kronrod pair is applied recursively: the
// difference between the two rules estimates the local error, and panels are
// bisected until the requested absolute tolerance is met. All envelope
// integrals in the library (normalization, overlaps, residual weights,
// projection tensors) run through this routine with abs_tol = 1e-10 by
// default.

#include <cmath>
#include <complex>
#include <functional>
#include <stdexcept>

namespace fockflow {

using Complex = std::complex<double>;

/// Thrown when the recursive bisection fails to reach tolerance.
class QuadratureError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

// Nodes/weights of the 15-point Kronrod extension of 7-point Gauss-Legendre,
// on [-1, 1]. Nodes are symmetric; only the non-negative half is tabulated.
inline constexpr double kKronrodNodes[8] = {
    0.000000000000000000000000000000000e+00,
    2.077849550078984676006894037732449e-01,
    4.058451513773971669066064120769615e-01,
    5.860872354676911302941448382587296e-01,
    7.415311855993944398638647732807884e-01,
    8.648644233597690727897127886409262e-01,
    9.491079123427585245261896840478513e-01,
    9.914553711208126392068546975263285e-01};

inline constexpr double kKronrodWeights[8] = {
    2.094821410847278280129991748917143e-01,
    2.044329400752988924141619992346491e-01,
    1.903505780647854099132564024210137e-01,
    1.690047266392679028265834265985503e-01,
    1.406532597155259187451895905102379e-01,
    1.047900103222501838398763225415180e-01,
    6.309209262997855329070066318920429e-02,
    2.293532201052922496373200805896959e-02};

// Weights of the embedded 7-point Gauss rule (nonzero at the even Kronrod
// nodes 0, 2, 4, 6).
inline constexpr double kGaussWeights[4] = {
    4.179591836734693877551020408163265e-01,
    3.818300505051189449503697754889751e-01,
    2.797053914892766679014677714237796e-01,
    1.294849661688696932706114326790820e-01};

template <class F>
inline std::complex<double> gk15(F&& f, double a, double b,
                                 double& err_estimate) {
  const double half = 0.5 * (b - a);
  const double mid = 0.5 * (a + b);

  std::complex<double> kronrod = 0.0;
  std::complex<double> gauss = 0.0;
  for (int i = 0; i < 8; ++i) {
    const double x = half * kKronrodNodes[i];
    const std::complex<double> fp = f(mid + x);
    const std::complex<double> fm = (i == 0) ? fp : f(mid - x);
    const std::complex<double> pair = (i == 0) ? fp : fp + fm;
    kronrod += kKronrodWeights[i] * pair;
    if (i % 2 == 0) gauss += kGaussWeights[i / 2] * pair;
  }
  kronrod *= half;
  gauss *= half;
  err_estimate = std::abs(kronrod - gauss);
  return kronrod;
}

template <class F>
inline std::complex<double> integrate_recursive(F&& f, double a, double b,
                                                double abs_tol, int depth) {
  double err = 0.0;
  const std::complex<double> whole = gk15(f, a, b, err);
  if (err <= abs_tol) return whole;
  if (depth >= 48) {
    throw QuadratureError("adaptive quadrature failed to converge on [" +
                          std::to_string(a) + ", " + std::to_string(b) + "]");
  }
  const double mid = 0.5 * (a + b);
  return integrate_recursive(f, a, mid, 0.5 * abs_tol, depth + 1) +
         integrate_recursive(f, mid, b, 0.5 * abs_tol, depth + 1);
}

}  // namespace detail

/// Integrate a complex-valued function over [a, b] to absolute tolerance.
template <class F>
inline std::complex<double> integrate(F&& f, double a, double b,
                                      double abs_tol = 1e-10) {
  if (!(a < b)) return 0.0;
  return detail::integrate_recursive(f, a, b, abs_tol, 0);
}

/// Real-part convenience wrapper for manifestly real integrands.
template <class F>
inline double integrate_real(F&& f, double a, double b,
                             double abs_tol = 1e-10) {
  return integrate([&](double t) { return std::complex<double>(f(t), 0.0); },
                   a, b, abs_tol)
      .real();
}

}  // namespace fockflow
