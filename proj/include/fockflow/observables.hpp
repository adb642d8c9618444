#pragma once

// Scalar observables of physical states and trajectory post-processing.
//
// The heavy lifting (combining hierarchy entries into rho_phys, expectation
// values, flux and quadrature channels) lives on MasterEquation; this header
// adds the derived state diagnostics (purity, von Neumann entropy, Bloch
// vector) and the quadratic peak refinement used to extract max_t P_e from
// sampled trajectories.

#include <array>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "operator.hpp"

namespace fockflow {

/// Tr[rho^2].
inline double purity(const Operator& rho) {
  return (rho * rho).trace().real();
}

/// Von Neumann entropy -Tr[rho log2 rho] with 0*log 0 := 0. Eigenvalues in
/// [-tol, 0) are clamped to zero; anything more negative is a PSD violation.
inline double entropy(const Operator& rho, double tol = 1e-10) {
  Eigen::SelfAdjointEigenSolver<Operator> es(
      Operator(0.5 * (rho + rho.adjoint())));
  double s = 0.0;
  for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) {
    double p = es.eigenvalues()[i];
    if (p < -tol) {
      throw std::invalid_argument("entropy: state not positive semidefinite");
    }
    if (p <= 0.0) continue;
    s -= p * std::log2(p);
  }
  return s;
}

/// Bloch vector (<sx>, <sy>, <sz>) of a 2x2 state, with basis index 0 = |e>
/// and index 1 = |g> (sz = |e><e| - |g><g|).
inline std::array<double, 3> bloch_vector(const Operator& rho) {
  if (rho.rows() != 2 || rho.cols() != 2) {
    throw std::invalid_argument("bloch_vector: state must be 2x2");
  }
  return {2.0 * rho(1, 0).real(), 2.0 * rho(1, 0).imag(),
          (rho(0, 0) - rho(1, 1)).real()};
}

/// Peak of a sampled scalar trajectory, refined by fitting a quadratic
/// through the discrete maximum and its neighbors.
struct PeakEstimate {
  double time = 0.0;
  double value = 0.0;
};

inline PeakEstimate peak_quadratic(const std::vector<double>& times,
                                   const std::vector<double>& values) {
  if (times.size() != values.size() || times.empty()) {
    throw std::invalid_argument("peak_quadratic: bad sample lists");
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  if (best == 0 || best + 1 == values.size()) {
    return {times[best], values[best]};
  }
  // Lagrange quadratic through the three bracketing samples (the grid is
  // generally non-uniform under adaptive stepping).
  const double t0 = times[best - 1], t1 = times[best], t2 = times[best + 1];
  const double v0 = values[best - 1], v1 = values[best], v2 = values[best + 1];
  const double d01 = (v1 - v0) / (t1 - t0);
  const double d12 = (v2 - v1) / (t2 - t1);
  const double curv = (d12 - d01) / (t2 - t0);  // quadratic leading coeff
  if (!(curv < 0.0)) return {t1, v1};
  const double tp = 0.5 * (t0 + t1 - d01 / curv);
  if (tp < t0 || tp > t2) return {t1, v1};
  // evaluate the interpolant at its vertex
  const double vp = v0 + d01 * (tp - t0) + curv * (tp - t0) * (tp - t1);
  return {tp, std::max(vp, v1)};
}

}  // namespace fockflow
