#pragma once

// Ready-made SLH models. Two-level basis convention throughout the library:
// index 0 = |e>, index 1 = |g> (so sz = |e><e| - |g><g| matches the Bloch
// helper). The Jaynes-Cummings space is atom (x) truncated cavity.

#include <vector>

#include "operator.hpp"

namespace fockflow {

/// sigma_- = |g><e| on the two-level basis.
inline Operator sigma_minus() {
  Operator s = Operator::Zero(2, 2);
  s(1, 0) = 1.0;
  return s;
}

/// |e><e| on the two-level basis.
inline Operator excited_projector() {
  Operator p = Operator::Zero(2, 2);
  p(0, 0) = 1.0;
  return p;
}

/// |g> as a column vector.
inline Eigen::VectorXcd ground_ket() {
  Eigen::VectorXcd v = Eigen::VectorXcd::Zero(2);
  v[1] = 1.0;
  return v;
}

/// |e> as a column vector.
inline Eigen::VectorXcd excited_ket() {
  Eigen::VectorXcd v = Eigen::VectorXcd::Zero(2);
  v[0] = 1.0;
  return v;
}

/// Truncated cavity annihilation operator on n_max + 1 levels.
inline Operator cavity_annihilation(int n_max) {
  Operator a = Operator::Zero(n_max + 1, n_max + 1);
  for (int n = 1; n <= n_max; ++n) a(n - 1, n) = std::sqrt(double(n));
  return a;
}

/// Two-level atom perfectly coupled to the waveguide:
/// H = -(detuning/2)(|e><e| - |g><g|), L = sqrt(gamma)|g><e|, S = I.
inline SLHModel two_level(double gamma, double detuning = 0.0) {
  Operator h = Operator::Zero(2, 2);
  h(0, 0) = -0.5 * detuning;
  h(1, 1) = 0.5 * detuning;
  return SLHModel(h, {Operator(std::sqrt(gamma) * sigma_minus())});
}

/// Jaynes-Cummings atom-cavity system with a one-sided leaky cavity:
/// H = -delta0 |e><e| - delta_cav a^dag a + g(a sigma_+ + a^dag sigma_-),
/// L = sqrt(gamma) a, S = I; dimension 2(n_max + 1).
inline SLHModel jaynes_cummings(double g, double gamma, double delta0,
                                double delta_cav, int n_max) {
  if (n_max < 1) throw std::invalid_argument("jaynes_cummings: n_max >= 1");
  const int nc = n_max + 1;
  const Operator eye_c = Operator::Identity(nc, nc);
  const Operator eye_a = Operator::Identity(2, 2);
  const Operator a = kron(eye_a, cavity_annihilation(n_max));
  const Operator sm = kron(sigma_minus(), eye_c);
  const Operator pe = kron(excited_projector(), eye_c);
  Operator h = -delta0 * pe - delta_cav * (a.adjoint() * a) +
               g * (a * sm.adjoint() + a.adjoint() * sm);
  return SLHModel(std::move(h), {Operator(std::sqrt(gamma) * a)});
}

/// Atom excited-state projector on the Jaynes-Cummings space.
inline Operator jc_excited_projector(int n_max) {
  return kron(excited_projector(), Operator::Identity(n_max + 1, n_max + 1));
}

/// |g> (x) |0_cav> on the Jaynes-Cummings space.
inline Eigen::VectorXcd jc_ground_ket(int n_max) {
  Eigen::VectorXcd v = Eigen::VectorXcd::Zero(2 * (n_max + 1));
  v[n_max + 1] = 1.0;  // atom |g>, cavity |0>
  return v;
}

/// |e> (x) |0_cav> on the Jaynes-Cummings space.
inline Eigen::VectorXcd jc_excited_ket(int n_max) {
  Eigen::VectorXcd v = Eigen::VectorXcd::Zero(2 * (n_max + 1));
  v[0] = 1.0;
  return v;
}

/// Two-level atom coupled to two waveguide modes (transmitted/reflected):
/// L_i = sqrt(gamma_i)|g><e|, S = I blockwise, H = 0.
inline SLHModel two_mode_two_level(double gamma1, double gamma2) {
  return SLHModel(Operator(Operator::Zero(2, 2)),
                  {Operator(std::sqrt(gamma1) * sigma_minus()),
                   Operator(std::sqrt(gamma2) * sigma_minus())});
}

}  // namespace fockflow
