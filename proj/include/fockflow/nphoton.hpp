#pragma once

// Occupation-number decomposition of general N-photon temporal envelopes.
//
// A (possibly entangled, possibly asymmetric) N-photon temporal function
// psi(t_1..t_N) is projected onto an orthonormal basis of temporal modes,
//   lambda'_{i_1..i_N} = integral xi_{i_1}*(t_1)..xi_{i_N}*(t_N) psi(..) dt,
// then regrouped into probability amplitudes over occupation tuples,
//   c_{n_1,n_2,..} = sum_{sigma in S_N} lambda'_sigma / sqrt(N n_1! n_2! ..),
// with the overall normalization N fixed by sum |c|^2 = 1. The result feeds
// back into the hierarchy as an ordinary orthogonal multi-slot FieldSpec with
// outer-product coefficients c_m c_n*.

#include <cmath>
#include <functional>
#include <map>
#include <stdexcept>
#include <vector>

#include "envelope.hpp"
#include "field_spec.hpp"

namespace fockflow {

/// Orthonormal set of temporal basis modes.
struct TemporalBasis {
  std::vector<Envelope> modes;

  explicit TemporalBasis(std::vector<Envelope> m, double tol = 1e-8)
      : modes(std::move(m)) {
    if (modes.empty()) throw std::invalid_argument("TemporalBasis: empty");
    for (std::size_t i = 0; i < modes.size(); ++i) {
      for (std::size_t j = i; j < modes.size(); ++j) {
        const Complex g = overlap(modes[i], modes[j]);
        const Complex target = (i == j) ? 1.0 : 0.0;
        if (std::abs(g - target) > tol) {
          throw std::invalid_argument(
              "TemporalBasis: modes not orthonormal within tolerance");
        }
      }
    }
  }

  std::size_t size() const { return modes.size(); }
};

/// Raw projection tensor lambda'_{i_1..i_N}, stored flat with the last index
/// fastest (row-major over B^N entries, B = basis size).
struct LambdaTensor {
  int photons = 0;
  int basis_size = 0;
  std::vector<Complex> values;

  Complex at(const std::vector<int>& idx) const {
    std::size_t flat = 0;
    for (int i : idx) flat = flat * basis_size + static_cast<std::size_t>(i);
    return values[flat];
  }
};

/// N-argument temporal function psi(t_1..t_N).
using TemporalFunction = std::function<Complex(const std::vector<double>&)>;

/// Project psi onto the basis by iterated adaptive quadrature. Validated for
/// N <= 3 (cost grows as (quadrature nodes)^N).
inline LambdaTensor project_lambda(const TemporalFunction& psi,
                                   const TemporalBasis& basis, int photons,
                                   double abs_tol = 1e-9) {
  if (photons < 1 || photons > 3) {
    throw std::invalid_argument("project_lambda: N must be in [1, 3]");
  }
  const int b = static_cast<int>(basis.size());
  LambdaTensor out;
  out.photons = photons;
  out.basis_size = b;
  out.values.resize(static_cast<std::size_t>(std::pow(b, photons)));

  std::vector<int> idx(photons);
  std::function<void(int, std::size_t)> fill = [&](int axis, std::size_t flat) {
    if (axis == photons) {
      // nested integral over all axes for this index tuple
      std::vector<double> t(photons);
      std::function<Complex(int)> inner = [&](int depth) -> Complex {
        const Envelope& mode = basis.modes[idx[depth]];
        return integrate(
            [&](double ti) -> Complex {
              t[depth] = ti;
              const Complex weight = std::conj(mode(ti));
              if (weight == Complex(0.0)) return 0.0;
              const Complex rest =
                  (depth + 1 == photons) ? psi(t) : inner(depth + 1);
              return weight * rest;
            },
            mode.support_lo(), mode.support_hi(), abs_tol);
      };
      out.values[flat] = inner(0);
      return;
    }
    for (int i = 0; i < b; ++i) {
      idx[axis] = i;
      fill(axis + 1, flat * b + static_cast<std::size_t>(i));
    }
  };
  fill(0, 0);
  return out;
}

/// Probability amplitudes over occupation tuples (n_1, n_2, ...).
struct OccupationCoeffs {
  int photons = 0;
  std::map<std::vector<int>, Complex> amplitudes;

  double norm_squared() const {
    double s = 0.0;
    for (const auto& [n, c] : amplitudes) s += std::norm(c);
    return s;
  }
};

inline OccupationCoeffs occupation_coeffs(const LambdaTensor& lambda) {
  const int n = lambda.photons;
  const int b = lambda.basis_size;

  // group the full S_N permutation sums by occupation tuple
  std::map<std::vector<int>, Complex> grouped;
  std::vector<int> idx(n);
  std::function<void(int)> walk = [&](int axis) {
    if (axis == n) {
      std::vector<int> occ(b, 0);
      for (int i : idx) occ[i] += 1;
      grouped[occ] += lambda.at(idx);  // each tuple contributes once per
                                       // arrangement == the S_N sum
      return;
    }
    for (int i = 0; i < b; ++i) {
      idx[axis] = i;
      walk(axis + 1);
    }
  };
  walk(0);

  // unnormalized amplitudes (sum over arrangements) / sqrt(n_1! n_2! ...)
  OccupationCoeffs out;
  out.photons = n;
  double norm = 0.0;
  for (auto& [occ, sum] : grouped) {
    double fact = 1.0;
    for (int nj : occ) {
      for (int k = 2; k <= nj; ++k) fact *= k;
    }
    const Complex c = sum / std::sqrt(fact);
    out.amplitudes[occ] = c;
    norm += std::norm(c);
  }
  if (!(norm > 1e-300)) {
    throw std::invalid_argument("occupation_coeffs: zero-norm input");
  }
  const double scale = 1.0 / std::sqrt(norm);
  for (auto& [occ, c] : out.amplitudes) c *= scale;
  return out;
}

/// Assemble an orthogonal multi-slot FieldSpec with outer-product
/// coefficients c_{m|n} = c_m * conj(c_n); all slots drive mode 0.
inline FieldSpec to_field_spec(const OccupationCoeffs& coeffs,
                               const TemporalBasis& basis,
                               double drop_tol = 1e-12) {
  const int b = static_cast<int>(basis.size());
  std::vector<int> caps(b, 0);
  for (const auto& [occ, c] : coeffs.amplitudes) {
    for (int j = 0; j < b; ++j) caps[j] = std::max(caps[j], occ[j]);
  }
  FieldSpec spec;
  for (int j = 0; j < b; ++j) {
    spec.slots.push_back({basis.modes[j], 0, caps[j]});
  }
  for (const auto& [m, cm] : coeffs.amplitudes) {
    for (const auto& [n, cn] : coeffs.amplitudes) {
      const Complex c = cm * std::conj(cn);
      if (std::abs(c) > drop_tol) {
        spec.coefficients[HierarchyIndex(m, n)] = c;
      }
    }
  }
  return spec;
}

}  // namespace fockflow
