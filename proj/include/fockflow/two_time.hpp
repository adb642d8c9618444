#pragma once

// Two-time system correlation functions <A(t) B(t+tau)> under wave-packet
// driving, via the generalized quantum regression construction.
//
// The regression operators A_{m|n}(t, t') evolve in t' with exactly the same
// right-hand side as the density hierarchy, seeded at t' = t with
// A_{m|n}(t,t) = rho_{m|n}(t) * A. They are not density-like (no Hermitian
// partner symmetry), so the full index set is stored. The result at each tau
// is Tr[B * sum_{m|n} c_{m|n} A_{m|n}(t, t+tau)], combined with unstarred
// coefficients just like the physical state.

#include <algorithm>
#include <stdexcept>
#include <vector>

#include "hierarchy.hpp"
#include "integrator.hpp"

namespace fockflow {

/// <A(t) B(t+tau)> for each tau in `taus` (sorted, non-negative). `state` is
/// the source hierarchy's state vector at the anchor time t.
inline std::vector<Complex> correlate(const MasterEquation& source,
                                      const StateVector& state, double t,
                                      const Operator& a, const Operator& b,
                                      const std::vector<double>& taus,
                                      double rtol = 1e-9, double atol = 1e-11) {
  const int dim = source.model().dim;
  if (a.rows() != dim || a.cols() != dim || b.rows() != dim ||
      b.cols() != dim) {
    throw std::invalid_argument("correlate: operator dimension mismatch");
  }
  for (std::size_t i = 0; i < taus.size(); ++i) {
    if (taus[i] < 0.0 || (i > 0 && taus[i] < taus[i - 1])) {
      throw std::invalid_argument("correlate: taus must be sorted and >= 0");
    }
  }
  if (taus.empty()) return {};

  MasterEquation::Options opt;
  opt.full_index_storage = true;
  MasterEquation qrt(source.model(), source.field(), opt);

  // boundary condition A_{m|n}(t,t) = rho_{m|n}(t) * A over the full set
  StateVector y = StateVector::Zero(qrt.state_size());
  for (const auto& idx : qrt.full_indices()) {
    qrt.set_entry(y, idx, Operator(source.entry(state, idx) * a));
  }

  auto combine = [&](const StateVector& v) {
    Operator acc = Operator::Zero(dim, dim);
    for (const auto& [idx, c] : qrt.field().coefficients) {
      acc += c * qrt.entry(v, idx);
    }
    return (b * acc).trace();
  };

  std::vector<Complex> out;
  out.reserve(taus.size());
  std::size_t first_positive = 0;
  while (first_positive < taus.size() && taus[first_positive] == 0.0) {
    out.push_back(combine(y));
    ++first_positive;
  }
  if (first_positive == taus.size()) return out;

  TimeGrid grid;
  grid.t0 = t;
  grid.tf = t + taus.back();
  grid.rtol = rtol;
  grid.atol = atol;
  for (double bp : qrt.breakpoints()) {
    if (bp > grid.t0 && bp < grid.tf) grid.breakpoints.push_back(bp);
  }
  std::vector<double> stops;
  for (std::size_t i = first_positive; i < taus.size(); ++i) {
    stops.push_back(t + taus[i]);
  }
  stops.erase(std::unique(stops.begin(), stops.end()), stops.end());
  auto snaps =
      propagate_to_times([&](double tp, const StateVector& v,
                             StateVector& dv) { qrt.rhs(tp, v, dv); },
                         y, grid, stops);
  std::size_t snap = 0;
  for (std::size_t i = first_positive; i < taus.size(); ++i) {
    if (i > first_positive && taus[i] == taus[i - 1]) {
      out.push_back(out.back());
      continue;
    }
    out.push_back(combine(snaps[snap++]));
  }
  return out;
}

}  // namespace fockflow
