#pragma once

// Time propagation of hierarchy state vectors.
//
// Two modes share one driver:
//   * adaptive: Dormand-Prince embedded Runge-Kutta 4(5) with max-norm error
//     control per component scaled by atol + rtol*|y|; and
//   * fixed-step: classical RK4 on a uniform grid, fully deterministic
//     (bit-identical reruns) for reproducibility checks and convergence-order
//     studies.
// Steps never straddle a declared breakpoint (envelope discontinuities,
// detuning switches): the integration interval is cut at every breakpoint and
// each piece is integrated to its endpoint exactly.

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "hierarchy.hpp"

namespace fockflow {

class IntegrationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Time-grid request for one propagation.
struct TimeGrid {
  double t0 = 0.0;
  double tf = 1.0;
  double dt_max = std::numeric_limits<double>::infinity();
  bool adaptive = true;
  double rtol = 1e-9;
  double atol = 1e-11;
  double fixed_dt = 0.0;               ///< step size when adaptive == false
  std::vector<double> breakpoints;     ///< mandatory step-boundary times
  int snapshot_stride = 1;             ///< keep every k-th accepted step

  void validate() const {
    if (!(t0 < tf)) throw std::invalid_argument("TimeGrid: t0 must be < tf");
    if (!(rtol > 0.0) || !(atol > 0.0)) {
      throw std::invalid_argument("TimeGrid: tolerances must be positive");
    }
    if (!adaptive && !(fixed_dt > 0.0)) {
      throw std::invalid_argument("TimeGrid: fixed mode needs fixed_dt > 0");
    }
    if (snapshot_stride < 1) {
      throw std::invalid_argument("TimeGrid: snapshot_stride >= 1");
    }
  }
};

/// Stored result of a propagation: times and state snapshots (decimated by
/// snapshot_stride, but always including t0, tf, and every breakpoint).
struct Trajectory {
  std::vector<double> times;
  std::vector<StateVector> snapshots;
};

namespace detail {

// Dormand-Prince 5(4) tableau.
inline constexpr double kDPc[7] = {0.0,       1.0 / 5,  3.0 / 10, 4.0 / 5,
                                   8.0 / 9.0, 1.0,      1.0};
inline constexpr double kDPa[7][6] = {
    {},
    {1.0 / 5},
    {3.0 / 40, 9.0 / 40},
    {44.0 / 45, -56.0 / 15, 32.0 / 9},
    {19372.0 / 6561, -25360.0 / 2187, 64448.0 / 6561, -212.0 / 729},
    {9017.0 / 3168, -355.0 / 33, 46732.0 / 5247, 49.0 / 176, -5103.0 / 18656},
    {35.0 / 384, 0.0, 500.0 / 1113, 125.0 / 192, -2187.0 / 6784, 11.0 / 84}};
inline constexpr double kDPb5[7] = {35.0 / 384,    0.0,  500.0 / 1113,
                                    125.0 / 192,   -2187.0 / 6784,
                                    11.0 / 84,     0.0};
inline constexpr double kDPb4[7] = {5179.0 / 57600,  0.0,
                                    7571.0 / 16695,  393.0 / 640,
                                    -92097.0 / 339200, 187.0 / 2100,
                                    1.0 / 40};

template <class RHS>
void dp_step(RHS&& rhs, double t, double h, const StateVector& y,
             const StateVector& k0, StateVector& y5, double& err_norm,
             StateVector& k_next, std::vector<StateVector>& k,
             double rtol, double atol) {
  k[0] = k0;
  StateVector ytmp(y.size());
  for (int stage = 1; stage < 7; ++stage) {
    ytmp = y;
    for (int j = 0; j < stage; ++j) {
      if (kDPa[stage][j] != 0.0) ytmp += (h * kDPa[stage][j]) * k[j];
    }
    rhs(t + kDPc[stage] * h, ytmp, k[stage]);
  }
  y5 = y;
  for (int j = 0; j < 7; ++j) {
    if (kDPb5[j] != 0.0) y5 += (h * kDPb5[j]) * k[j];
  }
  // FSAL: stage 7 of the accepted step equals rhs at the new point (k[6] was
  // evaluated at t + h with the 5th-order solution coefficients).
  k_next = k[6];
  err_norm = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    Complex e = 0.0;
    for (int j = 0; j < 7; ++j) e += (kDPb5[j] - kDPb4[j]) * k[j][i];
    const double scale =
        atol + rtol * std::max(std::abs(y[i]), std::abs(y5[i]));
    err_norm = std::max(err_norm, std::abs(h * e) / scale);
  }
}

inline void check_finite(const StateVector& y, double t) {
  if (!y.allFinite()) {
    throw IntegrationError("non-finite state encountered at t = " +
                           std::to_string(t));
  }
}

}  // namespace detail

/// Propagate y0 from grid.t0 to grid.tf, invoking observer(t, y) at t0 and at
/// the end of every accepted step (full resolution, regardless of stride).
template <class RHS, class Observer>
void propagate_observe(RHS&& rhs, const StateVector& y0, const TimeGrid& grid,
                       Observer&& observer) {
  grid.validate();

  // checkpoints = {t0} U breakpoints inside (t0, tf) U {tf}
  std::vector<double> checkpoints{grid.t0, grid.tf};
  for (double b : grid.breakpoints) {
    if (b > grid.t0 && b < grid.tf) checkpoints.push_back(b);
  }
  std::sort(checkpoints.begin(), checkpoints.end());
  checkpoints.erase(std::unique(checkpoints.begin(), checkpoints.end()),
                    checkpoints.end());

  StateVector y = y0;
  observer(grid.t0, y);

  if (!grid.adaptive) {
    StateVector k1(y.size()), k2(y.size()), k3(y.size()), k4(y.size());
    StateVector ytmp(y.size());
    for (std::size_t seg = 0; seg + 1 < checkpoints.size(); ++seg) {
      const double a = checkpoints[seg];
      const double b = checkpoints[seg + 1];
      const long n = std::max<long>(1, std::lround(std::ceil((b - a) / grid.fixed_dt - 1e-12)));
      const double h = (b - a) / static_cast<double>(n);
      for (long i = 0; i < n; ++i) {
        const double t = a + h * static_cast<double>(i);
        rhs(t, y, k1);
        ytmp = y + (0.5 * h) * k1;
        rhs(t + 0.5 * h, ytmp, k2);
        ytmp = y + (0.5 * h) * k2;
        rhs(t + 0.5 * h, ytmp, k3);
        ytmp = y + h * k3;
        rhs(t + h, ytmp, k4);
        y += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        detail::check_finite(y, t + h);
        observer((i + 1 == n) ? b : t + h, y);
      }
    }
    return;
  }

  constexpr double kSafety = 0.9;
  constexpr double kMinShrink = 0.2;
  constexpr double kMaxGrow = 5.0;
  constexpr std::size_t kMaxSteps = 100000000;
  std::vector<StateVector> k(7, StateVector(y.size()));
  StateVector y5(y.size()), k_begin(y.size()), k_next(y.size());
  std::size_t steps = 0;

  for (std::size_t seg = 0; seg + 1 < checkpoints.size(); ++seg) {
    const double a = checkpoints[seg];
    const double b = checkpoints[seg + 1];
    double t = a;
    double h = std::min({grid.dt_max, (b - a), (grid.tf - grid.t0) / 100.0});
    rhs(t, y, k_begin);
    while (t < b) {
      if (++steps > kMaxSteps) {
        throw IntegrationError("step budget exhausted (stiffness?)");
      }
      const double gap = b - t;
      const double roundoff =
          std::max(std::abs(a), std::abs(b)) * 1e-14 + 1e-300;
      if (gap <= roundoff) {
        // an accepted step landed within roundoff of the boundary; promote
        t = b;
        observer(t, y);
        break;
      }
      // clip to the boundary, stretching steps that would leave an
      // unresolvable sliver behind
      const bool clipped = (t + h >= b) || (gap - h < 1e-6 * gap);
      const double h_try = clipped ? gap : h;
      if (!(h_try > std::abs(t) * 1e-15 + 1e-300)) {
        throw IntegrationError("step underflow at t = " + std::to_string(t));
      }
      double err = 0.0;
      detail::dp_step(rhs, t, h_try, y, k_begin, y5, err, k_next, k,
                      grid.rtol, grid.atol);
      if (err <= 1.0) {
        t = clipped ? b : t + h_try;
        y.swap(y5);
        k_begin.swap(k_next);
        detail::check_finite(y, t);
        observer(t, y);
        const double grow =
            (err > 0.0) ? kSafety * std::pow(err, -0.2) : kMaxGrow;
        h = std::min(grid.dt_max,
                     h_try * std::clamp(grow, kMinShrink, kMaxGrow));
      } else {
        const double shrink =
            std::clamp(kSafety * std::pow(err, -0.2), kMinShrink, kSafety);
        h = h_try * shrink;
      }
    }
  }
}

/// Propagate and keep snapshots (every snapshot_stride-th accepted step; t0,
/// tf, and breakpoints always kept).
template <class RHS>
Trajectory propagate(RHS&& rhs, const StateVector& y0, const TimeGrid& grid) {
  Trajectory traj;
  std::vector<double> keep{grid.t0, grid.tf};
  for (double b : grid.breakpoints) keep.push_back(b);
  long counter = 0;
  propagate_observe(
      rhs, y0, grid, [&](double t, const StateVector& y) {
        const bool forced =
            std::find(keep.begin(), keep.end(), t) != keep.end();
        if (forced || counter % grid.snapshot_stride == 0) {
          if (traj.times.empty() || t > traj.times.back()) {
            traj.times.push_back(t);
            traj.snapshots.push_back(y);
          }
        }
        ++counter;
      });
  return traj;
}

/// Propagate and return states at exactly the requested times (which become
/// mandatory step boundaries). Times must be increasing and within the grid.
template <class RHS>
std::vector<StateVector> propagate_to_times(RHS&& rhs, const StateVector& y0,
                                            TimeGrid grid,
                                            const std::vector<double>& times) {
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (times[i] < grid.t0 || times[i] > grid.tf ||
        (i > 0 && !(times[i] > times[i - 1]))) {
      throw std::invalid_argument("propagate_to_times: bad time list");
    }
  }
  for (double t : times) grid.breakpoints.push_back(t);
  std::vector<StateVector> out;
  std::size_t next = 0;
  propagate_observe(rhs, y0, grid, [&](double t, const StateVector& y) {
    while (next < times.size() && times[next] <= t) {
      out.push_back(y);  // step boundaries include every requested time
      ++next;
    }
  });
  if (out.size() != times.size()) {
    throw IntegrationError("propagate_to_times: missed an output time");
  }
  return out;
}

/// Per-snapshot invariant report over a trajectory.
struct InvariantReport {
  double max_trace_defect = 0.0;        ///< max |Tr rho_phys - 1|
  double max_offdiag_trace = 0.0;       ///< max |Tr rho_{m|n}|, m != n
  double max_hermiticity_defect = 0.0;  ///< of rho_phys
  double min_eigenvalue = 0.0;          ///< most negative over all snapshots
};

inline InvariantReport monitor_invariants(const MasterEquation& me,
                                          const Trajectory& traj) {
  InvariantReport report;
  report.min_eigenvalue = 1.0;
  for (const auto& y : traj.snapshots) {
    report.max_trace_defect =
        std::max(report.max_trace_defect, me.trace_defect(y));
    if (me.field().orthogonal) {
      report.max_offdiag_trace =
          std::max(report.max_offdiag_trace, me.offdiagonal_trace_defect(y));
    }
    report.max_hermiticity_defect = std::max(
        report.max_hermiticity_defect, hermiticity_defect(me.physical_state(y)));
    report.min_eigenvalue =
        std::min(report.min_eigenvalue, me.min_eigenvalue(y));
  }
  return report;
}

}  // namespace fockflow
