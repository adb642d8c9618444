// Independent ground-truth oracles and the N-photon occupation-number
// decomposition, cross-checked against the hierarchy engine.

#include <catch2/catch_amalgamated.hpp>

#include <fockflow/hierarchy.hpp>
#include <fockflow/integrator.hpp>
#include <fockflow/models.hpp>
#include <fockflow/nphoton.hpp>
#include <fockflow/observables.hpp>
#include <fockflow/oracles.hpp>

using namespace fockflow;

namespace {

Operator ground_density() {
  const auto g = ground_ket();
  return g * g.adjoint();
}

std::vector<double> linspace(double a, double b, int n) {
  std::vector<double> out(n);
  for (int i = 0; i < n; ++i) out[i] = a + (b - a) * i / double(n - 1);
  return out;
}

/// P_e(t) of the hierarchy at the requested times.
std::vector<double> hierarchy_pe(const MasterEquation& me,
                                 const Operator& rho0,
                                 const std::vector<double>& times,
                                 double rtol = 1e-10) {
  TimeGrid grid;
  grid.t0 = times.front();
  grid.tf = times.back();
  grid.rtol = rtol;
  grid.atol = rtol * 1e-2;
  for (double b : me.breakpoints()) {
    if (b > grid.t0 && b < grid.tf) grid.breakpoints.push_back(b);
  }
  const Operator pe = excited_projector();
  auto snaps = propagate_to_times(
      [&](double t, const StateVector& y, StateVector& d) { me.rhs(t, y, d); },
      me.initial(rho0), grid, times);
  std::vector<double> out;
  for (const auto& y : snaps) out.push_back(me.expect(y, pe).real());
  return out;
}

double hierarchy_max_pe(const MasterEquation& me, const Operator& rho0,
                        double settle, double rtol = 1e-9) {
  TimeGrid grid;
  grid.t0 = me.start_time();
  grid.tf = me.end_time() + settle;
  grid.rtol = rtol;
  grid.atol = rtol * 1e-2;
  for (double b : me.breakpoints()) {
    if (b > grid.t0 && b < grid.tf) grid.breakpoints.push_back(b);
  }
  const Operator pe = excited_projector();
  std::vector<double> ts, ps;
  propagate_observe(
      [&](double t, const StateVector& y, StateVector& d) { me.rhs(t, y, d); },
      me.initial(rho0), grid, [&](double t, const StateVector& y) {
        ts.push_back(t);
        ps.push_back(me.expect(y, pe).real());
      });
  return peak_quadratic(ts, ps).value;
}

}  // namespace

TEST_CASE("analytic single-photon excitation probability") {
  const Envelope g = Envelope::gaussian(1.46, 0.0);
  double best = 0.0;
  for (double t : linspace(-2.0, 4.0, 301)) {
    best = std::max(best, analytic_single_photon_pe(g, 1.0, 1.0, t));
  }
  REQUIRE(best == Catch::Approx(0.801).margin(0.003));

  // before the support the probability is identically zero
  REQUIRE(analytic_single_photon_pe(g, 1.0, 1.0, g.support_lo() - 1.0) == 0.0);

  // rising exponential reaches unity exactly at the cutoff
  const Envelope r = Envelope::rising_exp(1.0, 0.0);
  REQUIRE(analytic_single_photon_pe(r, 1.0, 1.0, 0.0) ==
          Catch::Approx(1.0).margin(1e-6));
}

TEST_CASE("cascaded source: initial conditions and correspondence") {
  const Envelope g = Envelope::gaussian(1.46, 0.0);
  const SLHModel model = two_level(1.0);
  const std::vector<double> times = linspace(g.support_lo(), 4.0, 41);
  const auto res = cascaded_single_photon(model, g, ground_density(), times);

  REQUIRE((res.hat_rho_11(0) - ground_density()).cwiseAbs().maxCoeff() < 1e-9);
  REQUIRE((res.hat_rho_00(0) - ground_density()).cwiseAbs().maxCoeff() < 1e-6);
  REQUIRE(res.hat_rho_10(0).cwiseAbs().maxCoeff() < 1e-9);

  for (std::size_t i = 0; i < times.size(); ++i) {
    REQUIRE(std::abs((res.rho_ee[i] + res.rho_gg[i]).trace().real() - 1.0) <
            1e-8);
  }
}

TEST_CASE("oracle triangle at N = 1") {
  const Envelope g = Envelope::gaussian(1.46, 0.0);
  const SLHModel model = two_level(1.0);
  MasterEquation me(model, FieldSpec::fock(g, 1));
  const std::vector<double> times = linspace(g.support_lo(), 5.0, 201);

  TimeGrid grid;
  grid.t0 = times.front();
  grid.tf = times.back();
  grid.rtol = 1e-10;
  grid.atol = 1e-12;
  for (double b : me.breakpoints()) {
    if (b > grid.t0 && b < grid.tf) grid.breakpoints.push_back(b);
  }
  auto snaps = propagate_to_times(
      [&](double t, const StateVector& y, StateVector& d) { me.rhs(t, y, d); },
      me.initial(ground_density()), grid, times);

  // vs the analytic quadrature formula
  const Operator pe = excited_projector();
  double sup_analytic = 0.0;
  for (std::size_t i = 0; i < times.size(); ++i) {
    sup_analytic = std::max(
        sup_analytic,
        std::abs(me.expect(snaps[i], pe).real() -
                 analytic_single_photon_pe(g, 1.0, 1.0, times[i])));
  }
  REQUIRE(sup_analytic < 1e-6);

  // vs the cascaded decaying source
  const auto cas = cascaded_single_photon(model, g, ground_density(), times);
  double sup_cascaded = 0.0;
  for (std::size_t i = 0; i < times.size(); ++i) {
    sup_cascaded = std::max(
        sup_cascaded,
        trace_distance(me.physical_state(snaps[i]), cas.rho_sys(i)));
  }
  REQUIRE(sup_cascaded < 1e-6);

  // block-level match of the reconstructed rho_10
  double sup_block = 0.0;
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (cas.w[i] < 1e-6) continue;  // reconstruction degenerates as w -> 0
    sup_block = std::max(
        sup_block, (me.entry(snaps[i], HierarchyIndex(1, 0)) -
                    cas.hat_rho_10(i))
                       .cwiseAbs()
                       .maxCoeff());
  }
  REQUIRE(sup_block < 1e-6);
}

TEST_CASE("time-bin oracle: vacuum reproduces Lindblad decay") {
  const Envelope g = Envelope::gaussian(1.0, 2.5);
  const SLHModel model = two_level(1.0);
  const auto tb = timebin_brute_force(model, g, 0, excited_ket(), 0.0, 5.0,
                                      400);
  double worst = 0.0;
  for (std::size_t i = 0; i < tb.times.size(); ++i) {
    const double pe = tb.rho_sys[i](0, 0).real();
    worst = std::max(worst, std::abs(pe - std::exp(-tb.times[i])));
  }
  REQUIRE(worst < 1e-3);
}

TEST_CASE("time-bin oracle converges to the analytic single photon") {
  const Envelope g = Envelope::gaussian(1.46, 0.0);
  const SLHModel model = two_level(1.0);
  const double t0 = g.support_lo();
  const double t1 = g.support_hi() + 2.0;

  auto peak_of = [&](int nbins) {
    const auto tb = timebin_brute_force(model, g, 1, ground_ket(), t0, t1,
                                        nbins);
    double best = 0.0;
    for (const auto& rho : tb.rho_sys) best = std::max(best, rho(0, 0).real());
    return best;
  };

  // analytic reference peak on a fine grid with quadratic refinement
  std::vector<double> ts, ps;
  for (double t : linspace(-2.0, 4.0, 1201)) {
    ts.push_back(t);
    ps.push_back(analytic_single_photon_pe(g, 1.0, 1.0, t));
  }
  const double exact = peak_quadratic(ts, ps).value;

  const double p100 = peak_of(100);
  const double p200 = peak_of(200);
  REQUIRE(std::abs(p100 - exact) < 2e-3);
  // first-order convergence: halving the bin width roughly halves the error
  const double e100 = std::abs(p100 - exact);
  const double e200 = std::abs(p200 - exact);
  REQUIRE(e200 < 0.75 * e100);
}

TEST_CASE("time-bin vs hierarchy at N = 2") {
  const Envelope g = Envelope::gaussian(1.46, 0.0);
  const SLHModel model = two_level(1.0);
  const double t0 = g.support_lo();
  const double t1 = g.support_hi() + 2.0;
  const auto tb = timebin_brute_force(model, g, 2, ground_ket(), t0, t1, 200);

  MasterEquation me(model, FieldSpec::fock(g, 2));
  const auto pe = hierarchy_pe(me, ground_density(), tb.times);
  double worst = 0.0;
  for (std::size_t i = 0; i < tb.times.size(); ++i) {
    worst = std::max(worst, std::abs(pe[i] - tb.rho_sys[i](0, 0).real()));
  }
  REQUIRE(worst < 5e-3);

  double best = 0.0;
  for (const auto& rho : tb.rho_sys) best = std::max(best, rho(0, 0).real());
  REQUIRE(best == Catch::Approx(0.805).margin(0.01));
}

TEST_CASE("small-bandwidth recursion for the excitation maximum") {
  const double bw = 0.02;
  const Envelope g = Envelope::gaussian(bw, 0.0);
  const double p1_pred = 4.0 * g.max_abs() * g.max_abs();

  std::vector<double> peaks;
  for (int n = 1; n <= 3; ++n) {
    MasterEquation me(two_level(1.0), FieldSpec::fock(g, n));
    peaks.push_back(hierarchy_max_pe(me, ground_density(), 3.0, 1e-8));
  }
  // P_N = N P_1 (1 - 2 P_{N-1}) with P_0 = 0
  double prev = 0.0;
  for (int n = 1; n <= 3; ++n) {
    const double predicted = n * p1_pred * (1.0 - 2.0 * prev);
    REQUIRE(std::abs(peaks[n - 1] - predicted) < 0.15 * predicted);
    prev = peaks[n - 1];
  }
}

TEST_CASE("lambda projection of factorized products") {
  const Envelope x1 = Envelope::gaussian(1.0, 0.0);
  const Envelope x2 = Envelope::gaussian(1.0, 30.0);  // disjoint, orthogonal
  TemporalBasis basis({x1, x2});

  // psi(t1, t2) = x1(t1) x1(t2)
  const auto lam11 = project_lambda(
      [&](const std::vector<double>& t) { return x1(t[0]) * x1(t[1]); }, basis,
      2);
  REQUIRE(std::abs(lam11.at({0, 0}) - Complex(1.0)) < 1e-7);
  REQUIRE(std::abs(lam11.at({0, 1})) < 1e-7);
  REQUIRE(std::abs(lam11.at({1, 1})) < 1e-7);

  // psi = x1(t1) x2(t2): no symmetrization at the projection stage
  const auto lam12 = project_lambda(
      [&](const std::vector<double>& t) { return x1(t[0]) * x2(t[1]); }, basis,
      2);
  REQUIRE(std::abs(lam12.at({0, 1}) - Complex(1.0)) < 1e-7);
  REQUIRE(std::abs(lam12.at({1, 0})) < 1e-7);
}

TEST_CASE("occupation amplitudes") {
  // two photons in one mode: c_{2,0} = 1 once normalized
  LambdaTensor lam;
  lam.photons = 2;
  lam.basis_size = 2;
  lam.values = {1.0, 0.0, 0.0, 0.0};  // lambda'_{00} = 1
  const auto c2 = occupation_coeffs(lam);
  REQUIRE(std::abs(c2.amplitudes.at({2, 0}) - Complex(1.0)) < 1e-12);

  // one photon in each of two orthogonal modes
  lam.values = {0.0, 1.0, 0.0, 0.0};  // lambda'_{01} = 1 (unsymmetrized input)
  const auto c11 = occupation_coeffs(lam);
  REQUIRE(std::abs(c11.amplitudes.at({1, 1}) - Complex(1.0)) < 1e-12);

  // partial overlap: amplitudes stay normalized
  lam.values = {0.6, 0.4, 0.4, 0.2};
  const auto cp = occupation_coeffs(lam);
  REQUIRE(cp.norm_squared() == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("decomposition: identical pair equals the N = 2 Fock state") {
  // B^dag(xi)^2 |0> is exactly |2_xi>; the non-orthogonal hierarchy with two
  // fully overlapping one-photon slots must reproduce the single-slot N = 2
  // Fock master equation.
  const Envelope xi = Envelope::gaussian(1.46, 0.0);
  const SLHModel model = two_level(1.0);
  MasterEquation direct(model, FieldSpec::fock(xi, 2));
  MasterEquation pair(model, FieldSpec::nonorthogonal_pair(xi, xi));

  const auto times = linspace(xi.support_lo(), 4.0, 81);
  const auto pe_direct = hierarchy_pe(direct, ground_density(), times);
  const auto pe_pair = hierarchy_pe(pair, ground_density(), times);
  for (std::size_t i = 0; i < times.size(); ++i) {
    REQUIRE(std::abs(pe_direct[i] - pe_pair[i]) < 1e-4);
  }
}

namespace {

/// Gram-Schmidt second basis mode (eta - s*first)/sqrt(1-s^2) as a sampled
/// envelope on a fine grid.
Envelope orthogonalized(const Envelope& first, const Envelope& eta,
                        Complex s) {
  const double lo = std::min(first.support_lo(), eta.support_lo());
  const double hi = std::max(first.support_hi(), eta.support_hi());
  const int n = 4000;
  std::vector<double> ts(n + 1);
  std::vector<Complex> vs(n + 1);
  const double scale = 1.0 / std::sqrt(1.0 - std::norm(s));
  for (int i = 0; i <= n; ++i) {
    const double t = lo + (hi - lo) * i / double(n);
    ts[i] = t;
    vs[i] = scale * (eta(t) - s * first(t));
  }
  return Envelope::sampled(std::move(ts), std::move(vs));
}

/// FieldSpec of B^dag(xi) B^dag(eta) |0> / sqrt(N) in the orthonormal basis
/// {b1 = first, b2 = orthogonalized}: sqrt(2) s |2,0> + sqrt(1-s^2) |1,1>,
/// normalized by N = 1 + s^2.
FieldSpec decomposed_pair(const Envelope& b1, const Envelope& b2, double s) {
  const double norm = std::sqrt(1.0 + s * s);
  const double c20 = std::sqrt(2.0) * s / norm;
  const double c11 = std::sqrt(1.0 - s * s) / norm;
  std::map<HierarchyIndex, Complex> coeffs;
  std::vector<std::pair<std::vector<int>, double>> amps{{{2, 0}, c20},
                                                        {{1, 1}, c11}};
  for (const auto& [m, cm] : amps) {
    for (const auto& [n, cn] : amps) {
      if (cm * cn != 0.0) coeffs[HierarchyIndex(m, n)] = cm * cn;
    }
  }
  return FieldSpec::multi_slot({{b1, 0, 2}, {b2, 0, 1}}, std::move(coeffs));
}

}  // namespace

TEST_CASE("decomposition: basis invariance and non-orthogonal agreement") {
  const Envelope xi = Envelope::gaussian(1.46, 0.0);
  const double tau = 1.0;
  const Envelope eta = Envelope::gaussian(1.46, tau);
  const double s = std::exp(-1.46 * 1.46 * tau * tau / 8.0);
  REQUIRE(std::abs(overlap(xi, eta).real() - s) < 1e-8);

  const SLHModel model = two_level(1.0);
  const auto times = linspace(xi.support_lo(), eta.support_hi() + 3.0, 61);

  // direct non-orthogonal propagation
  MasterEquation nonorth(model, FieldSpec::nonorthogonal_pair(xi, eta));
  const auto pe_ref = hierarchy_pe(nonorth, ground_density(), times);

  // basis A: Gram-Schmidt starting from xi
  const Envelope b2a = orthogonalized(xi, eta, s);
  REQUIRE(std::abs(overlap(xi, b2a)) < 1e-4);
  MasterEquation basis_a(model, decomposed_pair(xi, b2a, s));
  const auto pe_a = hierarchy_pe(basis_a, ground_density(), times);

  // basis B: Gram-Schmidt starting from eta
  const Envelope b2b = orthogonalized(eta, xi, s);
  MasterEquation basis_b(model, decomposed_pair(eta, b2b, s));
  const auto pe_b = hierarchy_pe(basis_b, ground_density(), times);

  for (std::size_t i = 0; i < times.size(); ++i) {
    REQUIRE(std::abs(pe_a[i] - pe_ref[i]) < 1e-4);
    REQUIRE(std::abs(pe_b[i] - pe_ref[i]) < 1e-4);
    REQUIRE(std::abs(pe_a[i] - pe_b[i]) < 1e-4);
  }
}

TEST_CASE("temporal basis rejects non-orthonormal modes") {
  const Envelope x1 = Envelope::gaussian(1.0, 0.0);
  const Envelope x2 = Envelope::gaussian(1.0, 1.0);  // overlap ~ 0.88
  REQUIRE_THROWS_AS(TemporalBasis({x1, x2}), std::invalid_argument);
}

TEST_CASE("to_field_spec outer products") {
  const Envelope x1 = Envelope::gaussian(1.0, 0.0);
  const Envelope x2 = Envelope::gaussian(1.0, 30.0);
  TemporalBasis basis({x1, x2});
  OccupationCoeffs coeffs;
  coeffs.photons = 2;
  const double r = 1.0 / std::sqrt(2.0);
  coeffs.amplitudes[{2, 0}] = r;
  coeffs.amplitudes[{0, 2}] = r;
  const FieldSpec spec = to_field_spec(coeffs, basis);
  REQUIRE(spec.coefficients.size() == 4);
  REQUIRE(std::abs(spec.coefficients.at(HierarchyIndex({2, 0}, {0, 2})) -
                   Complex(0.5)) < 1e-12);
  REQUIRE_NOTHROW(spec.validate());
}
