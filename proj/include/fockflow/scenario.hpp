#pragma once

// Batch front end: JSON scenario configs -> time-series CSV, parameter
// sweeps -> table CSV, and scaling-law fits over table columns.
//
// Everything here is deterministic: no RNG, stable 12-significant-digit
// float formatting, LF line endings, header line "# fockflow v1". Exit codes
// follow the CLI contract: 0 ok, 2 config/parse error, 3 invariant breach,
// 4 integration failure.

#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "fit.hpp"
#include "integrator.hpp"
#include "models.hpp"
#include "observables.hpp"

namespace fockflow::scenario {

using json = nlohmann::json;

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitInvariant = 3;
inline constexpr int kExitIntegration = 4;

/// 12 significant digits, stable across runs.
inline std::string format_value(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.11e", v);
  return buf;
}

// ---- config parsing ----------------------------------------------------------

inline double get_number(const json& j, const std::string& key,
                         std::optional<double> fallback = std::nullopt) {
  if (!j.contains(key)) {
    if (fallback) return *fallback;
    throw ConfigError("missing config key: " + key);
  }
  if (!j.at(key).is_number()) throw ConfigError("key not a number: " + key);
  return j.at(key).get<double>();
}

inline Complex get_complex(const json& j) {
  if (j.is_number()) return Complex(j.get<double>(), 0.0);
  if (j.is_array() && j.size() == 2) {
    return Complex(j.at(0).get<double>(), j.at(1).get<double>());
  }
  throw ConfigError("expected number or [re, im] pair");
}

inline Envelope parse_envelope(const json& j) {
  const std::string kind = j.value("kind", "");
  if (kind == "gaussian") {
    return Envelope::gaussian(get_number(j, "bandwidth"),
                              get_number(j, "arrival", 0.0));
  }
  if (kind == "rising_exp") {
    return Envelope::rising_exp(get_number(j, "bandwidth"),
                                get_number(j, "arrival", 0.0));
  }
  if (kind == "rectangular") {
    return Envelope::rectangular(get_number(j, "duration"));
  }
  if (kind == "sampled") {
    std::vector<double> times = j.at("times").get<std::vector<double>>();
    std::vector<Complex> values;
    for (const auto& v : j.at("values")) values.push_back(get_complex(v));
    return Envelope::sampled(std::move(times), std::move(values));
  }
  throw ConfigError("unknown envelope kind: '" + kind + "'");
}

inline FieldSpec parse_field(const json& j) {
  const std::string type = j.value("type", "");
  if (type == "vacuum") {
    // zero-photon slot over a nominal window
    return FieldSpec::fock(parse_envelope(j.at("envelope")), 0);
  }
  if (type == "fock") {
    return FieldSpec::fock(parse_envelope(j.at("envelope")),
                           static_cast<int>(get_number(j, "photons")),
                           static_cast<int>(get_number(j, "mode", 0.0)));
  }
  if (type == "superposition") {
    std::vector<Complex> amps;
    for (const auto& a : j.at("amplitudes")) amps.push_back(get_complex(a));
    return FieldSpec::superposition(parse_envelope(j.at("envelope")), amps);
  }
  if (type == "mixture") {
    return FieldSpec::mixture(
        parse_envelope(j.at("envelope")),
        j.at("probabilities").get<std::vector<double>>());
  }
  if (type == "coherent") {
    return FieldSpec::coherent_truncated(
        parse_envelope(j.at("envelope")), get_number(j, "nbar"),
        static_cast<int>(get_number(j, "n_trunc")));
  }
  if (type == "displaced_vacuum") {
    return FieldSpec::displaced_vacuum(parse_envelope(j.at("envelope")),
                                       get_complex(j.at("amplitude")));
  }
  if (type == "two_mode_fock") {
    return FieldSpec::two_mode_fock(
        parse_envelope(j.at("envelope")),
        static_cast<int>(get_number(j, "photons")),
        parse_envelope(j.at("envelope2")),
        static_cast<int>(get_number(j, "photons2")));
  }
  if (type == "nonorthogonal_pair") {
    return FieldSpec::nonorthogonal_pair(parse_envelope(j.at("envelope")),
                                         parse_envelope(j.at("envelope2")));
  }
  throw ConfigError("unknown field type: '" + type + "'");
}

inline SLHModel parse_model(const json& j, int total_photons,
                            std::optional<double> detuning_override =
                                std::nullopt) {
  const std::string type = j.value("type", "");
  if (type == "two_level") {
    return two_level(get_number(j, "gamma", 1.0),
                     detuning_override.value_or(get_number(j, "detuning", 0.0)));
  }
  if (type == "jaynes_cummings") {
    const int n_max = static_cast<int>(
        get_number(j, "n_max", static_cast<double>(total_photons + 1)));
    return jaynes_cummings(
        get_number(j, "g"), get_number(j, "gamma", 1.0),
        detuning_override.value_or(get_number(j, "delta0", 0.0)),
        get_number(j, "delta_cav", 0.0), n_max);
  }
  if (type == "two_mode_two_level") {
    return two_mode_two_level(get_number(j, "gamma1"),
                              get_number(j, "gamma2"));
  }
  throw ConfigError("unknown model type: '" + type + "'");
}

inline Operator parse_initial_state(const json& cfg, const json& model_cfg,
                                    const SLHModel& model, int total_photons) {
  const std::string name = cfg.value("initial_state", "ground");
  const std::string type = model_cfg.value("type", "");
  Eigen::VectorXcd ket;
  if (type == "jaynes_cummings") {
    const int n_max = static_cast<int>(get_number(
        model_cfg, "n_max", static_cast<double>(total_photons + 1)));
    ket = (name == "excited") ? jc_excited_ket(n_max) : jc_ground_ket(n_max);
  } else {
    ket = (name == "excited") ? excited_ket() : ground_ket();
  }
  if (name != "ground" && name != "excited") {
    throw ConfigError("unknown initial_state: '" + name + "'");
  }
  if (ket.size() != model.dim) {
    throw ConfigError("initial state dimension mismatch");
  }
  return ket * ket.adjoint();
}

inline Operator pe_operator(const json& model_cfg, int total_photons) {
  const std::string type = model_cfg.value("type", "");
  if (type == "jaynes_cummings") {
    const int n_max = static_cast<int>(get_number(
        model_cfg, "n_max", static_cast<double>(total_photons + 1)));
    return jc_excited_projector(n_max);
  }
  return excited_projector();
}

// ---- shared run plumbing --------------------------------------------------------

struct Overrides {
  std::optional<double> rtol;
  std::optional<double> fixed_dt;
  int workers = 0;  ///< 0 = all available cores
};

inline int resolve_workers(int requested) {
  if (requested > 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? static_cast<int>(hw) : 1;
}

inline TimeGrid make_grid(const json& cfg, const MasterEquation& me,
                          double settle, const Overrides& ov) {
  TimeGrid grid;
  const json g = cfg.value("grid", json::object());
  grid.t0 = get_number(g, "t0", me.start_time());
  grid.tf = get_number(g, "tf", me.end_time() + settle);
  grid.rtol = ov.rtol.value_or(get_number(g, "rtol", 1e-9));
  grid.atol = get_number(g, "atol", grid.rtol * 1e-2);
  if (ov.fixed_dt || g.contains("fixed_dt")) {
    grid.adaptive = false;
    grid.fixed_dt = ov.fixed_dt.value_or(get_number(g, "fixed_dt", 0.0));
  }
  for (double b : me.breakpoints()) {
    if (b > grid.t0 && b < grid.tf) grid.breakpoints.push_back(b);
  }
  return grid;
}

// ---- run ------------------------------------------------------------------------

/// One scenario -> time-series CSV plus an invariant-report sidecar.
inline int run_scenario(const json& cfg, const std::filesystem::path& out_dir,
                        const Overrides& ov) {
  const json field_cfg = cfg.at("field");
  const json model_cfg = cfg.at("model");
  FieldSpec field = parse_field(field_cfg);
  const int total_photons = field.total_max_photons();

  std::vector<std::string> observables =
      cfg.value("observables", std::vector<std::string>{"pe"});
  MasterEquation::Options options;
  for (const auto& name : observables) {
    if (name.rfind("flux", 0) == 0) options.flux = true;
    if (name.rfind("quad", 0) == 0) {
      options.quadrature_phases =
          cfg.value("quadrature_phases", std::vector<double>{0.0});
    }
  }

  // piecewise-constant detuning schedule: list of {until, detuning}
  struct Segment {
    double until;
    std::optional<double> detuning;
  };
  std::vector<Segment> segments;
  if (cfg.contains("detuning_schedule")) {
    for (const auto& s : cfg.at("detuning_schedule")) {
      segments.push_back({get_number(s, "until"), get_number(s, "detuning")});
    }
  }

  SLHModel model = parse_model(model_cfg, total_photons,
                               segments.empty()
                                   ? std::nullopt
                                   : segments.front().detuning);
  const Operator rho0 =
      parse_initial_state(cfg, model_cfg, model, total_photons);
  const Operator pe_op = pe_operator(model_cfg, total_photons);

  MasterEquation me(model, field, options);
  const double gamma = get_number(model_cfg, "gamma", 1.0);
  TimeGrid grid = make_grid(cfg, me, 10.0 / gamma, ov);

  const int samples =
      static_cast<int>(get_number(cfg.value("grid", json::object()),
                                  "samples", 400.0));
  std::vector<double> times(samples);
  for (int i = 0; i < samples; ++i) {
    times[i] = grid.t0 + (grid.tf - grid.t0) * i / double(samples - 1);
  }
  times.front() = grid.t0;
  times.back() = grid.tf;  // guard the endpoint against roundoff drift

  StateVector y = me.initial(rho0);
  std::vector<StateVector> snaps;
  try {
    if (segments.empty()) {
      snaps = propagate_to_times([&](double t, const StateVector& v,
                                     StateVector& d) { me.rhs(t, v, d); },
                                 y, grid, times);
    } else {
      // segment-wise propagation: rebuild the Hamiltonian per segment; the
      // state layout depends only on the field spec, so the vector carries
      // over unchanged across segment boundaries.
      segments.back().until = std::max(segments.back().until, grid.tf);
      double t_cur = grid.t0;
      std::size_t ti = 0;
      for (const auto& seg : segments) {
        const double t_end = std::min(seg.until, grid.tf);
        if (!(t_end > t_cur)) continue;
        SLHModel seg_model =
            parse_model(model_cfg, total_photons, seg.detuning);
        MasterEquation seg_me(seg_model, field, options);
        TimeGrid seg_grid = grid;
        seg_grid.t0 = t_cur;
        seg_grid.tf = t_end;
        seg_grid.breakpoints.clear();
        for (double b : grid.breakpoints) {
          if (b > t_cur && b < t_end) seg_grid.breakpoints.push_back(b);
        }
        std::vector<double> seg_times;
        while (ti < times.size() && times[ti] <= t_end) {
          if (times[ti] >= t_cur) seg_times.push_back(times[ti]);
          ++ti;
        }
        if (!seg_times.empty() && seg_times.back() >= t_end) {
          // endpoint handled below via the final snapshot
        }
        auto seg_snaps = propagate_to_times(
            [&](double t, const StateVector& v, StateVector& d) {
              seg_me.rhs(t, v, d);
            },
            y, seg_grid, seg_times);
        for (auto& s : seg_snaps) snaps.push_back(std::move(s));
        // advance the carried state to the segment end
        if (seg_times.empty() || seg_times.back() < t_end) {
          auto endsnap = propagate_to_times(
              [&](double t, const StateVector& v, StateVector& d) {
                seg_me.rhs(t, v, d);
              },
              y, seg_grid, {t_end});
          y = endsnap.back();
        } else {
          y = snaps.back();
        }
        t_cur = t_end;
      }
      if (snaps.size() != times.size()) {
        throw IntegrationError("schedule propagation missed sample times");
      }
    }
  } catch (const IntegrationError&) {
    return kExitIntegration;
  }

  // observable columns
  auto column_value = [&](const std::string& name,
                          const StateVector& v) -> double {
    if (name == "pe") return me.expect(v, pe_op).real();
    if (name == "purity") return purity(me.physical_state(v));
    if (name == "entropy") return entropy(me.physical_state(v));
    if (name == "bloch_x") return bloch_vector(me.physical_state(v))[0];
    if (name == "bloch_y") return bloch_vector(me.physical_state(v))[1];
    if (name == "bloch_z") return bloch_vector(me.physical_state(v))[2];
    if (name == "flux" || name == "flux_11") return me.flux(v, 0, 0).real();
    if (name == "flux_22") return me.flux(v, 1, 1).real();
    if (name == "flux_sum") {
      double s = 0.0;
      for (int i = 0; i < me.model().modes; ++i) s += me.flux(v, i, i).real();
      return s;
    }
    if (name.rfind("quad_", 0) == 0) {
      return me.quadrature(v, std::stoul(name.substr(5))).real();
    }
    throw ConfigError("unknown observable: '" + name + "'");
  };

  const std::string out_name =
      cfg.value("output", cfg.value("name", std::string("scenario")) + ".csv");
  std::filesystem::create_directories(out_dir);
  std::ofstream csv(out_dir / out_name, std::ios::binary);
  csv << "# fockflow v1\n";
  csv << "t";
  for (const auto& name : observables) csv << "," << name;
  csv << "\n";
  for (std::size_t i = 0; i < times.size(); ++i) {
    csv << format_value(times[i]);
    for (const auto& name : observables) {
      csv << "," << format_value(column_value(name, snaps[i]));
    }
    csv << "\n";
  }

  // invariant sidecar + threshold gate
  Trajectory traj;
  traj.times = times;
  traj.snapshots = std::move(snaps);
  const InvariantReport report = monitor_invariants(me, traj);
  const double threshold = std::max(1e-8, 10.0 * grid.rtol);
  std::ofstream side(out_dir / (out_name + ".invariants.txt"),
                     std::ios::binary);
  side << "max_trace_defect " << format_value(report.max_trace_defect) << "\n"
       << "max_offdiag_trace " << format_value(report.max_offdiag_trace)
       << "\n"
       << "max_hermiticity_defect "
       << format_value(report.max_hermiticity_defect) << "\n"
       << "min_eigenvalue " << format_value(report.min_eigenvalue) << "\n"
       << "threshold " << format_value(threshold) << "\n";
  const bool ok = report.max_trace_defect <= threshold &&
                  report.max_offdiag_trace <= threshold &&
                  report.max_hermiticity_defect <= threshold &&
                  report.min_eigenvalue >= -threshold;
  return ok ? kExitOk : kExitInvariant;
}

// ---- sweep -----------------------------------------------------------------------

/// Maximum excitation probability of one sweep point.
inline double sweep_max_pe(const json& model_cfg, const json& envelope_cfg,
                           int photons, double bandwidth, double rtol,
                           std::optional<double> fixed_dt) {
  json env_cfg = envelope_cfg;
  env_cfg["bandwidth"] = bandwidth;
  Envelope env = parse_envelope(env_cfg);
  FieldSpec field = FieldSpec::fock(env, photons);
  SLHModel model = parse_model(model_cfg, photons);
  const Operator pe_op = pe_operator(model_cfg, photons);
  const double gamma = get_number(model_cfg, "gamma", 1.0);
  Eigen::VectorXcd g =
      model_cfg.value("type", "") == "jaynes_cummings"
          ? jc_ground_ket(static_cast<int>(
                get_number(model_cfg, "n_max", double(photons + 1))))
          : ground_ket();

  MasterEquation me(model, field);
  TimeGrid grid;
  grid.t0 = me.start_time();
  grid.tf = me.end_time() + 3.0 / gamma;
  grid.rtol = rtol;
  grid.atol = rtol * 1e-2;
  if (fixed_dt) {
    grid.adaptive = false;
    grid.fixed_dt = *fixed_dt;
  }
  for (double b : me.breakpoints()) {
    if (b > grid.t0 && b < grid.tf) grid.breakpoints.push_back(b);
  }

  std::vector<double> ts;
  std::vector<double> pes;
  propagate_observe(
      [&](double t, const StateVector& v, StateVector& d) { me.rhs(t, v, d); },
      me.initial(Operator(g * g.adjoint())), grid,
      [&](double t, const StateVector& v) {
        ts.push_back(t);
        pes.push_back(me.expect(v, pe_op).real());
      });
  return peak_quadratic(ts, pes).value;
}

/// Golden-section maximization of max_pe over bandwidth, seeded near the
/// known scaling optimum and finished with one parabolic refinement.
inline std::pair<double, double> optimal_bandwidth(
    const json& model_cfg, const json& envelope_cfg, int photons, double rtol,
    std::optional<double> fixed_dt) {
  const double seed = 1.45 * std::pow(double(photons), 0.987);
  double a = 0.55 * seed, b = 1.75 * seed;
  auto f = [&](double bw) {
    return sweep_max_pe(model_cfg, envelope_cfg, photons, bw, rtol, fixed_dt);
  };
  const double invphi = (std::sqrt(5.0) - 1.0) / 2.0;
  double x1 = b - invphi * (b - a);
  double x2 = a + invphi * (b - a);
  double f1 = f(x1), f2 = f(x2);
  while (b - a > 0.01 * seed) {
    if (f1 < f2) {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + invphi * (b - a);
      f2 = f(x2);
    } else {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - invphi * (b - a);
      f1 = f(x1);
    }
  }
  // parabolic refinement through the bracket interior
  double xm = 0.5 * (x1 + x2);
  double fm = f(xm);
  double best_x = xm, best_f = fm;
  if (f1 > best_f) best_x = x1, best_f = f1;
  if (f2 > best_f) best_x = x2, best_f = f2;
  const double d01 = (fm - f1) / (xm - x1);
  const double d12 = (f2 - fm) / (x2 - xm);
  const double curv = (d12 - d01) / (x2 - x1);
  if (curv < 0.0) {
    const double xv = 0.5 * (x1 + xm - d01 / curv);
    if (xv > a && xv < b) {
      const double fv = f(xv);
      if (fv > best_f) {
        best_x = xv;
        best_f = fv;
      }
    }
  }
  return {best_x, best_f};
}

struct SweepRow {
  int photons = 0;
  double bandwidth = 0.0;
  double max_pe = 0.0;
  bool ok = false;
  std::string error;
};

/// Sweep over photon numbers x bandwidths (or per-N optimal bandwidth).
/// One deterministic CSV row per point; points run in parallel.
inline int sweep_scenario(const json& cfg, const std::filesystem::path& out_dir,
                          const Overrides& ov) {
  const json sweep_cfg = cfg.at("sweep");
  const json model_cfg = cfg.at("model");
  const json envelope_cfg = cfg.at("field").at("envelope");

  std::vector<int> photon_values;
  const json pj = sweep_cfg.at("photons");
  if (pj.is_array()) {
    for (const auto& v : pj) photon_values.push_back(v.get<int>());
  } else {
    const int from = pj.at("from").get<int>();
    const int to = pj.at("to").get<int>();
    for (int n = from; n <= to; ++n) photon_values.push_back(n);
  }

  bool optimize = false;
  std::vector<double> bandwidth_values;
  const json bj = sweep_cfg.at("bandwidth");
  if (bj.is_string() && bj.get<std::string>() == "optimal") {
    optimize = true;
  } else if (bj.is_array()) {
    bandwidth_values = bj.get<std::vector<double>>();
  } else {
    bandwidth_values.push_back(bj.get<double>());
  }

  const double rtol = ov.rtol.value_or(get_number(sweep_cfg, "rtol", 1e-8));

  struct Point {
    int photons;
    double bandwidth;  // ignored when optimizing
  };
  std::vector<Point> points;
  for (int n : photon_values) {
    if (optimize) {
      points.push_back({n, 0.0});
    } else {
      for (double bw : bandwidth_values) points.push_back({n, bw});
    }
  }

  std::vector<SweepRow> rows(points.size());
  std::atomic<std::size_t> cursor{0};
  auto worker = [&]() {
    for (;;) {
      const std::size_t i = cursor.fetch_add(1);
      if (i >= points.size()) return;
      SweepRow& row = rows[i];
      row.photons = points[i].photons;
      try {
        if (optimize) {
          auto [bw, pe] = optimal_bandwidth(model_cfg, envelope_cfg,
                                            points[i].photons, rtol,
                                            ov.fixed_dt);
          row.bandwidth = bw;
          row.max_pe = pe;
        } else {
          row.bandwidth = points[i].bandwidth;
          row.max_pe = sweep_max_pe(model_cfg, envelope_cfg, points[i].photons,
                                    points[i].bandwidth, rtol, ov.fixed_dt);
        }
        row.ok = true;
      } catch (const std::exception& e) {
        row.error = e.what();
      }
    }
  };
  const int nworkers =
      std::min<int>(resolve_workers(ov.workers), static_cast<int>(points.size()));
  std::vector<std::thread> pool;
  for (int w = 1; w < nworkers; ++w) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();

  const std::string out_name =
      cfg.value("output", cfg.value("name", std::string("sweep")) + ".csv");
  std::filesystem::create_directories(out_dir);
  std::ofstream csv(out_dir / out_name, std::ios::binary);
  csv << "# fockflow v1\n";
  csv << "photons,bandwidth,max_pe\n";
  bool any_failed = false;
  for (const auto& row : rows) {
    if (!row.ok) {
      any_failed = true;
      csv << row.photons << ",nan,nan\n";
      continue;
    }
    csv << row.photons << "," << format_value(row.bandwidth) << ","
        << format_value(row.max_pe) << "\n";
  }
  return any_failed ? kExitIntegration : kExitOk;
}

// ---- fit -------------------------------------------------------------------------

struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;
};

inline Table read_table(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open table: " + path.string());
  Table table;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (table.columns.empty()) {
      table.columns = cells;
      continue;
    }
    std::vector<double> row;
    for (const auto& c : cells) row.push_back(std::strtod(c.c_str(), nullptr));
    table.rows.push_back(std::move(row));
  }
  if (table.columns.empty()) throw ConfigError("empty table");
  return table;
}

inline std::size_t column_index(const Table& t, const std::string& name) {
  for (std::size_t i = 0; i < t.columns.size(); ++i) {
    if (t.columns[i] == name) return i;
  }
  throw ConfigError("no such column: " + name);
}

/// Fit a family to table columns (default x = first column, y = last),
/// restricted to x in [range_lo, range_hi]. Prints the result to stdout.
inline FitResult fit_table(const std::filesystem::path& path,
                           const std::string& family_name, double range_lo,
                           double range_hi, const std::string& x_col = "",
                           const std::string& y_col = "") {
  const Table table = read_table(path);
  const std::size_t xi =
      x_col.empty() ? 0 : column_index(table, x_col);
  const std::size_t yi =
      y_col.empty() ? table.columns.size() - 1 : column_index(table, y_col);
  std::vector<double> xs, ys;
  for (const auto& row : table.rows) {
    const double x = row.at(xi);
    const double y = row.at(yi);
    if (x < range_lo || x > range_hi || std::isnan(x) || std::isnan(y)) {
      continue;
    }
    xs.push_back(x);
    ys.push_back(y);
  }
  return fit_power_law(xs, ys, fit_family_from_name(family_name));
}

}  // namespace fockflow::scenario
