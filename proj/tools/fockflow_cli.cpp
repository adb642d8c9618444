// fockflow command-line front end.
//
//   fockflow run    <config.json>   propagate one scenario -> time-series CSV
//   fockflow sweep  <config.json>   photon-number / bandwidth sweep -> table CSV
//   fockflow fit    <table.csv>     fit a scaling law to table columns
//   fockflow verify                 cross-check the solver against its oracles
//
// Output directory: --out flag, then FOCKFLOW_OUT, then the current directory.
// Exit codes: 0 ok, 1 verification failure, 2 config/parse error,
// 3 invariant breach, 4 integration failure.

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include <fockflow/fockflow.hpp>

namespace {

using fockflow::scenario::json;
namespace fs = std::filesystem;

fs::path resolve_out(const std::string& flag) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv("FOCKFLOW_OUT"); env && *env) return env;
  return ".";
}

json load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw fockflow::scenario::ConfigError("cannot open config: " + path);
  }
  return json::parse(in);
}

int run_verify(double rtol) {
  using namespace fockflow;
  const double gamma = 1.0;
  const Envelope env = Envelope::gaussian(1.46, 0.0);
  const SLHModel model = two_level(gamma);
  const Operator rho0 = ground_ket() * ground_ket().adjoint();
  const Operator pe_op = excited_projector();

  const double t0 = env.support_lo();
  const double t1 = env.support_hi() + 4.0 / gamma;
  const int nsamples = 400;
  std::vector<double> times(nsamples);
  for (int i = 0; i < nsamples; ++i) {
    times[i] = t0 + (t1 - t0) * i / double(nsamples - 1);
  }

  MasterEquation me(model, FieldSpec::fock(env, 1));
  TimeGrid grid;
  grid.t0 = t0;
  grid.tf = t1;
  grid.rtol = rtol;
  grid.atol = rtol * 1e-2;
  auto snaps = propagate_to_times(
      [&](double t, const StateVector& y, StateVector& d) { me.rhs(t, y, d); },
      me.initial(rho0), grid, times);

  bool all_ok = true;
  auto report = [&](const char* name, double value, double tol) {
    const bool ok = value <= tol;
    all_ok = all_ok && ok;
    std::printf("%-34s %-4s  defect %.3e  (tolerance %.1e)\n", name,
                ok ? "PASS" : "FAIL", value, tol);
  };

  double sup_analytic = 0.0;
  for (int i = 0; i < nsamples; ++i) {
    const double pe = me.expect(snaps[i], pe_op).real();
    sup_analytic = std::max(
        sup_analytic,
        std::abs(pe - analytic_single_photon_pe(env, gamma, gamma, times[i])));
  }
  report("analytic single-photon P_e", sup_analytic, 1e-6);

  const auto cascaded = cascaded_single_photon(model, env, rho0, times);
  double sup_cascaded = 0.0;
  for (int i = 0; i < nsamples; ++i) {
    sup_cascaded = std::max(
        sup_cascaded,
        trace_distance(me.physical_state(snaps[i]), cascaded.rho_sys(i)));
  }
  report("cascaded-source trace distance", sup_cascaded, 1e-6);

  const int nbins = 200;
  const auto tb = timebin_brute_force(model, env, 1, ground_ket(), t0, t1,
                                      nbins);
  std::vector<StateVector> tb_snaps = propagate_to_times(
      [&](double t, const StateVector& y, StateVector& d) { me.rhs(t, y, d); },
      me.initial(rho0), grid, tb.times);
  double sup_timebin = 0.0;
  for (std::size_t i = 0; i < tb.times.size(); ++i) {
    const double pe = me.expect(tb_snaps[i], pe_op).real();
    const double pe_tb = (tb.rho_sys[i] * pe_op).trace().real();
    sup_timebin = std::max(sup_timebin, std::abs(pe - pe_tb));
  }
  report("time-bin brute force (200 bins)", sup_timebin, 5e-3);

  return all_ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fockflow: quantum systems driven by N-photon wave packets"};
  app.require_subcommand(1);

  std::string config_path, table_path, out_flag;
  std::string family = "power_law";
  std::string x_col, y_col;
  std::string range;
  double rtol_flag = 0.0;
  double fixed_step = 0.0;
  int workers = 0;
  double verify_rtol = 1e-10;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--out", out_flag, "output directory");
    cmd->add_option("--rtol", rtol_flag, "relative tolerance override");
    cmd->add_option("--fixed-step", fixed_step,
                    "use classical RK4 with this step size");
  };

  CLI::App* run = app.add_subcommand("run", "propagate one scenario");
  run->add_option("config", config_path, "scenario JSON")->required();
  add_common(run);

  CLI::App* sweep = app.add_subcommand("sweep", "parameter sweep");
  sweep->add_option("config", config_path, "sweep JSON")->required();
  sweep->add_option("--workers", workers, "worker threads (0 = all cores)");
  add_common(sweep);

  CLI::App* fit = app.add_subcommand("fit", "fit a scaling law to a table");
  fit->add_option("table", table_path, "CSV table")->required();
  fit->add_option("--family", family,
                  "power_law | power_law_one_minus | linear");
  fit->add_option("--range", range, "x range as lo..hi");
  fit->add_option("--x", x_col, "x column name (default: first)");
  fit->add_option("--y", y_col, "y column name (default: last)");

  CLI::App* verify = app.add_subcommand("verify", "oracle cross-checks");
  verify->add_option("--rtol", verify_rtol, "solver tolerance");

  CLI11_PARSE(app, argc, argv);

  using namespace fockflow::scenario;
  Overrides ov;
  if (rtol_flag > 0.0) ov.rtol = rtol_flag;
  if (fixed_step > 0.0) ov.fixed_dt = fixed_step;
  ov.workers = workers;

  try {
    if (run->parsed()) {
      return run_scenario(load_config(config_path), resolve_out(out_flag), ov);
    }
    if (sweep->parsed()) {
      return sweep_scenario(load_config(config_path), resolve_out(out_flag),
                            ov);
    }
    if (fit->parsed()) {
      double lo = -1e300, hi = 1e300;
      if (!range.empty()) {
        const std::size_t sep = range.find("..");
        if (sep == std::string::npos) {
          std::cerr << "config error: --range expects lo..hi\n";
          return kExitConfig;
        }
        lo = std::stod(range.substr(0, sep));
        hi = std::stod(range.substr(sep + 2));
      }
      const fockflow::FitResult r =
          fit_table(table_path, family, lo, hi, x_col, y_col);
      std::printf("family      %s\n", family.c_str());
      std::printf("a           %.6f +- %.6f\n", r.a, r.a_halfwidth);
      std::printf("b           %.6f +- %.6f\n", r.b, r.b_halfwidth);
      std::printf("r_squared   %.8f\n", r.r_squared);
      std::printf("iterations  %d\n", r.iterations);
      return 0;
    }
    if (verify->parsed()) return run_verify(verify_rtol);
  } catch (const json::exception& e) {
    std::cerr << "config parse error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const fockflow::IntegrationError& e) {
    std::cerr << "integration error: " << e.what() << "\n";
    return kExitIntegration;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIntegration;
  }
  return 0;
}
