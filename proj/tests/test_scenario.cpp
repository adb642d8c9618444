// JSON scenario front end: CSV output, determinism, sweeps, and table fits.

#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <fockflow/scenario.hpp>

using namespace fockflow;
using namespace fockflow::scenario;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& tag) {
  const fs::path dir = fs::temp_directory_path() / ("fockflow_test_" + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json gaussian_run_config() {
  return json{
      {"name", "gauss_n1"},
      {"model", {{"type", "two_level"}, {"gamma", 1.0}}},
      {"field",
       {{"type", "fock"},
        {"photons", 1},
        {"envelope", {{"kind", "gaussian"}, {"bandwidth", 1.46}}}}},
      {"observables", {"pe"}},
      {"grid", {{"rtol", 1e-10}, {"samples", 401}}},
  };
}

double csv_max_column(const Table& t, const std::string& col) {
  const std::size_t i = column_index(t, col);
  double best = -1e300;
  for (const auto& row : t.rows) best = std::max(best, row.at(i));
  return best;
}

}  // namespace

TEST_CASE("run_scenario writes a valid time series") {
  const fs::path dir = fresh_dir("run");
  const json cfg = gaussian_run_config();
  const Overrides ov;
  REQUIRE(run_scenario(cfg, dir, ov) == kExitOk);

  const fs::path csv = dir / "gauss_n1.csv";
  REQUIRE(fs::exists(csv));
  const std::string text = slurp(csv);
  REQUIRE(text.rfind("# fockflow v1\n", 0) == 0);
  REQUIRE(text.find("\r") == std::string::npos);  // LF only

  const Table t = read_table(csv);
  REQUIRE(t.columns == std::vector<std::string>{"t", "pe"});
  REQUIRE(t.rows.size() == 401);
  REQUIRE(csv_max_column(t, "pe") == Catch::Approx(0.801).margin(0.005));

  // invariant sidecar present and within threshold
  const std::string side = slurp(dir / "gauss_n1.csv.invariants.txt");
  REQUIRE(side.find("max_trace_defect") != std::string::npos);
}

TEST_CASE("fixed-step runs are byte-identical") {
  const fs::path d1 = fresh_dir("det1");
  const fs::path d2 = fresh_dir("det2");
  json cfg = gaussian_run_config();
  cfg["grid"]["fixed_dt"] = 0.01;
  cfg["grid"]["samples"] = 101;
  const Overrides ov;
  REQUIRE(run_scenario(cfg, d1, ov) == kExitOk);
  REQUIRE(run_scenario(cfg, d2, ov) == kExitOk);
  REQUIRE(slurp(d1 / "gauss_n1.csv") == slurp(d2 / "gauss_n1.csv"));
}

TEST_CASE("vacuum scenario reports zero flux") {
  const fs::path dir = fresh_dir("vac");
  const json cfg{
      {"name", "vacuum"},
      {"model", {{"type", "two_level"}, {"gamma", 1.0}}},
      {"field",
       {{"type", "vacuum"},
        {"envelope", {{"kind", "gaussian"}, {"bandwidth", 1.0}}}}},
      {"observables", {"pe", "flux"}},
      {"grid", {{"samples", 51}}},
  };
  const Overrides ov;
  REQUIRE(run_scenario(cfg, dir, ov) == kExitOk);
  const Table t = read_table(dir / "vacuum.csv");
  const std::size_t fi = column_index(t, "flux");
  const std::size_t pi = column_index(t, "pe");
  for (const auto& row : t.rows) {
    REQUIRE(std::abs(row.at(fi)) < 1e-8);
    REQUIRE(std::abs(row.at(pi)) < 1e-8);  // ground state stays dark
  }
}

TEST_CASE("config errors are reported as ConfigError") {
  json bad = gaussian_run_config();
  bad["field"]["type"] = "wibble";
  const Overrides ov;
  REQUIRE_THROWS_AS(run_scenario(bad, fresh_dir("bad"), ov), ConfigError);

  json bad2 = gaussian_run_config();
  bad2["observables"] = {"frobnicate"};
  REQUIRE_THROWS_AS(run_scenario(bad2, fresh_dir("bad2"), ov), ConfigError);
}

TEST_CASE("sweep produces a table and N = 1 beats N = 2 at unit bandwidth") {
  const fs::path dir = fresh_dir("sweep");
  const json cfg{
      {"name", "small_sweep"},
      {"model", {{"type", "two_level"}, {"gamma", 1.0}}},
      {"field", {{"envelope", {{"kind", "gaussian"}, {"bandwidth", 1.0}}}}},
      {"sweep",
       {{"photons", {1, 2}}, {"bandwidth", 1.0}, {"rtol", 1e-9}}},
  };
  Overrides ov;
  ov.workers = 2;
  REQUIRE(sweep_scenario(cfg, dir, ov) == kExitOk);
  const Table t = read_table(dir / "small_sweep.csv");
  REQUIRE(t.columns == std::vector<std::string>{"photons", "bandwidth",
                                                "max_pe"});
  REQUIRE(t.rows.size() == 2);
  const std::size_t pe = column_index(t, "max_pe");
  REQUIRE(t.rows[0].at(pe) > t.rows[1].at(pe));
  REQUIRE(t.rows[0].at(pe) > 0.7);
}

TEST_CASE("fit_table recovers a synthetic scaling law") {
  const fs::path dir = fresh_dir("fit");
  const fs::path csv = dir / "synth.csv";
  {
    std::ofstream out(csv, std::ios::binary);
    out << "# fockflow v1\n";
    out << "photons,max_pe\n";
    for (int n = 5; n <= 40; ++n) {
      out << n << "," << format_value(1.0 - 0.2694 * std::pow(n, -0.973))
          << "\n";
    }
  }
  const FitResult r = fit_table(csv, "power_law_one_minus", 10.0, 40.0,
                                "photons", "max_pe");
  REQUIRE(r.a == Catch::Approx(0.2694).margin(1e-6));
  REQUIRE(r.b == Catch::Approx(0.973).margin(1e-6));
  REQUIRE(r.r_squared > 0.999999);

  // the range filter really filters
  const FitResult narrow = fit_table(csv, "power_law_one_minus", 20.0, 30.0,
                                     "photons", "max_pe");
  REQUIRE(narrow.a == Catch::Approx(0.2694).margin(1e-6));
}

TEST_CASE("format_value is stable and locale-free") {
  REQUIRE(format_value(0.5) == "5.00000000000e-01");
  REQUIRE(format_value(-1.25e-9) == "-1.25000000000e-09");
}
