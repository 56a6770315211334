#include "commands.hpp"

#include "pn/errors.hpp"
#include "pn/serialization.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <sstream>

namespace pn::cli {

namespace {

namespace fs = std::filesystem;

struct Row {
  std::string name;
  std::string metric;  // diagnostics field compared against the gate
  double gate;
  std::string calibration;  // optional diagnostics field reported alongside
  std::vector<std::string> argv;
  std::function<Outcome()> run;
};

std::vector<Row> smoke_rows(const fs::path& dir) {
  std::vector<Row> rows;
  {
    LinsolveOptions o;
    o.problem = "random_spd:n=50,seed=1,condition=100";
    rows.push_back({"linsolve_random_spd", "reference_rel_error", 1e-6, "", {"pn", "linsolve", o.problem},
                    [o] { return run_linsolve(o); }});
  }
  {
    LinsolveOptions o;
    o.problem = "hilbert10";
    rows.push_back({"linsolve_hilbert10", "relative_residual", 1e-6, "", {"pn", "linsolve", o.problem},
                    [o] { return run_linsolve(o); }});
  }
  {
    OdesolveOptions o;
    o.problem = "logistic";
    rows.push_back({"odesolve_logistic_ek1", "reference_max_error", 1e-4, "reference_coverage_3std",
                    {"pn", "odesolve", o.problem, "--method", "ek1", "--q", "2", "--rtol", "1e-6"},
                    [o] { return run_odesolve(o); }});
  }
  {
    OdesolveOptions o;
    o.problem = "linear_decay";
    o.rtol = 1e-8;
    o.eval = {1.0};
    rows.push_back({"odesolve_linear_decay_ek1", "reference_max_error", 1e-5, "reference_coverage_3std",
                    {"pn", "odesolve", o.problem, "--method", "ek1", "--rtol", "1e-8", "--eval", "1"},
                    [o] { return run_odesolve(o); }});
  }
  {
    OdesolveOptions o;
    o.problem = "lotka_volterra";
    o.q = 3;
    o.rtol = 1e-8;
    o.atol = 1e-10;
    o.eval = {20.0};
    rows.push_back({"odesolve_lotka_volterra_ek1", "reference_max_error", 1e-3, "reference_coverage_3std",
                    {"pn", "odesolve", o.problem, "--q", "3", "--rtol", "1e-8", "--atol", "1e-10", "--eval", "20"},
                    [o] { return run_odesolve(o); }});
  }
  {
    OdesolveOptions o;
    o.problem = "linear_decay";
    o.method = "perturbed";
    o.grid = 0.05;
    o.ensemble = 100;
    o.seed = 1;
    o.eval = {1.0};
    rows.push_back({"odesolve_linear_decay_perturbed", "reference_max_error_over_se", 3.0, "",
                    {"pn", "odesolve", o.problem, "--method", "perturbed", "--grid", "0.05", "--ensemble", "100",
                     "--seed", "1", "--eval", "1"},
                    [o] { return run_odesolve(o); }});
  }
  {
    const fs::path nodes = dir / "gauss_x2_grid_nodes.json";
    QuadOptions o;
    o.problem = "gauss_x2";
    o.nodes_file = nodes.string();
    rows.push_back({"quad_gauss_x2_grid", "reference_error", 1e-3, "reference_error_over_std",
                    {"pn", "quad", o.problem, "--nodes-file", nodes.filename().string()}, [o, nodes] {
                      nlohmann::json grid = nlohmann::json::array();
                      for (int i = 0; i < 30; ++i) grid.push_back({-5.0 + 10.0 * i / 29.0});
                      std::ofstream(nodes) << grid.dump() << '\n';
                      return run_quad(o);
                    }});
  }
  {
    QuadOptions o;
    o.problem = "gauss_x2";
    o.n_nodes = 50;
    o.seed = 1;
    rows.push_back({"quad_gauss_x2_bmc", "reference_error", 5e-2, "reference_error_over_std",
                    {"pn", "quad", o.problem, "--n-nodes", "50", "--seed", "1"}, [o] { return run_quad(o); }});
  }
  {
    QuadOptions o;
    o.problem = "genz_oscillatory_1d";
    o.n_nodes = 30;
    o.seed = 1;
    rows.push_back({"quad_genz_oscillatory_bmc", "reference_error", 1e-3, "reference_error_over_std",
                    {"pn", "quad", o.problem, "--n-nodes", "30", "--seed", "1"}, [o] { return run_quad(o); }});
  }
  return rows;
}

std::map<std::string, double> read_gates(const std::string& path, const std::vector<Row>& rows) {
  std::ifstream in(path);
  if (!in) throw ResourceError("cannot open gates file: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  const nlohmann::json j = serialization::parse(buf.str(), path);
  if (!j.is_object()) throw ParseError(path + ": expected an object mapping row names to tolerances");
  std::map<std::string, double> gates;
  for (const auto& [key, value] : j.items()) {
    const bool known = std::any_of(rows.begin(), rows.end(), [&](const Row& r) { return r.name == key; });
    if (!known) throw ParseError(path + ": unknown row \"" + key + "\"");
    gates[key] = serialization::read_number(value, path + ": " + key);
  }
  return gates;
}

std::string csv_number(double v) {
  if (!std::isfinite(v)) return std::isnan(v) ? "" : "inf";
  std::ostringstream s;
  s << std::setprecision(6) << v;
  return s.str();
}

double field(const nlohmann::json& diag, const std::string& name) {
  if (name.empty() || !diag.contains(name) || diag[name].is_null()) return std::nan("");
  return diag[name].get<double>();
}

}  // namespace

Outcome run_bench(const BenchOptions& opt, std::ostream& log) {
  if (opt.suite.empty()) throw UsageError("empty suite name");
  if (opt.suite != "smoke") throw UsageError("unknown suite \"" + opt.suite + "\" (known: smoke)");
  if (opt.out_dir.empty()) throw UsageError("--out is required");
  const fs::path dir(opt.out_dir);
  fs::create_directories(dir);

  const std::vector<Row> rows = smoke_rows(dir);
  const std::map<std::string, double> overrides =
      opt.gates_file ? read_gates(*opt.gates_file, rows) : std::map<std::string, double>{};

  std::ofstream csv(dir / "summary.csv");
  if (!csv) throw ResourceError("cannot write " + (dir / "summary.csv").string());
  csv << "row,metric,value,gate,pass,calibration_metric,calibration,runtime_s\n";

  nlohmann::json summary = nlohmann::json::array();
  std::vector<std::string> failing;
  for (const Row& row : rows) {
    const double gate = overrides.count(row.name) ? overrides.at(row.name) : row.gate;
    const auto start = std::chrono::steady_clock::now();
    Outcome outcome;
    std::string error;
    try {
      outcome = row.run();
    } catch (const std::exception& e) {
      error = e.what();
      outcome.exit_code = kFailure;
    }
    const double runtime = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const nlohmann::json diag = outcome.report.value("diagnostics", nlohmann::json::object());
    const double value = field(diag, row.metric);
    const double calibration = field(diag, row.calibration);
    const bool pass = error.empty() && outcome.exit_code == kOk && value <= gate;
    if (!pass) failing.push_back(row.name);

    nlohmann::json report = envelope(row.argv, runtime, outcome);
    if (!error.empty()) report["error"] = error;
    std::ofstream(dir / (row.name + ".json")) << report.dump(2) << '\n';

    csv << row.name << ',' << row.metric << ',' << csv_number(value) << ',' << csv_number(gate) << ','
        << (pass ? "true" : "false") << ',' << row.calibration << ',' << csv_number(calibration) << ','
        << csv_number(runtime) << '\n';
    log << (pass ? "pass " : "FAIL ") << row.name << ": " << row.metric << " = " << csv_number(value)
        << " (gate " << csv_number(gate) << ")" << (error.empty() ? "" : "; error: " + error) << '\n';
    summary.push_back({{"row", row.name},
                       {"metric", row.metric},
                       {"value", std::isfinite(value) ? nlohmann::json(value) : nlohmann::json(nullptr)},
                       {"gate", gate},
                       {"pass", pass}});
  }

  Outcome out;
  out.report["result"] = {{"suite", opt.suite}, {"rows", summary}, {"summary_csv", (dir / "summary.csv").string()}};
  out.report["diagnostics"] = {{"failing_rows", failing}};
  if (!failing.empty()) {
    out.exit_code = kGateFailure;
    std::string list;
    for (const auto& f : failing) list += (list.empty() ? "" : ", ") + f;
    out.message = "benchmark gates failed: " + list;
  }
  return out;
}

}  // namespace pn::cli
