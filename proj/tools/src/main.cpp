#include "commands.hpp"

#include "pn/errors.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <fstream>
#include <iostream>

namespace {

using namespace pn::cli;

int emit(const Outcome& outcome, const std::vector<std::string>& argv, double wall, const std::string& out_path) {
  const std::string text = envelope(argv, wall, outcome).dump(2) + "\n";
  if (out_path.empty()) {
    std::cout << text;
  } else {
    std::ofstream out(out_path);
    if (!out) {
      std::cerr << "pn: cannot write report: " << out_path << '\n';
      return kFailure;
    }
    out << text;
  }
  if (!outcome.message.empty()) std::cerr << "pn: " << outcome.message << '\n';
  return outcome.exit_code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Probabilistic numerical solvers: linear systems, ODEs and integrals with belief-valued output."};
  app.name("pn");
  app.require_subcommand(1);

  std::string out_path;

  LinsolveOptions lin;
  auto* linsolve = app.add_subcommand("linsolve", "Solve an spd linear system with the Bayesian CG solver");
  linsolve->add_option("problem", lin.problem, "Problem file, builtin name, random_spd:n=..,seed=.. or -")->required();
  linsolve->add_option("--rtol", lin.rtol, "Relative residual tolerance")->capture_default_str();
  linsolve->add_option("--atol", lin.atol, "Absolute residual tolerance")->capture_default_str();
  linsolve->add_option("--maxiter", lin.maxiter, "Iteration cap (default 10 n)")->check(CLI::NonNegativeNumber);
  linsolve->add_option("--seed", lin.seed, "Seed echoed in the report")->capture_default_str();
  linsolve->add_option("--out", out_path, "Write the report here instead of stdout");

  OdesolveOptions ode;
  auto* odesolve = app.add_subcommand("odesolve", "Solve an initial value problem");
  odesolve->add_option("problem", ode.problem, "Problem file, builtin name or -")->required();
  odesolve->add_option("--q", ode.q, "Prior smoothness (integrated Wiener process order)")
      ->check(CLI::Range(1, 5))
      ->capture_default_str();
  odesolve->add_option("--method", ode.method, "ek0, ek1 or perturbed")
      ->check(CLI::IsMember({"ek0", "ek1", "perturbed"}))
      ->capture_default_str();
  odesolve->add_option("--rtol", ode.rtol, "Relative tolerance of the step-size controller")->capture_default_str();
  odesolve->add_option("--atol", ode.atol, "Absolute tolerance of the step-size controller")->capture_default_str();
  odesolve->add_option("--grid", ode.grid, "Fixed step size (perturbed: nominal step, default span/100)");
  odesolve->add_option("--seed", ode.seed, "Seed for the perturbed ensemble")->capture_default_str();
  odesolve->add_option("--eval", ode.eval, "Comma-separated evaluation times (default: solver grid)")->delimiter(',');
  odesolve->add_option("--rk", ode.rk, "Base method of the perturbed solver")
      ->check(CLI::IsMember({"euler", "rk4"}))
      ->capture_default_str();
  odesolve->add_option("--scale", ode.scale, "Perturbation scale of the perturbed solver")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  odesolve->add_option("--ensemble", ode.ensemble, "Ensemble size of the perturbed solver")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  odesolve->add_option("--out", out_path, "Write the report here instead of stdout");

  QuadOptions qo;
  auto* quad = app.add_subcommand("quad", "Bayesian quadrature / Bayesian Monte Carlo");
  quad->add_option("problem", qo.problem, "Problem file, builtin name or -")->required();
  auto* n_nodes = quad->add_option("--n-nodes", qo.n_nodes, "Sample this many nodes from the measure");
  auto* nodes_file = quad->add_option("--nodes-file", qo.nodes_file, "JSON array of node rows");
  n_nodes->excludes(nodes_file);
  quad->add_option("--seed", qo.seed, "Seed for node sampling");
  quad->add_flag("--optimize-lengthscale", qo.optimize_lengthscale,
                 "Fit an isotropic lengthscale by marginal likelihood first");
  quad->add_option("--out", out_path, "Write the report here instead of stdout");

  BenchOptions bo;
  auto* bench = app.add_subcommand("bench", "Run a benchmark suite with tolerance gates");
  bench->add_option("suite", bo.suite, "Suite name (smoke)")->required();
  bench->add_option("--out", bo.out_dir, "Directory for per-row reports and summary.csv")->required();
  bench->add_option("--gates", bo.gates_file, "JSON object overriding row tolerances");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kUsage;
  }

  const std::vector<std::string> args(argv, argv + argc);
  const auto start = std::chrono::steady_clock::now();
  try {
    Outcome outcome;
    if (*linsolve) {
      outcome = run_linsolve(lin);
    } else if (*odesolve) {
      outcome = run_odesolve(ode);
    } else if (*quad) {
      outcome = run_quad(qo);
    } else {
      outcome = run_bench(bo, std::cerr);
    }
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return emit(outcome, args, wall, *bench ? std::string() : out_path);
  } catch (const UsageError& e) {
    std::cerr << "pn: usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "pn: error: " << e.what() << '\n';
    return kFailure;
  }
}
