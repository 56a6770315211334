#pragma once

#include "pn/problems.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace pn::cli {

using json = nlohmann::json;

inline constexpr int kSchemaVersion = 1;

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kNotConverged = 2,
  kGateFailure = 3,
  kUsage = 64,
};

// Bad flag combinations found after parsing (exit 64).
class UsageError : public std::runtime_error {
 public:
  explicit UsageError(const std::string& what) : std::runtime_error(what) {}
};

struct Outcome {
  json report;
  int exit_code = kOk;
  std::uint64_t seed = 0;  // effective seed
  std::string message;  // for stderr when exit_code != 0
};

// A builtin name, "random_spd:n=..,seed=..,condition=..", "-" for stdin,
// or a path to a problem JSON file.
problems::ProblemSpec resolve_problem(const std::string& ref);

struct LinsolveOptions {
  std::string problem;
  double rtol = 1e-8;
  double atol = 1e-10;
  std::optional<int> maxiter;
  std::uint64_t seed = 0;
};

struct OdesolveOptions {
  std::string problem;
  int q = 2;
  std::string method = "ek1";  // ek0 | ek1 | perturbed
  double rtol = 1e-6;
  double atol = 1e-8;
  std::optional<double> grid;  // fixed step (filters) or nominal step (perturbed)
  std::uint64_t seed = 0;
  std::vector<double> eval;
  std::string rk = "rk4";
  double scale = 1.0;
  int ensemble = 50;
};

struct QuadOptions {
  std::string problem;
  std::optional<long> n_nodes;
  std::optional<std::string> nodes_file;
  std::optional<std::uint64_t> seed;  // falls back to the problem's seed, then 0
  bool optimize_lengthscale = false;
};

// Each command fills report fields result/diagnostics; the caller adds the
// envelope (command echo, seed, wall time).
Outcome run_linsolve(const LinsolveOptions& opt);
Outcome run_odesolve(const OdesolveOptions& opt);
Outcome run_quad(const QuadOptions& opt);

json envelope(const std::vector<std::string>& argv, double wall_time_s, const Outcome& outcome);

struct BenchOptions {
  std::string suite;
  std::string out_dir;
  std::optional<std::string> gates_file;
};

// Writes one report per row plus summary.csv into out_dir.
Outcome run_bench(const BenchOptions& opt, std::ostream& log);

}  // namespace pn::cli
