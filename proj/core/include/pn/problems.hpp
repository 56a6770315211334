#pragma once

#include "pn/diffeq.hpp"
#include "pn/linalg.hpp"
#include "pn/quad.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace pn::problems {

using json = nlohmann::json;
using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

inline constexpr int kSchemaVersion = 1;

enum class ProblemKind { linear_system, ivp, quad };
std::string to_string(ProblemKind kind);
ProblemKind parse_kind(const std::string& name);

// Known solution. For an IVP, values[k] is y(times[k]); for a linear system
// values holds the single solution vector; for quadrature the single
// integral value. provenance is "analytic" or "oracle:<name>".
struct ReferenceSolution {
  std::vector<double> times;
  std::vector<std::vector<double>> values;
  std::string provenance;

  bool operator==(const ReferenceSolution&) const = default;
};

struct ProblemSpec {
  ProblemKind kind = ProblemKind::linear_system;
  std::string name;
  json parameters = json::object();
  std::optional<ReferenceSolution> reference;

  bool operator==(const ProblemSpec&) const = default;
};

// Strict conversion: unknown fields, a wrong schema_version or invalid
// parameters raise ParseError naming the offending field.
json to_json(const ProblemSpec& spec);
ProblemSpec from_json(const json& j);

ProblemSpec load(std::istream& in, const std::string& source = "<stream>");
ProblemSpec load(const std::string& path);
void save(const ProblemSpec& spec, std::ostream& out);
void save(const ProblemSpec& spec, const std::string& path);

struct RandomSystem {
  Matrix A;
  Vector b;
  Vector x_star;
};

// A = U^T D U with Haar-distributed U and eigenvalues log-uniformly spaced
// on [1, condition]; b = A x* with x* ~ N(0, I).
RandomSystem random_spd_system(Index n, double condition, std::uint64_t seed);
ProblemSpec random_spd_spec(Index n, double condition, std::uint64_t seed);

std::vector<std::string> builtin_names();
ProblemSpec builtin(const std::string& name);

// Materialization. Each throws ArgumentError if spec.kind does not match.
linalg::LinearSystem make_linear_system(const ProblemSpec& spec);
Matrix linear_system_matrix(const ProblemSpec& spec);
diffeq::IVP make_ivp(const ProblemSpec& spec);
quad::QuadProblem make_quad(const ProblemSpec& spec);

// Optional node and kernel settings carried by a quadrature spec.
struct QuadSettings {
  std::optional<Matrix> nodes;
  std::optional<Index> n_nodes;
  std::optional<std::uint64_t> seed;
  std::optional<quad::SquaredExpKernel> kernel;
};
QuadSettings quad_settings(const ProblemSpec& spec);

}  // namespace pn::problems
