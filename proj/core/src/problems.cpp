#include "pn/problems.hpp"

#include "pn/dense.hpp"
#include "pn/errors.hpp"
#include "pn/linops.hpp"
#include "pn/serialization.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

namespace pn::problems {

namespace {

using serialization::check_fields;
using serialization::read_matrix;
using serialization::read_number;
using serialization::read_vector;

const json& require(const json& obj, const char* key, const std::string& where) {
  if (!obj.contains(key)) throw ParseError(where + ": missing field \"" + key + "\"");
  return obj.at(key);
}

std::int64_t read_int(const json& j, const std::string& where) {
  if (!j.is_number_integer()) throw ParseError(where + ": expected an integer");
  return j.get<std::int64_t>();
}

std::uint64_t read_seed(const json& j, const std::string& where) {
  if (j.is_number_unsigned()) return j.get<std::uint64_t>();
  const std::int64_t v = read_int(j, where);
  if (v < 0) throw ParseError(where + ": seed must be nonnegative");
  return static_cast<std::uint64_t>(v);
}

std::string read_string(const json& j, const std::string& where) {
  if (!j.is_string()) throw ParseError(where + ": expected a string");
  return j.get<std::string>();
}

// ---- linear systems -------------------------------------------------------

struct LinearParams {
  Matrix A;
  Vector b;
};

Matrix hilbert(Index n) {
  Matrix H(n, n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) H(i, j) = 1.0 / static_cast<double>(i + j + 1);
  }
  return H;
}

LinearParams parse_linear(const json& p) {
  const std::string where = "parameters";
  if (p.contains("generator")) {
    const std::string gen = read_string(p["generator"], where + ".generator");
    if (gen == "random_spd") {
      check_fields(p, {"generator", "n", "condition", "seed"}, where);
      const std::int64_t n = read_int(require(p, "n", where), where + ".n");
      const double cond = p.contains("condition") ? read_number(p["condition"], where + ".condition") : 10.0;
      const std::uint64_t seed = p.contains("seed") ? read_seed(p["seed"], where + ".seed") : 0;
      if (n < 1) throw ParseError(where + ".n: must be at least 1");
      if (!(cond >= 1.0)) throw ParseError(where + ".condition: must be at least 1");
      RandomSystem sys = random_spd_system(n, cond, seed);
      return {std::move(sys.A), std::move(sys.b)};
    }
    if (gen == "hilbert") {
      check_fields(p, {"generator", "n"}, where);
      const std::int64_t n = read_int(require(p, "n", where), where + ".n");
      if (n < 1) throw ParseError(where + ".n: must be at least 1");
      Matrix H = hilbert(n);
      Vector b = H * Vector::Ones(n);
      return {std::move(H), std::move(b)};
    }
    throw ParseError(where + ".generator: unknown generator \"" + gen + "\" (expected random_spd or hilbert)");
  }
  check_fields(p, {"A", "b"}, where);
  LinearParams out{read_matrix(require(p, "A", where), where + ".A"), read_vector(require(p, "b", where), where + ".b")};
  if (out.A.rows() == 0 || out.A.rows() != out.A.cols()) throw ParseError(where + ".A: must be a nonempty square matrix");
  if (out.b.size() != out.A.rows()) throw ParseError(where + ".b: length does not match A");
  return out;
}

// ---- initial value problems -------------------------------------------------

struct IVPParams {
  double t0 = 0.0;
  double tmax = 1.0;
  Vector y0;
  diffeq::VectorField f;
  diffeq::JacobianField jac;
};

IVPParams parse_ivp(const json& p) {
  const std::string where = "parameters";
  check_fields(p, {"t0", "tmax", "y0", "rhs"}, where);
  IVPParams out;
  out.t0 = read_number(require(p, "t0", where), where + ".t0");
  out.tmax = read_number(require(p, "tmax", where), where + ".tmax");
  out.y0 = read_vector(require(p, "y0", where), where + ".y0");
  if (!(out.tmax > out.t0)) throw ParseError(where + ".tmax: must exceed t0");
  if (out.y0.size() == 0) throw ParseError(where + ".y0: must be nonempty");
  const Index d = out.y0.size();

  const json& rhs = require(p, "rhs", where);
  const std::string rw = where + ".rhs";
  if (!rhs.is_object()) throw ParseError(rw + ": expected an object");
  const std::string family = read_string(require(rhs, "family", rw), rw + ".family");
  if (family == "linear") {
    check_fields(rhs, {"family", "matrix"}, rw);
    const Matrix M = read_matrix(require(rhs, "matrix", rw), rw + ".matrix");
    if (M.rows() != d || M.cols() != d) throw ParseError(rw + ".matrix: must be " + std::to_string(d) + "x" + std::to_string(d));
    out.f = [M](const Vector& y, double) -> Vector { return M * y; };
    out.jac = [M](const Vector&, double) -> Matrix { return M; };
  } else if (family == "logistic") {
    check_fields(rhs, {"family", "rate"}, rw);
    const double r = rhs.contains("rate") ? read_number(rhs["rate"], rw + ".rate") : 1.0;
    out.f = [r](const Vector& y, double) -> Vector { return (r * y.array() * (1.0 - y.array())).matrix(); };
    out.jac = [r](const Vector& y, double) -> Matrix { return (r * (1.0 - 2.0 * y.array())).matrix().asDiagonal(); };
  } else if (family == "lotka_volterra") {
    check_fields(rhs, {"family", "alpha", "beta", "gamma", "delta"}, rw);
    if (d != 2) throw ParseError(where + ".y0: lotka_volterra needs two components");
    const double a = read_number(require(rhs, "alpha", rw), rw + ".alpha");
    const double b = read_number(require(rhs, "beta", rw), rw + ".beta");
    const double c = read_number(require(rhs, "gamma", rw), rw + ".gamma");
    const double dd = read_number(require(rhs, "delta", rw), rw + ".delta");
    out.f = [=](const Vector& y, double) -> Vector {
      Vector v(2);
      v << a * y[0] - b * y[0] * y[1], -c * y[1] + dd * y[0] * y[1];
      return v;
    };
    out.jac = [=](const Vector& y, double) -> Matrix {
      Matrix J(2, 2);
      J << a - b * y[1], -b * y[0], dd * y[1], -c + dd * y[0];
      return J;
    };
  } else {
    throw ParseError(rw + ".family: unknown family \"" + family + "\" (expected linear, logistic or lotka_volterra)");
  }
  return out;
}

// ---- quadrature -------------------------------------------------------------

struct QuadParams {
  quad::QuadProblem problem;
  QuadSettings settings;
};

quad::Measure parse_measure(const json& m, Index d, const std::string& where) {
  if (!m.is_object()) throw ParseError(where + ": expected an object");
  const std::string type = read_string(require(m, "type", where), where + ".type");
  quad::Measure out;
  if (type == "gaussian") {
    check_fields(m, {"type", "mean", "var"}, where);
    out = quad::GaussianMeasure{read_vector(require(m, "mean", where), where + ".mean"),
                                read_vector(require(m, "var", where), where + ".var")};
  } else if (type == "lebesgue") {
    check_fields(m, {"type", "lower", "upper", "normalize"}, where);
    bool normalize = false;
    if (m.contains("normalize")) {
      if (!m["normalize"].is_boolean()) throw ParseError(where + ".normalize: expected a boolean");
      normalize = m["normalize"].get<bool>();
    }
    out = quad::LebesgueBox{read_vector(require(m, "lower", where), where + ".lower"),
                            read_vector(require(m, "upper", where), where + ".upper"), normalize};
  } else {
    throw ParseError(where + ".type: unknown measure \"" + type + "\" (expected gaussian or lebesgue)");
  }
  try {
    quad::validate(out);
  } catch (const ArgumentError& e) {
    throw ParseError(where + ": " + e.what());
  } catch (const std::invalid_argument& e) {
    throw ParseError(where + ": " + e.what());
  }
  if (quad::dim(out) != d) throw ParseError(where + ": dimension does not match dim");
  return out;
}

quad::Integrand parse_integrand(const json& g, Index d, const std::string& where) {
  if (!g.is_object()) throw ParseError(where + ": expected an object");
  const std::string family = read_string(require(g, "family", where), where + ".family");
  if (family == "constant") {
    check_fields(g, {"family", "value"}, where);
    const double v = read_number(require(g, "value", where), where + ".value");
    return [v](const Vector&) { return v; };
  }
  if (family == "monomial") {
    check_fields(g, {"family", "powers", "coefficient"}, where);
    const json& pj = require(g, "powers", where);
    if (!pj.is_array() || static_cast<Index>(pj.size()) != d) throw ParseError(where + ".powers: need one power per dimension");
    std::vector<int> powers;
    for (std::size_t i = 0; i < pj.size(); ++i) {
      const std::int64_t k = read_int(pj[i], where + ".powers[" + std::to_string(i) + "]");
      if (k < 0 || k > 64) throw ParseError(where + ".powers[" + std::to_string(i) + "]: must be in [0, 64]");
      powers.push_back(static_cast<int>(k));
    }
    const double coef = g.contains("coefficient") ? read_number(g["coefficient"], where + ".coefficient") : 1.0;
    return [powers, coef](const Vector& x) {
      double v = coef;
      for (std::size_t i = 0; i < powers.size(); ++i) v *= std::pow(x[static_cast<Index>(i)], powers[i]);
      return v;
    };
  }
  if (family == "genz_oscillatory") {
    check_fields(g, {"family", "u", "a"}, where);
    const double u = read_number(require(g, "u", where), where + ".u");
    const Vector a = read_vector(require(g, "a", where), where + ".a");
    if (a.size() != d) throw ParseError(where + ".a: need one coefficient per dimension");
    return [u, a](const Vector& x) { return std::cos(2.0 * std::numbers::pi * u + a.dot(x)); };
  }
  throw ParseError(where + ".family: unknown family \"" + family + "\" (expected constant, monomial or genz_oscillatory)");
}

QuadParams parse_quad(const json& p) {
  const std::string where = "parameters";
  check_fields(p, {"dim", "measure", "integrand", "nodes", "n_nodes", "seed", "kernel"}, where);
  const std::int64_t d = read_int(require(p, "dim", where), where + ".dim");
  if (d < 1) throw ParseError(where + ".dim: must be at least 1");
  QuadParams out;
  out.problem.measure = parse_measure(require(p, "measure", where), d, where + ".measure");
  out.problem.f = parse_integrand(require(p, "integrand", where), d, where + ".integrand");
  if (p.contains("nodes")) {
    Matrix X = read_matrix(p["nodes"], where + ".nodes");
    if (X.rows() > 0 && X.cols() != d) throw ParseError(where + ".nodes: each node needs dim coordinates");
    if (X.rows() == 0) X.resize(0, d);
    out.settings.nodes = std::move(X);
  }
  if (p.contains("n_nodes")) {
    const std::int64_t n = read_int(p["n_nodes"], where + ".n_nodes");
    if (n < 0) throw ParseError(where + ".n_nodes: must be nonnegative");
    out.settings.n_nodes = n;
  }
  if (out.settings.nodes && out.settings.n_nodes) throw ParseError(where + ": nodes and n_nodes are mutually exclusive");
  if (p.contains("seed")) out.settings.seed = read_seed(p["seed"], where + ".seed");
  if (p.contains("kernel")) {
    const json& k = p["kernel"];
    const std::string kw = where + ".kernel";
    check_fields(k, {"lengthscales", "output_scale"}, kw);
    quad::SquaredExpKernel kernel{read_vector(require(k, "lengthscales", kw), kw + ".lengthscales"),
                                  k.contains("output_scale") ? read_number(k["output_scale"], kw + ".output_scale") : 1.0};
    if (kernel.lengthscales.size() != d) throw ParseError(kw + ".lengthscales: need one per dimension");
    try {
      kernel.validate();
    } catch (const ArgumentError& e) {
      throw ParseError(kw + ": " + e.what());
    }
    out.settings.kernel = kernel;
  }
  return out;
}

void validate_parameters(ProblemKind kind, const json& p) {
  if (!p.is_object()) throw ParseError("parameters: expected an object");
  switch (kind) {
    case ProblemKind::linear_system:
      parse_linear(p);
      break;
    case ProblemKind::ivp:
      parse_ivp(p);
      break;
    case ProblemKind::quad:
      parse_quad(p);
      break;
  }
}

void expect_kind(const ProblemSpec& spec, ProblemKind kind) {
  if (spec.kind != kind) {
    throw ArgumentError("problem \"" + spec.name + "\" is a " + to_string(spec.kind) + " problem, expected " +
                        to_string(kind));
  }
}

std::vector<double> to_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }

ReferenceSolution sampled_reference(double t0, double tmax, int n, const std::function<double(double)>& y) {
  ReferenceSolution ref;
  ref.provenance = "analytic";
  for (int k = 0; k <= n; ++k) {
    const double t = t0 + (tmax - t0) * k / n;
    ref.times.push_back(t);
    ref.values.push_back({y(t)});
  }
  return ref;
}

ProblemSpec lotka_volterra_spec() {
  ProblemSpec spec;
  spec.kind = ProblemKind::ivp;
  spec.name = "lotka_volterra";
  spec.parameters = {{"t0", 0.0},
                     {"tmax", 20.0},
                     {"y0", {20.0, 20.0}},
                     {"rhs", {{"family", "lotka_volterra"}, {"alpha", 0.5}, {"beta", 0.05}, {"gamma", 0.5}, {"delta", 0.05}}}};
  static const ReferenceSolution ref = [&] {
    const diffeq::IVP ivp = make_ivp(spec);
    const double h = 1e-4;
    const Matrix traj = diffeq::rk_solve(ivp, diffeq::RKMethod::RK4, h);
    ReferenceSolution r;
    r.provenance = "oracle:rk-tight";
    for (int t = 0; t <= 20; ++t) {
      r.times.push_back(static_cast<double>(t));
      r.values.push_back(to_std(traj.row(static_cast<Index>(t) * 10000).transpose()));
    }
    return r;
  }();
  spec.reference = ref;
  return spec;
}

}  // namespace

std::string to_string(ProblemKind kind) {
  switch (kind) {
    case ProblemKind::linear_system:
      return "linear_system";
    case ProblemKind::ivp:
      return "ivp";
    case ProblemKind::quad:
      return "quad";
  }
  return "unknown";
}

ProblemKind parse_kind(const std::string& name) {
  if (name == "linear_system") return ProblemKind::linear_system;
  if (name == "ivp") return ProblemKind::ivp;
  if (name == "quad") return ProblemKind::quad;
  throw ParseError("kind: unknown problem kind \"" + name + "\" (expected linear_system, ivp or quad)");
}

json to_json(const ProblemSpec& spec) {
  json out = {{"schema_version", kSchemaVersion},
              {"kind", to_string(spec.kind)},
              {"name", spec.name},
              {"parameters", spec.parameters}};
  if (spec.reference) {
    json ref = {{"values", spec.reference->values}, {"provenance", spec.reference->provenance}};
    if (!spec.reference->times.empty()) ref["times"] = spec.reference->times;
    out["reference_solution"] = std::move(ref);
  }
  return out;
}

ProblemSpec from_json(const json& j) {
  check_fields(j, {"schema_version", "kind", "name", "parameters", "reference_solution"}, "problem");
  const std::int64_t version = read_int(require(j, "schema_version", "problem"), "schema_version");
  if (version != kSchemaVersion) {
    throw ParseError("schema_version: unsupported version " + std::to_string(version) + " (expected " +
                     std::to_string(kSchemaVersion) + ")");
  }
  ProblemSpec spec;
  spec.kind = parse_kind(read_string(require(j, "kind", "problem"), "kind"));
  spec.name = j.contains("name") ? read_string(j["name"], "name") : std::string();
  spec.parameters = require(j, "parameters", "problem");
  validate_parameters(spec.kind, spec.parameters);
  if (j.contains("reference_solution")) {
    const json& r = j["reference_solution"];
    check_fields(r, {"times", "values", "provenance"}, "reference_solution");
    ReferenceSolution ref;
    ref.provenance = read_string(require(r, "provenance", "reference_solution"), "reference_solution.provenance");
    if (ref.provenance != "analytic" && ref.provenance.rfind("oracle:", 0) != 0) {
      throw ParseError("reference_solution.provenance: must be \"analytic\" or \"oracle:<name>\"");
    }
    const json& values = require(r, "values", "reference_solution");
    if (!values.is_array()) throw ParseError("reference_solution.values: expected an array of arrays");
    for (std::size_t i = 0; i < values.size(); ++i) {
      ref.values.push_back(to_std(read_vector(values[i], "reference_solution.values[" + std::to_string(i) + "]")));
    }
    if (r.contains("times")) {
      ref.times = to_std(read_vector(r["times"], "reference_solution.times"));
      if (ref.times.size() != ref.values.size()) throw ParseError("reference_solution.times: length does not match values");
    }
    spec.reference = std::move(ref);
  }
  return spec;
}

ProblemSpec load(std::istream& in, const std::string& source) {
  std::ostringstream buf;
  buf << in.rdbuf();
  const json j = serialization::parse(buf.str(), source);
  try {
    return from_json(j);
  } catch (const ParseError& e) {
    throw ParseError(source + ": " + e.what());
  }
}

ProblemSpec load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ResourceError("cannot open problem file: " + path);
  return load(in, path);
}

void save(const ProblemSpec& spec, std::ostream& out) { out << to_json(spec).dump(2) << '\n'; }

void save(const ProblemSpec& spec, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ResourceError("cannot write problem file: " + path);
  save(spec, out);
  if (!out) throw ResourceError("failed writing problem file: " + path);
}

RandomSystem random_spd_system(Index n, double condition, std::uint64_t seed) {
  if (n < 1) throw ArgumentError("random_spd_system: n must be at least 1");
  if (!(condition >= 1.0) || !std::isfinite(condition)) throw ArgumentError("random_spd_system: condition must be >= 1");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix G(n, n);
  for (Index j = 0; j < n; ++j) {
    for (Index i = 0; i < n; ++i) G(i, j) = normal(rng);
  }
  Eigen::HouseholderQR<Matrix> qr(G);
  Matrix U = qr.householderQ();
  const Vector signs = qr.matrixQR().diagonal().array().sign();
  for (Index j = 0; j < n; ++j) U.col(j) *= signs[j] == 0.0 ? 1.0 : signs[j];
  Vector eig(n);
  for (Index i = 0; i < n; ++i) eig[i] = n == 1 ? 1.0 : std::pow(condition, static_cast<double>(i) / static_cast<double>(n - 1));
  RandomSystem out;
  out.A = dense::symmetrize(U.transpose() * eig.asDiagonal() * U);
  out.x_star.resize(n);
  for (Index i = 0; i < n; ++i) out.x_star[i] = normal(rng);
  out.b = out.A * out.x_star;
  return out;
}

ProblemSpec random_spd_spec(Index n, double condition, std::uint64_t seed) {
  const RandomSystem sys = random_spd_system(n, condition, seed);
  ProblemSpec spec;
  spec.kind = ProblemKind::linear_system;
  spec.name = "random_spd";
  spec.parameters = {{"generator", "random_spd"}, {"n", n}, {"condition", condition}, {"seed", seed}};
  spec.reference = ReferenceSolution{{}, {to_std(sys.x_star)}, "analytic"};
  return spec;
}

std::vector<std::string> builtin_names() {
  return {"hilbert10", "logistic", "lotka_volterra", "linear_decay", "genz_oscillatory_1d", "gauss_x2"};
}

ProblemSpec builtin(const std::string& name) {
  ProblemSpec spec;
  spec.name = name;
  if (name == "hilbert10") {
    spec.kind = ProblemKind::linear_system;
    spec.parameters = {{"generator", "hilbert"}, {"n", 10}};
    spec.reference = ReferenceSolution{{}, {std::vector<double>(10, 1.0)}, "analytic"};
  } else if (name == "logistic") {
    spec.kind = ProblemKind::ivp;
    spec.parameters = {{"t0", 0.0}, {"tmax", 4.0}, {"y0", {0.5}}, {"rhs", {{"family", "logistic"}, {"rate", 1.0}}}};
    spec.reference = sampled_reference(0.0, 4.0, 40, [](double t) { return 1.0 / (1.0 + std::exp(-t)); });
  } else if (name == "lotka_volterra") {
    return lotka_volterra_spec();
  } else if (name == "linear_decay") {
    spec.kind = ProblemKind::ivp;
    spec.parameters = {{"t0", 0.0}, {"tmax", 1.0}, {"y0", {1.0}}, {"rhs", {{"family", "linear"}, {"matrix", {{-1.0}}}}}};
    spec.reference = sampled_reference(0.0, 1.0, 10, [](double t) { return std::exp(-t); });
  } else if (name == "genz_oscillatory_1d") {
    const double u = 0.3;
    const double a = 5.0;
    const double phase = 2.0 * std::numbers::pi * u;
    spec.kind = ProblemKind::quad;
    spec.parameters = {{"dim", 1},
                       {"measure", {{"type", "lebesgue"}, {"lower", {0.0}}, {"upper", {1.0}}, {"normalize", false}}},
                       {"integrand", {{"family", "genz_oscillatory"}, {"u", u}, {"a", {a}}}},
                       {"kernel", {{"lengthscales", {0.2}}, {"output_scale", 1.0}}}};
    spec.reference = ReferenceSolution{{}, {{(std::sin(phase + a) - std::sin(phase)) / a}}, "analytic"};
  } else if (name == "gauss_x2") {
    spec.kind = ProblemKind::quad;
    spec.parameters = {{"dim", 1},
                       {"measure", {{"type", "gaussian"}, {"mean", {0.0}}, {"var", {1.0}}}},
                       {"integrand", {{"family", "monomial"}, {"powers", {2}}}},
                       {"kernel", {{"lengthscales", {1.0}}, {"output_scale", 1.0}}}};
    spec.reference = ReferenceSolution{{}, {{1.0}}, "analytic"};
  } else {
    std::string names;
    for (const std::string& n : builtin_names()) names += (names.empty() ? "" : ", ") + n;
    throw ArgumentError("unknown builtin problem \"" + name + "\" (available: " + names + ")");
  }
  return spec;
}

Matrix linear_system_matrix(const ProblemSpec& spec) {
  expect_kind(spec, ProblemKind::linear_system);
  return parse_linear(spec.parameters).A;
}

linalg::LinearSystem make_linear_system(const ProblemSpec& spec) {
  expect_kind(spec, ProblemKind::linear_system);
  LinearParams p = parse_linear(spec.parameters);
  return linalg::LinearSystem(linops::dense(std::move(p.A)), std::move(p.b));
}

diffeq::IVP make_ivp(const ProblemSpec& spec) {
  expect_kind(spec, ProblemKind::ivp);
  IVPParams p = parse_ivp(spec.parameters);
  return diffeq::IVP(std::move(p.f), p.t0, p.tmax, std::move(p.y0), std::move(p.jac));
}

quad::QuadProblem make_quad(const ProblemSpec& spec) {
  expect_kind(spec, ProblemKind::quad);
  return parse_quad(spec.parameters).problem;
}

QuadSettings quad_settings(const ProblemSpec& spec) {
  expect_kind(spec, ProblemKind::quad);
  return parse_quad(spec.parameters).settings;
}

}  // namespace pn::problems
