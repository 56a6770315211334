#include "commands.hpp"

#include "pn/diffeq.hpp"
#include "pn/errors.hpp"
#include "pn/linalg.hpp"
#include "pn/quad.hpp"
#include "pn/serialization.hpp"

#include <cmath>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

namespace pn::cli {

namespace {

using serialization::to_json;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

problems::ProblemSpec random_spd_from_ref(const std::string& ref) {
  long n = 10;
  double condition = 100.0;
  std::uint64_t seed = 0;
  const auto colon = ref.find(':');
  if (colon != std::string::npos) {
    std::istringstream items(ref.substr(colon + 1));
    std::string item;
    while (std::getline(items, item, ',')) {
      if (item.empty()) continue;
      const auto eq = item.find('=');
      if (eq == std::string::npos) throw ArgumentError("random_spd: expected key=value, got \"" + item + "\"");
      const std::string key = item.substr(0, eq);
      const std::string value = item.substr(eq + 1);
      try {
        if (key == "n") {
          n = std::stol(value);
        } else if (key == "seed") {
          seed = std::stoull(value);
        } else if (key == "condition") {
          condition = std::stod(value);
        } else {
          throw ArgumentError("random_spd: unknown key \"" + key + "\" (known: n, seed, condition)");
        }
      } catch (const std::logic_error& e) {
        if (dynamic_cast<const ArgumentError*>(&e)) throw;
        throw ArgumentError("random_spd: bad value for " + key + ": \"" + value + "\"");
      }
    }
  }
  return problems::random_spd_spec(n, condition, seed);
}

json vec_json(const Vector& v) { return to_json(v); }

// Mean and sample std (divisor M - 1) of the given rows, shifted by the first.
std::pair<Vector, Vector> ensemble_stats(const std::vector<Vector>& xs) {
  const Vector& ref = xs.front();
  Vector mean = Vector::Zero(ref.size());
  for (const Vector& x : xs) mean += x - ref;
  mean /= static_cast<double>(xs.size());
  Vector var = Vector::Zero(ref.size());
  for (const Vector& x : xs) var += (x - ref - mean).cwiseAbs2();
  Vector sd = xs.size() > 1 ? Vector((var / static_cast<double>(xs.size() - 1)).cwiseSqrt()) : Vector::Zero(ref.size());
  return {mean + ref, sd};
}

// Member state at t by linear interpolation between grid nodes.
Vector member_at(const diffeq::PerturbedSolution& sol, const Matrix& member, double t) {
  const auto& g = sol.grid;
  if (t < g.front() || t > g.back()) {
    std::ostringstream msg;
    msg << "evaluation time " << t << " outside [" << g.front() << ", " << g.back() << "]";
    throw ArgumentError(msg.str());
  }
  auto it = std::lower_bound(g.begin(), g.end(), t);
  const auto k = static_cast<Eigen::Index>(it - g.begin());
  if (*it == t) return member.row(k).transpose();
  const double w = (t - g[static_cast<std::size_t>(k - 1)]) / (*it - g[static_cast<std::size_t>(k - 1)]);
  return ((1.0 - w) * member.row(k - 1) + w * member.row(k)).transpose();
}

std::optional<std::size_t> node_index(const std::vector<double>& grid, double t) {
  auto it = std::lower_bound(grid.begin(), grid.end(), t);
  if (it != grid.end() && *it == t) return static_cast<std::size_t>(it - grid.begin());
  return std::nullopt;
}

std::pair<Vector, Vector> perturbed_at(const diffeq::PerturbedSolution& sol, double t) {
  if (const auto k = node_index(sol.grid, t)) return {sol.mean(*k), sol.std(*k)};
  std::vector<Vector> xs;
  xs.reserve(sol.members.size());
  for (const Matrix& m : sol.members) xs.push_back(member_at(sol, m, t));
  return ensemble_stats(xs);
}

Matrix read_nodes_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ResourceError("cannot open nodes file: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return serialization::read_matrix(serialization::parse(buf.str(), path), "nodes");
}

json kernel_json(const quad::SquaredExpKernel& k) {
  return {{"lengthscales", vec_json(k.lengthscales)}, {"output_scale", k.output_scale}};
}

}  // namespace

problems::ProblemSpec resolve_problem(const std::string& ref) {
  if (ref.empty()) throw UsageError("empty problem reference");
  if (ref == "-") return problems::load(std::cin, "<stdin>");
  const auto names = problems::builtin_names();
  if (std::find(names.begin(), names.end(), ref) != names.end()) return problems::builtin(ref);
  if (ref == "random_spd" || ref.rfind("random_spd:", 0) == 0) return random_spd_from_ref(ref);
  return problems::load(ref);
}

Outcome run_linsolve(const LinsolveOptions& opt) {
  const problems::ProblemSpec spec = resolve_problem(opt.problem);
  const linalg::LinearSystem system = problems::make_linear_system(spec);
  linalg::SolveOptions so;
  so.stopping.rtol = opt.rtol;
  so.stopping.atol = opt.atol;
  so.stopping.maxiter = opt.maxiter;
  const linalg::SolutionBelief sol = linalg::problinsolve(system, std::nullopt, std::nullopt, so);

  Outcome out;
  out.seed = opt.seed;
  out.report["result"] = {{"problem", spec.name}, {"x", to_json(sol.x)}};
  json diag = {{"iterations", sol.iterations},
               {"stopping_reason", linalg::to_string(sol.stopping_reason)},
               {"residual_norms", sol.residual_norms},
               {"relative_residual", sol.residual_norms.back() / std::max(system.b().norm(), 1e-300)}};
  if (spec.reference && spec.reference->values.size() == 1 &&
      static_cast<Eigen::Index>(spec.reference->values[0].size()) == system.dim()) {
    const Vector ref = Eigen::Map<const Vector>(spec.reference->values[0].data(), system.dim());
    diag["reference_max_error"] = (sol.x.mean() - ref).cwiseAbs().maxCoeff();
    diag["reference_rel_error"] = (sol.x.mean() - ref).norm() / std::max(ref.norm(), 1e-300);
    diag["reference_provenance"] = spec.reference->provenance;
  }
  out.report["diagnostics"] = diag;
  if (sol.stopping_reason == linalg::StoppingReason::maxiter) {
    out.exit_code = kNotConverged;
    out.message = "not converged: stopped at maxiter after " + std::to_string(sol.iterations) + " iterations";
  }
  return out;
}

Outcome run_odesolve(const OdesolveOptions& opt) {
  const problems::ProblemSpec spec = resolve_problem(opt.problem);
  const diffeq::IVP ivp = problems::make_ivp(spec);
  const double span = ivp.tmax() - ivp.t0();
  if (opt.grid && !(*opt.grid > 0.0)) throw UsageError("--grid must be positive");
  std::vector<double> ref_times;
  std::vector<Vector> ref_values;
  if (spec.reference) {
    for (std::size_t k = 0; k < spec.reference->times.size(); ++k) {
      ref_times.push_back(spec.reference->times[k]);
      const auto& v = spec.reference->values[k];
      ref_values.emplace_back(Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size())));
    }
  }

  Outcome out;
  out.seed = opt.seed;
  json evals = json::array();
  json diag;
  if (opt.method == "ek0" || opt.method == "ek1") {
    diffeq::SolveConfig cfg;
    cfg.q = opt.q;
    cfg.mode = opt.method == "ek0" ? diffeq::Linearization::EK0 : diffeq::Linearization::EK1;
    cfg.rtol = opt.rtol;
    cfg.atol = opt.atol;
    if (opt.grid) cfg.grid = diffeq::uniform_grid(ivp.t0(), ivp.tmax(), *opt.grid);
    const diffeq::ODEPosterior post = diffeq::solve_ivp(ivp, cfg);
    const std::vector<double>& times = opt.eval.empty() ? post.grid() : opt.eval;
    for (double t : times) {
      json e = to_json(post.solution_at(t));
      e["t"] = t;
      evals.push_back(e);
    }
    json log = json::array();
    for (const auto& s : post.step_log()) {
      log.push_back({{"t", s.t}, {"h", s.h}, {"accepted", s.accepted}, {"error_norm", s.error_norm}});
    }
    diag = {{"method", opt.method},
            {"q", opt.q},
            {"diffusion", post.diffusion()},
            {"accepted_steps", post.accepted_steps()},
            {"rejected_steps", post.rejected_steps()},
            {"step_log", log},
            {"warnings", post.warnings()}};
    if (!ref_times.empty()) {
      double max_err = 0.0;
      std::size_t covered = 0;
      for (std::size_t k = 0; k < ref_times.size(); ++k) {
        const auto b = post.solution_at(ref_times[k]);
        const Vector err = (b.mean() - ref_values[k]).cwiseAbs();
        max_err = std::max(max_err, err.maxCoeff());
        if ((err.array() <= 3.0 * b.std().array()).all()) ++covered;
      }
      diag["reference_max_error"] = max_err;
      diag["reference_coverage_3std"] = static_cast<double>(covered) / static_cast<double>(ref_times.size());
      diag["reference_provenance"] = spec.reference->provenance;
    }
  } else if (opt.method == "perturbed") {
    diffeq::RKMethod rk;
    if (opt.rk == "rk4") {
      rk = diffeq::RKMethod::RK4;
    } else if (opt.rk == "euler") {
      rk = diffeq::RKMethod::Euler;
    } else {
      throw UsageError("--rk must be euler or rk4");
    }
    if (opt.ensemble < 1) throw UsageError("--ensemble must be at least 1");
    const double h = opt.grid.value_or(span / 100.0);
    const diffeq::PerturbedSolution sol = diffeq::perturbed_solve(ivp, rk, h, opt.scale, opt.ensemble, opt.seed);
    const std::vector<double>& times = opt.eval.empty() ? sol.grid : opt.eval;
    for (double t : times) {
      const auto [mean, sd] = perturbed_at(sol, t);
      evals.push_back({{"t", t}, {"type", "ensemble"}, {"mean", vec_json(mean)}, {"std", vec_json(sd)}});
    }
    const auto members = static_cast<double>(sol.members.size());
    diag = {{"method", "perturbed"},
            {"rk", diffeq::to_string(rk)},
            {"order", sol.order},
            {"step", h},
            {"scale", sol.scale},
            {"ensemble_size", sol.members.size()},
            {"excluded_members", sol.excluded},
            {"steps", sol.grid.size() - 1}};
    if (!ref_times.empty()) {
      double max_err = 0.0;
      double max_se_ratio = 0.0;
      for (std::size_t k = 0; k < ref_times.size(); ++k) {
        const auto [mean, sd] = perturbed_at(sol, ref_times[k]);
        const Vector err = (mean - ref_values[k]).cwiseAbs();
        max_err = std::max(max_err, err.maxCoeff());
        for (Eigen::Index i = 0; i < err.size(); ++i) {
          const double se = sd[i] / std::sqrt(members);
          if (err[i] > 0.0) max_se_ratio = std::max(max_se_ratio, se > 0.0 ? err[i] / se : INFINITY);
        }
      }
      diag["reference_max_error"] = max_err;
      diag["reference_max_error_over_se"] = max_se_ratio;
      diag["reference_provenance"] = spec.reference->provenance;
    }
  } else {
    throw UsageError("--method must be ek0, ek1 or perturbed");
  }
  out.report["result"] = {{"problem", spec.name}, {"evaluations", evals}};
  out.report["diagnostics"] = diag;
  return out;
}

Outcome run_quad(const QuadOptions& opt) {
  if (opt.n_nodes && opt.nodes_file) throw UsageError("--n-nodes and --nodes-file are mutually exclusive");
  const problems::ProblemSpec spec = resolve_problem(opt.problem);
  const quad::QuadProblem prob = problems::make_quad(spec);
  const problems::QuadSettings qs = problems::quad_settings(spec);
  const Eigen::Index d = prob.dim();

  Outcome out;
  out.seed = opt.seed.value_or(qs.seed.value_or(0));
  quad::SquaredExpKernel kernel = qs.kernel.value_or(quad::SquaredExpKernel::isotropic(d, 1.0, 1.0));

  std::string source;
  Matrix nodes;
  if (opt.nodes_file) {
    nodes = read_nodes_file(*opt.nodes_file);
    source = "file";
  } else if (opt.n_nodes || (!qs.nodes && qs.n_nodes)) {
    const long n = opt.n_nodes ? *opt.n_nodes : static_cast<long>(*qs.n_nodes);
    if (n < 0) throw UsageError("--n-nodes must be nonnegative");
    std::mt19937_64 rng(out.seed);
    nodes = quad::sample_nodes(prob.measure, n, rng);
    source = "sampled";
  } else if (qs.nodes) {
    nodes = *qs.nodes;
    source = "problem";
  } else {
    throw UsageError("exactly one of --n-nodes / --nodes-file is required (the problem supplies neither)");
  }
  if (nodes.rows() > 0 && nodes.cols() != d) detail::throw_dimension_mismatch("quad nodes (columns)", d, nodes.cols());
  if (nodes.rows() == 0) nodes.resize(0, d);

  Vector values(nodes.rows());
  for (Eigen::Index i = 0; i < nodes.rows(); ++i) values[i] = prob.f(nodes.row(i).transpose());

  json diag = {{"node_source", source}};
  if (opt.optimize_lengthscale) {
    const quad::LengthscaleFit fit = quad::optimize_lengthscale(nodes, values);
    kernel = fit.kernel;
    diag["lengthscale_fit"] = {{"candidates", fit.candidates}, {"selected", fit.kernel.lengthscales[0]}};
    json ll = json::array();
    for (double v : fit.log_likelihoods) ll.push_back(std::isfinite(v) ? json(v) : json(nullptr));
    diag["lengthscale_fit"]["log_likelihoods"] = ll;
    if (fit.warning) diag["warnings"] = json::array({*fit.warning});
  }
  quad::BQState st;
  const randvars::GaussianBelief F = quad::bq_integrate(prob.measure, nodes, values, kernel, &st);
  const double mean = F.mean()[0];
  const double sd = std::sqrt(F.cov()(0, 0));
  out.report["result"] = {{"problem", spec.name},
                          {"integral", to_json(F)},
                          {"mean", mean},
                          {"std", sd},
                          {"n_nodes", nodes.rows()},
                          {"kernel", kernel_json(kernel)}};
  diag["jitter"] = st.jitter;
  diag["initial_error"] = st.c;
  if (spec.reference && !spec.reference->values.empty() && spec.reference->values[0].size() == 1) {
    const double err = std::abs(mean - spec.reference->values[0][0]);
    diag["reference_error"] = err;
    diag["reference_error_over_std"] = sd > 0.0 ? json(err / sd) : json(nullptr);
    diag["reference_provenance"] = spec.reference->provenance;
  }
  out.report["diagnostics"] = diag;
  return out;
}

json envelope(const std::vector<std::string>& argv, double wall_time_s, const Outcome& outcome) {
  json j;
  j["schema_version"] = kSchemaVersion;
  j["command"] = argv;
  j["seed"] = outcome.seed;
  j["wall_time_s"] = wall_time_s;
  j["exit_code"] = outcome.exit_code;
  j["result"] = outcome.report.value("result", json::object());
  j["diagnostics"] = outcome.report.value("diagnostics", json::object());
  return j;
}

}  // namespace pn::cli
