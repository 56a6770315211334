#include "pn/linalg.hpp"

#include "pn/dense.hpp"
#include "pn/errors.hpp"

#include <cmath>
#include <random>
#include <sstream>

namespace pn::linalg {

namespace {

class ScaledIdentityPrior final : public PriorCovariance {
 public:
  explicit ScaledIdentityPrior(double alpha) : alpha_(alpha) {
    if (!(alpha > 0.0)) throw ArgumentError("scaled_identity_prior: scale must be positive");
  }
  Vector times_observation(const Vector&, const Vector& y) const override { return alpha_ * y; }
  Vector A_times_observation(const LinearSystem& system, const Vector&, const Vector& y) const override {
    return alpha_ * system.A().apply(y);
  }
  Matrix dense_factor(const LinearSystem& system) const override {
    return std::sqrt(alpha_) * Matrix::Identity(system.dim(), system.dim());
  }
  double trace(const LinearSystem& system) const override { return alpha_ * static_cast<double>(system.dim()); }
  std::string name() const override { return "scaled_identity"; }

 private:
  double alpha_;
};

class ImplicitInversePrior final : public PriorCovariance {
 public:
  Vector times_observation(const Vector& s, const Vector&) const override { return s; }
  Vector A_times_observation(const LinearSystem&, const Vector&, const Vector& y) const override { return y; }
  Matrix dense_factor(const LinearSystem& system) const override {
    // A^{-1} = L^{-T} L^{-1} for A = L L^T.
    const Matrix A = dense::symmetrize(linops::to_dense(system.A()));
    Eigen::LLT<Matrix> llt(A);
    if (llt.info() != Eigen::Success) {
      throw NumericalError("implicit inverse prior: A is not numerically positive definite");
    }
    const Index n = A.rows();
    return Matrix(llt.matrixU().solve(Matrix::Identity(n, n)));
  }
  double trace(const LinearSystem& system) const override { return dense_factor(system).squaredNorm(); }
  std::string name() const override { return "implicit_inverse"; }
};

class OperatorPrior final : public PriorCovariance {
 public:
  explicit OperatorPrior(LinearOperator cov) : cov_(std::move(cov)) {
    if (!cov_.is_square()) throw ArgumentError("operator_prior: covariance operator must be square");
  }
  Vector times_observation(const Vector&, const Vector& y) const override { return cov_.apply(y); }
  Vector A_times_observation(const LinearSystem& system, const Vector&, const Vector& y) const override {
    return system.A().apply(cov_.apply(y));
  }
  Matrix dense_factor(const LinearSystem&) const override {
    return dense::robust_cholesky(dense::symmetrize(linops::to_dense(cov_))).L;
  }
  double trace(const LinearSystem&) const override { return linops::to_dense(cov_).trace(); }
  std::string name() const override { return "operator"; }

 private:
  LinearOperator cov_;
};

bool probe_symmetric(const LinearOperator& A) {
  std::mt19937_64 rng(0x5eed);
  std::normal_distribution<double> normal;
  Vector u(A.cols());
  Vector v(A.cols());
  for (int probe = 0; probe < 20; ++probe) {
    for (Index i = 0; i < u.size(); ++i) {
      u[i] = normal(rng);
      v[i] = normal(rng);
    }
    const Vector Au = A.apply(u);
    const Vector Av = A.apply(v);
    const double lhs = Au.dot(v);
    const double rhs = u.dot(Av);
    const double scale = Au.norm() * v.norm() + u.norm() * Av.norm();
    if (std::abs(lhs - rhs) > 1e-10 * scale) return false;
  }
  return true;
}

}  // namespace

LinearSystem::LinearSystem(LinearOperator A, Vector b) : A_(std::move(A)), b_(std::move(b)) {
  if (!A_.is_square()) throw ArgumentError("LinearSystem: A must be square");
  if (A_.rows() != b_.size()) detail::throw_dimension_mismatch("LinearSystem", A_.rows(), b_.size());
  if (!b_.allFinite()) throw ArgumentError("LinearSystem: b has non-finite entries");
  if (!probe_symmetric(A_)) throw ArgumentError("LinearSystem: A is not symmetric (probe test failed)");
}

std::string to_string(StoppingReason reason) {
  switch (reason) {
    case StoppingReason::residual_tol:
      return "residual_tol";
    case StoppingReason::posterior_trace_tol:
      return "posterior_trace_tol";
    case StoppingReason::maxiter:
      return "maxiter";
  }
  return "unknown";
}

std::shared_ptr<const PriorCovariance> scaled_identity_prior(double alpha) {
  return std::make_shared<ScaledIdentityPrior>(alpha);
}

std::shared_ptr<const PriorCovariance> implicit_inverse_prior() { return std::make_shared<ImplicitInversePrior>(); }

std::shared_ptr<const PriorCovariance> operator_prior(LinearOperator cov) {
  return std::make_shared<OperatorPrior>(std::move(cov));
}

Vector SolverState::cov_times_observation(const Vector& s, const Vector& y) const {
  Vector v = prior_cov->times_observation(s, y);
  for (const Vector& u : downdates) v -= u * u.dot(y);
  return v;
}

Vector SolverState::A_cov_times_observation(const Vector& s, const Vector& y) const {
  Vector v = prior_cov->A_times_observation(*system, s, y);
  for (std::size_t i = 0; i < downdates.size(); ++i) v -= A_downdates[i] * downdates[i].dot(y);
  return v;
}

std::optional<double> SolverState::posterior_trace() const {
  if (!prior_trace) return std::nullopt;
  double t = *prior_trace;
  for (const Vector& u : downdates) t -= u.squaredNorm();
  return t;
}

std::optional<Vector> ConjugatePolicy::operator()(const SolverState& state) const {
  const Vector& r = state.residual;
  if (r.squaredNorm() == 0.0) return std::nullopt;
  if (state.directions.empty()) return r;
  const Vector& s_prev = state.directions.back();
  const Vector& y_prev = state.observations.back();
  // s = r - (s_prev^T A r / s_prev^T A s_prev) s_prev, with s_prev^T A = y_prev^T.
  return Vector(r - (y_prev.dot(r) / s_prev.dot(y_prev)) * s_prev);
}

Vector MatVecInformation::operator()(const LinearSystem& system, const Vector& s) const {
  return system.A().apply(s);
}

void SolutionBeliefUpdate::operator()(SolverState& state, const Vector& s, const Vector& y) const {
  const Vector Sy = state.cov_times_observation(s, y);
  const double denom = y.dot(Sy);
  if (!(denom > 0.0)) {
    std::ostringstream msg;
    msg << "solution belief update: zero innovation variance at iteration " << state.iteration + 1
        << "; the direction was already explored (policy breakdown)";
    throw NumericalError(msg.str());
  }
  const double coef = s.dot(state.residual) / denom;
  const Vector ASy = state.A_cov_times_observation(s, y);
  state.mean += coef * Sy;
  state.residual -= coef * ASy;
  state.downdates.push_back(Sy / std::sqrt(denom));
  state.A_downdates.push_back(ASy / std::sqrt(denom));
}

std::optional<StoppingReason> stopping_check(const SolverState& state, const StoppingConfig& config) {
  const double bnorm = state.system->b().norm();
  if (state.residual.norm() <= config.atol + config.rtol * bnorm) return StoppingReason::residual_tol;
  if (config.trace_tol) {
    const auto tr = state.posterior_trace();
    if (tr && *tr <= *config.trace_tol) return StoppingReason::posterior_trace_tol;
  }
  const int maxiter = config.maxiter.value_or(10 * static_cast<int>(state.system->dim()));
  if (state.iteration >= maxiter) return StoppingReason::maxiter;
  return std::nullopt;
}

std::optional<StoppingReason> DefaultStopping::operator()(const SolverState& state) const {
  return stopping_check(state, config_);
}

SolverComponents SolverComponents::defaults(StoppingConfig config) {
  SolverComponents c;
  c.policy = std::make_shared<ConjugatePolicy>();
  c.information_op = std::make_shared<MatVecInformation>();
  c.belief_update = std::make_shared<SolutionBeliefUpdate>();
  c.stopping = {std::make_shared<DefaultStopping>(config)};
  return c;
}

namespace {

Matrix posterior_covariance(const SolverState& state) {
  const LinearSystem& system = *state.system;
  const Matrix F = state.prior_cov->dense_factor(system);
  const auto k = static_cast<Index>(state.directions.size());
  if (k == 0) return F * F.transpose();
  const Index n = system.dim();
  Matrix Z(n, k);
  Matrix Y(n, k);
  for (Index i = 0; i < k; ++i) {
    Y.col(i) = state.observations[static_cast<std::size_t>(i)];
    Z.col(i) = state.prior_cov->times_observation(state.directions[static_cast<std::size_t>(i)], Y.col(i));
  }
  // (I - K Y^T) Sigma0 (I - K Y^T)^T with K = Z (Y^T Z)^{-1}, as a Gram product.
  const Matrix M = dense::symmetrize(Y.transpose() * Z);
  const Matrix K = dense::spd_solve(M, Z.transpose()).transpose();
  const Matrix X = F - K * (Y.transpose() * F);
  return X * X.transpose();
}

}  // namespace

SolutionBelief problinsolve(const LinearSystem& system, const std::optional<SolutionPrior>& prior,
                            const std::optional<SolverComponents>& components, const SolveOptions& options) {
  const Index n = system.dim();
  SolverComponents comp = components.value_or(SolverComponents::defaults(options.stopping));
  if (!comp.policy) comp.policy = std::make_shared<ConjugatePolicy>();
  if (!comp.information_op) comp.information_op = std::make_shared<MatVecInformation>();
  if (!comp.belief_update) comp.belief_update = std::make_shared<SolutionBeliefUpdate>();
  if (comp.stopping.empty()) comp.stopping.push_back(std::make_shared<DefaultStopping>(options.stopping));

  SolverState state;
  state.system = &system;
  state.prior_cov = (prior && prior->cov) ? prior->cov : implicit_inverse_prior();
  state.mean = (prior && prior->mean.size() > 0) ? prior->mean : Vector::Zero(n);
  if (state.mean.size() != n) detail::throw_dimension_mismatch("problinsolve (prior mean)", n, state.mean.size());
  state.residual = state.mean.isZero(0.0) ? system.b() : Vector(system.b() - system.A().apply(state.mean));
  const double trace_estimate = linops::estimate_trace(system.A(), 10, 0);
  state.A_norm_estimate = std::max(std::abs(trace_estimate), std::numeric_limits<double>::min());
  if (options.stopping.trace_tol) state.prior_trace = state.prior_cov->trace(system);
  state.residual_norms.push_back(state.residual.norm());
  state.mean_history.push_back(state.mean);

  StoppingReason reason = StoppingReason::maxiter;
  for (;;) {
    std::optional<StoppingReason> fired;
    for (const auto& criterion : comp.stopping) {
      fired = (*criterion)(state);
      if (fired) break;
    }
    if (fired) {
      reason = *fired;
      break;
    }
    const std::optional<Vector> s = (*comp.policy)(state);
    if (!s) {
      reason = StoppingReason::residual_tol;
      break;
    }
    const Vector y = (*comp.information_op)(system, *s);
    const double sAs = s->dot(y);
    if (!(sAs > 1e-14 * s->squaredNorm() * state.A_norm_estimate)) {
      std::ostringstream msg;
      msg << "problinsolve: breakdown at iteration " << state.iteration + 1 << " (s^T A s = " << sAs
          << "); A may not be positive definite";
      throw NumericalError(msg.str());
    }
    (*comp.belief_update)(state, *s, y);
    state.directions.push_back(*s);
    state.observations.push_back(y);
    ++state.iteration;
    state.residual_norms.push_back(state.residual.norm());
    state.mean_history.push_back(state.mean);
  }

  SolutionBelief out{GaussianBelief(state.mean, posterior_covariance(state)),
                     std::nullopt,
                     state.iteration,
                     std::move(state.residual_norms),
                     std::move(state.mean_history),
                     reason};
  if (options.infer_inverse) {
    const double scale = static_cast<double>(n) / state.A_norm_estimate;
    const Matrix H0 = scale * Matrix::Identity(n, n);
    MatrixGaussianBelief belief(H0, H0);
    if (!state.directions.empty()) {
      const auto k = static_cast<Index>(state.directions.size());
      Matrix S(n, k);
      Matrix Y(n, k);
      for (Index i = 0; i < k; ++i) {
        S.col(i) = state.directions[static_cast<std::size_t>(i)];
        Y.col(i) = state.observations[static_cast<std::size_t>(i)];
      }
      belief = matrix_based_update(belief, S, Y);
    }
    out.Ainv = std::move(belief);
  }
  return out;
}

GaussianBelief solution_belief_update(const GaussianBelief& belief, const Vector& s, const Vector& y,
                                      double b_proj) {
  const Index n = belief.dim();
  if (s.size() != n) detail::throw_dimension_mismatch("solution_belief_update (s)", n, s.size());
  if (y.size() != n) detail::throw_dimension_mismatch("solution_belief_update (y)", n, y.size());
  if (s.squaredNorm() == 0.0) throw ArgumentError("solution_belief_update: direction must be nonzero");
  const double variance = y.dot(belief.cov() * y);
  const double trace = belief.cov().trace();
  if (!(variance > 1e-14 * y.squaredNorm() * trace)) {
    throw NumericalError(
        "solution_belief_update: zero innovation variance; the direction was already explored (policy "
        "breakdown)");
  }
  return randvars::condition_on_linear_observation(belief, y.transpose(), Matrix::Zero(1, 1),
                                                   Vector::Constant(1, b_proj));
}

}  // namespace pn::linalg
