#pragma once

#include "pn/linops.hpp"
#include "pn/randvars.hpp"

#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace pn::linalg {

using linops::LinearOperator;
using randvars::GaussianBelief;
using randvars::MatrixGaussianBelief;
using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// Ax = b with A symmetric positive definite. Symmetry is verified on
// construction with 20 random probe pairs.
class LinearSystem {
 public:
  LinearSystem(LinearOperator A, Vector b);

  Index dim() const noexcept { return b_.size(); }
  const LinearOperator& A() const noexcept { return A_; }
  const Vector& b() const noexcept { return b_; }

 private:
  LinearOperator A_;
  Vector b_;
};

enum class StoppingReason { residual_tol, posterior_trace_tol, maxiter };
std::string to_string(StoppingReason reason);

// Prior covariance class for the solution belief.
class PriorCovariance {
 public:
  virtual ~PriorCovariance() = default;
  // Sigma0 * y for an observation y = A s of direction s.
  virtual Vector times_observation(const Vector& s, const Vector& y) const = 0;
  // A * Sigma0 * y for y = A s.
  virtual Vector A_times_observation(const LinearSystem& system, const Vector& s, const Vector& y) const = 0;
  // Some F with F F^T = Sigma0, for materializing the reported covariance.
  virtual Matrix dense_factor(const LinearSystem& system) const = 0;
  virtual double trace(const LinearSystem& system) const = 0;
  virtual std::string name() const = 0;
};

// Sigma0 = alpha I.
std::shared_ptr<const PriorCovariance> scaled_identity_prior(double alpha);
// Sigma0 = A^{-1}, used only through Sigma0 (A s) = s; reproduces CG.
std::shared_ptr<const PriorCovariance> implicit_inverse_prior();
// User-supplied symmetric PSD operator.
std::shared_ptr<const PriorCovariance> operator_prior(LinearOperator cov);

struct SolutionPrior {
  Vector mean;  // empty means zero
  std::shared_ptr<const PriorCovariance> cov;
};

// Matrix-free state of a solution-space solver. The covariance is kept as
// Sigma_k = Sigma0 - sum_i u_i u_i^T.
struct SolverState {
  const LinearSystem* system = nullptr;
  std::shared_ptr<const PriorCovariance> prior_cov;
  Vector mean;
  Vector residual;  // b - A mean
  int iteration = 0;
  std::vector<Vector> directions;    // s_i
  std::vector<Vector> observations;  // y_i = A s_i
  std::vector<Vector> downdates;     // u_i
  std::vector<Vector> A_downdates;   // A u_i
  std::vector<double> residual_norms;
  std::vector<Vector> mean_history;  // mean after 0, 1, ... iterations
  double A_norm_estimate = 1.0;
  std::optional<double> prior_trace;

  // Sigma_k y for y = A s.
  Vector cov_times_observation(const Vector& s, const Vector& y) const;
  // A Sigma_k y for y = A s.
  Vector A_cov_times_observation(const Vector& s, const Vector& y) const;
  std::optional<double> posterior_trace() const;
};

class Policy {
 public:
  virtual ~Policy() = default;
  // Next search direction, or nullopt when the residual is exactly zero.
  virtual std::optional<Vector> operator()(const SolverState& state) const = 0;
};

class InformationOperator {
 public:
  virtual ~InformationOperator() = default;
  virtual Vector operator()(const LinearSystem& system, const Vector& s) const = 0;
};

class BeliefUpdate {
 public:
  virtual ~BeliefUpdate() = default;
  virtual void operator()(SolverState& state, const Vector& s, const Vector& y) const = 0;
};

class StoppingCriterion {
 public:
  virtual ~StoppingCriterion() = default;
  virtual std::optional<StoppingReason> operator()(const SolverState& state) const = 0;
};

// Residual A-conjugated against the previous direction (conjugate gradients).
class ConjugatePolicy final : public Policy {
 public:
  std::optional<Vector> operator()(const SolverState& state) const override;
};

// Noise-free matrix-vector product y = A s.
class MatVecInformation final : public InformationOperator {
 public:
  Vector operator()(const LinearSystem& system, const Vector& s) const override;
};

// Gaussian conditioning on y^T x = s^T b.
class SolutionBeliefUpdate final : public BeliefUpdate {
 public:
  void operator()(SolverState& state, const Vector& s, const Vector& y) const override;
};

struct StoppingConfig {
  double atol = 1e-10;
  double rtol = 1e-8;
  std::optional<double> trace_tol;  // off by default
  std::optional<int> maxiter;       // default 10 n
};

class DefaultStopping final : public StoppingCriterion {
 public:
  explicit DefaultStopping(StoppingConfig config = {}) : config_(config) {}
  std::optional<StoppingReason> operator()(const SolverState& state) const override;

 private:
  StoppingConfig config_;
};

std::optional<StoppingReason> stopping_check(const SolverState& state, const StoppingConfig& config);

struct SolverComponents {
  std::shared_ptr<const Policy> policy;
  std::shared_ptr<const InformationOperator> information_op;
  std::shared_ptr<const BeliefUpdate> belief_update;
  std::vector<std::shared_ptr<const StoppingCriterion>> stopping;

  static SolverComponents defaults(StoppingConfig config = {});
};

struct SolutionBelief {
  GaussianBelief x;
  std::optional<MatrixGaussianBelief> Ainv;
  int iterations = 0;
  std::vector<double> residual_norms;  // entry k is ||b - A x_k||
  std::vector<Vector> mean_history;
  StoppingReason stopping_reason = StoppingReason::maxiter;
};

struct SolveOptions {
  StoppingConfig stopping;
  bool infer_inverse = false;  // also return a matrix-variate belief over A^{-1}
};

SolutionBelief problinsolve(const LinearSystem& system, const std::optional<SolutionPrior>& prior = std::nullopt,
                            const std::optional<SolverComponents>& components = std::nullopt,
                            const SolveOptions& options = {});

// Conditions an explicit solution belief on the functional (A s)^T x = s^T b.
GaussianBelief solution_belief_update(const GaussianBelief& belief, const Vector& s, const Vector& y,
                                      double b_proj);

// Conditions N(H0, W ⊗ₛ W) over H ≈ A^{-1} on the noise-free observations
// H Y = S (columns of Y are A s_i).
MatrixGaussianBelief matrix_based_update(const MatrixGaussianBelief& belief, const Matrix& S, const Matrix& Y);

}  // namespace pn::linalg
