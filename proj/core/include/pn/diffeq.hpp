#pragma once

#include "pn/filtsmooth.hpp"
#include "pn/randvars.hpp"

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace pn::diffeq {

using filtsmooth::GaussianTransition;
using filtsmooth::LinearObservationModel;
using randvars::GaussianBelief;
using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

using VectorField = std::function<Vector(const Vector& y, double t)>;
using JacobianField = std::function<Matrix(const Vector& y, double t)>;

// y' = f(y, t), y(t0) = y0 on [t0, tmax].
class IVP {
 public:
  IVP(VectorField f, double t0, double tmax, Vector y0, JacobianField jacobian = nullptr);

  Index dim() const noexcept { return y0_.size(); }
  double t0() const noexcept { return t0_; }
  double tmax() const noexcept { return tmax_; }
  const Vector& y0() const noexcept { return y0_; }
  bool has_jacobian() const noexcept { return static_cast<bool>(jacobian_); }

  Vector f(const Vector& y, double t) const { return f_(y, t); }
  // Analytic Jacobian when available, central differences otherwise.
  Matrix jacobian(const Vector& y, double t) const;

 private:
  VectorField f_;
  JacobianField jacobian_;
  double t0_;
  double tmax_;
  Vector y0_;
};

// q-times integrated Wiener process prior over d independent dimensions.
// State layout: per dimension the stack (y, y', ..., y^(q)), so entry
// (dim i, derivative j) sits at i * (q + 1) + j.
struct IWPPrior {
  IWPPrior(int q, Index d, double diffusion = 1.0);

  int q;
  Index d;
  double diffusion;

  Index state_dim() const noexcept { return d * (q + 1); }
  Index index(Index dim, int derivative) const noexcept { return dim * (q + 1) + derivative; }
  // d x state_dim selector of the given derivative.
  Matrix projection(int derivative) const;
};

// Exact discretization over a step h > 0.
GaussianTransition iwp_discretize(const IWPPrior& prior, double h);

// Coordinate change x = T(h) x_bar with diagonal T(h), under which the
// transition becomes (Phi_bar, Q_bar), independent of h:
// T Phi_bar T^{-1} = Phi(h), T Q_bar T^T = Q(h).
struct Preconditioner {
  Vector T;                    // diagonal of T(h)
  GaussianTransition step;     // (Phi_bar, Q_bar), Q_bar carries its Cholesky factor
};

Preconditioner precondition(const IWPPrior& prior, double h);

// Maps a belief over x to a belief over diag(scale) x, keeping its factor.
GaussianBelief scale_coordinates(const GaussianBelief& rv, const Vector& scale);

enum class Linearization { EK0, EK1 };
std::string to_string(Linearization mode);

// Affine model of the residual m(x) = E1 x - f(E0 x, t) around the
// predicted mean, with R = 0. Throws NumericalError for non-finite f or J.
LinearObservationModel ek_linearize(const IVP& ivp, const IWPPrior& prior, const GaussianBelief& predicted, double t,
                                    Linearization mode);

struct ResidualRecord {
  Vector z;       // residual of the observation y = 0
  Matrix S_unit;  // innovation covariance under unit diffusion
};

// (1 / (N d)) sum_n z_n^T S_n^{-1} z_n.
double calibrate_diffusion(const std::vector<ResidualRecord>& residuals);

struct StepResult {
  GaussianBelief predicted;  // at t + h, unit diffusion
  GaussianBelief filtered;   // at t + h, unit diffusion
  Vector local_error;        // per ODE dimension
  ResidualRecord residual;
};

// One square-root EK step in preconditioned coordinates, unit diffusion.
StepResult odefilter_step(const GaussianBelief& state, double t, const IVP& ivp, double h, Linearization mode,
                          const IWPPrior& prior);

struct StepDecision {
  bool accept = false;
  double h_next = 0.0;
  double error_norm = 0.0;
};

// RMS-weighted error control; h_next = h clamp(0.95 E^(-1/(q+1)), 0.2, 10),
// then capped at max_step (the distance left to tmax).
StepDecision adapt_step(const Vector& local_error, double atol, double rtol, const Vector& reference, double h, int q,
                        double max_step = std::numeric_limits<double>::infinity());

// Initial full-stack belief: y0 and f(y0, t0) exact, higher derivatives by
// nested forward differences along the flow. Warnings are appended to
// `warnings` when given.
GaussianBelief taylor_init(const IVP& ivp, const IWPPrior& prior, std::vector<std::string>* warnings = nullptr);

struct SolveConfig {
  int q = 2;
  Linearization mode = Linearization::EK1;
  double rtol = 1e-6;
  double atol = 1e-8;
  std::optional<std::vector<double>> grid;  // fixed grid; adaptive when absent
  std::optional<double> initial_step;
};

// Uniform grid t0, t0 + h, ..., ending exactly at tmax.
std::vector<double> uniform_grid(double t0, double tmax, double h);

struct StepLogEntry {
  double t = 0.0;  // start of the attempted step
  double h = 0.0;
  bool accepted = false;
  double error_norm = 0.0;
};

class ODEPosterior {
 public:
  const std::vector<double>& grid() const noexcept { return grid_; }
  // Calibrated smoothing posterior over the full state at each grid node.
  const std::vector<GaussianBelief>& states() const noexcept { return states_; }
  double diffusion() const noexcept { return diffusion_; }
  const IWPPrior& prior() const noexcept { return prior_; }
  const std::vector<StepLogEntry>& step_log() const noexcept { return step_log_; }
  const std::vector<std::string>& warnings() const noexcept { return warnings_; }
  std::size_t accepted_steps() const noexcept { return grid_.size() - 1; }
  std::size_t rejected_steps() const noexcept;

  // Dense output: the smoothing posterior at any t in [t0, tmax]. At grid
  // nodes this returns the stored state itself.
  GaussianBelief state_at(double t) const;
  // Projection of state_at(t) to the solution (derivative 0).
  GaussianBelief solution_at(double t) const;

 private:
  friend ODEPosterior solve_ivp(const IVP& ivp, const SolveConfig& config);
  explicit ODEPosterior(IWPPrior prior) : prior_(prior) {}

  IWPPrior prior_;
  std::vector<double> grid_;
  std::vector<GaussianBelief> filtered_;  // unit diffusion
  std::vector<GaussianBelief> smoothed_;  // unit diffusion
  std::vector<GaussianBelief> states_;    // calibrated
  double diffusion_ = 0.0;
  std::vector<StepLogEntry> step_log_;
  std::vector<std::string> warnings_;
};

// Throws NumericalError on step-size underflow or persistent non-finite f.
ODEPosterior solve_ivp(const IVP& ivp, const SolveConfig& config = {});

enum class RKMethod { Euler, RK4 };
int order(RKMethod method);
std::string to_string(RKMethod method);

struct PerturbedSolution {
  std::vector<double> grid;
  std::vector<Matrix> members;  // each grid.size() x d
  int order = 0;
  double scale = 0.0;
  Index excluded = 0;  // members dropped for non-finite states

  Vector mean(std::size_t k) const;
  Vector std(std::size_t k) const;  // ensemble standard deviation (divisor M - 1)
};

// Deterministic explicit RK solution on uniform_grid(t0, tmax, h).
Matrix rk_solve(const IVP& ivp, RKMethod method, double h);

// Random time-step RK ensemble: step n uses h_n ~ U[h - delta, h + delta],
// delta = min(scale h^(p + 1/2), 0.9 h). State n is attributed to the
// nominal grid time t0 + n h. Member m draws from a stream seeded by
// (seed, m), so results do not depend on scheduling.
PerturbedSolution perturbed_solve(const IVP& ivp, RKMethod method, double h, double scale, Index ensemble_size,
                                  std::uint64_t seed);

}  // namespace pn::diffeq
