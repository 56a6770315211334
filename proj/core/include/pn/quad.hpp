#pragma once

#include "pn/randvars.hpp"

#include <functional>
#include <optional>
#include <random>
#include <string>
#include <variant>
#include <vector>

namespace pn::quad {

using randvars::GaussianBelief;
using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// N(mean, diag(var)).
struct GaussianMeasure {
  Vector mean;
  Vector var;
};

// Lebesgue measure on [lower, upper]; with normalize set, the uniform
// probability measure on the box.
struct LebesgueBox {
  Vector lower;
  Vector upper;
  bool normalize = false;
};

using Measure = std::variant<GaussianMeasure, LebesgueBox>;

Index dim(const Measure& measure);
// Throws ArgumentError unless the measure is well formed.
void validate(const Measure& measure);

// k(x, x') = output_scale * exp(-0.5 sum_i (x_i - x'_i)^2 / l_i^2).
struct SquaredExpKernel {
  Vector lengthscales;
  double output_scale = 1.0;

  static SquaredExpKernel isotropic(Index dim, double lengthscale, double output_scale = 1.0);

  void validate() const;
  double operator()(const Vector& x, const Vector& y) const;
  // Rows of X are points.
  Matrix gram(const Matrix& X) const;
};

using Integrand = std::function<double(const Vector& x)>;

struct QuadProblem {
  Integrand f;
  Measure measure;

  Index dim() const { return quad::dim(measure); }
};

// z(x) = integral of k(x, x') dmu(x').
double kernel_mean(const SquaredExpKernel& kernel, const Measure& measure, const Vector& x);
Vector kernel_means(const SquaredExpKernel& kernel, const Measure& measure, const Matrix& X);
// c = double integral of k against mu in both arguments.
double initial_error(const SquaredExpKernel& kernel, const Measure& measure);

struct BQState {
  Matrix nodes;        // k x n
  Vector values;       // f(nodes)
  Matrix gram_factor;  // lower Cholesky factor of K + jitter I
  double jitter = 0.0;
  Vector z;            // kernel means at the nodes
  Vector weights;      // K^{-1} z
  double c = 0.0;      // initial error
};

// Posterior over the integral given f at fixed nodes. With no nodes this is
// the prior N(0, c). Throws NumericalError if the Gram matrix stays singular
// after jitter escalation.
GaussianBelief bq_integrate(const Measure& measure, const Matrix& nodes, const Vector& values,
                            const SquaredExpKernel& kernel, BQState* state = nullptr);
GaussianBelief bq_integrate(const QuadProblem& problem, const Matrix& nodes, const SquaredExpKernel& kernel,
                            BQState* state = nullptr);

// n i.i.d. draws from the (normalized) measure, one per row.
Matrix sample_nodes(const Measure& measure, Index n, std::mt19937_64& rng);

GaussianBelief bayesian_monte_carlo(const QuadProblem& problem, Index n_nodes, const SquaredExpKernel& kernel,
                                    std::mt19937_64& rng, BQState* state = nullptr);

struct LengthscaleFit {
  SquaredExpKernel kernel;
  std::vector<double> candidates;
  std::vector<double> log_likelihoods;
  std::optional<std::string> warning;
};

// Isotropic lengthscale by grid search over the profile log marginal
// likelihood (output scale at its closed-form maximizer). The default grid
// is 25 log-uniform points on [1e-2, 1e2] times the median pairwise distance.
LengthscaleFit optimize_lengthscale(const Matrix& nodes, const Vector& values,
                                    std::optional<std::vector<double>> candidates = std::nullopt);

}  // namespace pn::quad
