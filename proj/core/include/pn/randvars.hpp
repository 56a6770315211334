#pragma once

#include "pn/linops.hpp"

#include <Eigen/Dense>

#include <atomic>
#include <memory>
#include <mutex>
#include <random>
#include <vector>

namespace pn::randvars {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// Multivariate normal N(mean, cov).
//
// The covariance is symmetrized on construction and must be PSD up to
// -1e-10 * max-diag in its smallest eigenvalue. A lower-triangular factor
// L L^T = cov is computed on first use and cached; copies share the cache,
// and instances are safe to read from several threads.
class GaussianBelief {
 public:
  GaussianBelief(Vector mean, Matrix cov);

  // cov = factor * factor^T, with `factor` cached as the covariance factor.
  // The factor must be square; it is re-triangularized if it is not lower
  // triangular with a nonnegative diagonal.
  static GaussianBelief from_factor(Vector mean, const Matrix& factor);
  static GaussianBelief point(Vector mean);
  static GaussianBelief scalar(double mean, double variance);

  Index dim() const noexcept { return mean_.size(); }
  const Vector& mean() const noexcept { return mean_; }
  const Matrix& cov() const noexcept { return cov_; }
  const Matrix& cov_factor() const;
  bool has_factor() const;
  Vector var() const { return cov_.diagonal(); }
  Vector std() const;

 private:
  struct FactorCache {
    std::once_flag once;
    std::atomic<bool> ready{false};
    Matrix L;
  };
  struct Unchecked {};
  GaussianBelief(Vector mean, Matrix cov, Unchecked);

  Vector mean_;
  Matrix cov_;
  std::shared_ptr<FactorCache> factor_;
};

// Matrix-variate normal over an n x n symmetric matrix H, vec(H) ~ N(vec(mean), W ⊗ₛ W).
class MatrixGaussianBelief {
 public:
  // `require_spd_factor` demands Cholesky of W to succeed without jitter
  // (priors); posteriors only need W to be PSD.
  MatrixGaussianBelief(Matrix mean, Matrix W, bool symmetric = true, bool require_spd_factor = true);

  Index n() const noexcept { return mean_.rows(); }
  const Matrix& mean() const noexcept { return mean_; }
  const Matrix& factor() const noexcept { return W_; }
  bool symmetric() const noexcept { return symmetric_; }
  linops::LinearOperator cov() const { return linops::symmetric_kronecker(W_); }

 private:
  Matrix mean_;
  Matrix W_;
  bool symmetric_;
};

GaussianBelief affine_transform(const GaussianBelief& rv, const Matrix& A, const Vector& b);
GaussianBelief affine_transform(const GaussianBelief& rv, const Matrix& A);
GaussianBelief affine_transform(const GaussianBelief& rv, const linops::LinearOperator& A, const Vector& b);

// count x dim matrix of draws mean + L z, z ~ N(0, I).
Matrix sample(const GaussianBelief& rv, std::mt19937_64& rng, Index count);

// Exact posterior given y = H x + e, e ~ N(0, R). Computed in factor form;
// throws NumericalError if the innovation covariance H cov H^T + R has
// smallest eigenvalue <= 1e-14 * trace.
GaussianBelief condition_on_linear_observation(const GaussianBelief& rv, const Matrix& H, const Matrix& R,
                                               const Vector& y);

GaussianBelief marginal(const GaussianBelief& rv, const std::vector<Index>& indices);

}  // namespace pn::randvars
