#include "pn/randvars.hpp"

#include "pn/dense.hpp"
#include "pn/errors.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

namespace pn::randvars {

namespace {

bool is_lower_with_nonneg_diag(const Matrix& L) {
  for (Index j = 0; j < L.cols(); ++j) {
    if (L(j, j) < 0.0) return false;
    for (Index i = 0; i < j; ++i) {
      if (L(i, j) != 0.0) return false;
    }
  }
  return true;
}

void check_psd(const Matrix& cov) {
  if (cov.rows() == 0) return;
  const double max_diag = cov.diagonal().maxCoeff();
  Eigen::SelfAdjointEigenSolver<Matrix> eig(cov, Eigen::EigenvaluesOnly);
  const double min_eig = eig.eigenvalues().minCoeff();
  if (min_eig < -1e-10 * std::max(max_diag, 0.0)) {
    std::ostringstream msg;
    msg << "GaussianBelief: covariance is not positive semidefinite (smallest eigenvalue " << min_eig
        << ", max diagonal " << max_diag << ")";
    throw ArgumentError(msg.str());
  }
}

}  // namespace

GaussianBelief::GaussianBelief(Vector mean, Matrix cov, Unchecked)
    : mean_(std::move(mean)), cov_(std::move(cov)), factor_(std::make_shared<FactorCache>()) {}

GaussianBelief::GaussianBelief(Vector mean, Matrix cov)
    : mean_(std::move(mean)), cov_(std::move(cov)), factor_(std::make_shared<FactorCache>()) {
  if (cov_.rows() != cov_.cols()) throw ArgumentError("GaussianBelief: covariance must be square");
  if (cov_.rows() != mean_.size()) detail::throw_dimension_mismatch("GaussianBelief", mean_.size(), cov_.rows());
  if (!mean_.allFinite() || !cov_.allFinite()) throw ArgumentError("GaussianBelief: non-finite mean or covariance");
  cov_ = dense::symmetrize(cov_);
  check_psd(cov_);
}

GaussianBelief GaussianBelief::from_factor(Vector mean, const Matrix& factor) {
  if (factor.rows() != factor.cols()) throw ArgumentError("GaussianBelief::from_factor: factor must be square");
  if (factor.rows() != mean.size()) {
    detail::throw_dimension_mismatch("GaussianBelief::from_factor", mean.size(), factor.rows());
  }
  if (!mean.allFinite() || !factor.allFinite()) {
    throw ArgumentError("GaussianBelief::from_factor: non-finite mean or factor");
  }
  Matrix L = is_lower_with_nonneg_diag(factor) ? factor : dense::tria(factor.transpose());
  Matrix cov = dense::symmetrize(L * L.transpose());
  GaussianBelief out(std::move(mean), std::move(cov), Unchecked{});
  std::call_once(out.factor_->once, [&] {
    out.factor_->L = std::move(L);
    out.factor_->ready = true;
  });
  return out;
}

GaussianBelief GaussianBelief::point(Vector mean) {
  const Index n = mean.size();
  return from_factor(std::move(mean), Matrix::Zero(n, n));
}

GaussianBelief GaussianBelief::scalar(double mean, double variance) {
  return GaussianBelief(Vector::Constant(1, mean), Matrix::Constant(1, 1, variance));
}

const Matrix& GaussianBelief::cov_factor() const {
  std::call_once(factor_->once, [this] {
    factor_->L = dense::robust_cholesky(cov_).L;
    factor_->ready = true;
  });
  return factor_->L;
}

bool GaussianBelief::has_factor() const {
  return factor_->ready.load();
}

Vector GaussianBelief::std() const { return cov_.diagonal().cwiseMax(0.0).cwiseSqrt(); }

MatrixGaussianBelief::MatrixGaussianBelief(Matrix mean, Matrix W, bool symmetric, bool require_spd_factor)
    : mean_(std::move(mean)), W_(std::move(W)), symmetric_(symmetric) {
  if (mean_.rows() != mean_.cols()) throw ArgumentError("MatrixGaussianBelief: mean must be square");
  if (W_.rows() != W_.cols() || W_.rows() != mean_.rows()) {
    detail::throw_dimension_mismatch("MatrixGaussianBelief", mean_.rows(), W_.rows());
  }
  const double scale = 1.0 + dense::max_abs(mean_);
  if (symmetric_ && dense::max_abs(mean_ - mean_.transpose()) > 1e-12 * scale) {
    throw ArgumentError("MatrixGaussianBelief: mean must be symmetric for a symmetric model");
  }
  if (dense::max_abs(W_ - W_.transpose()) > 1e-12 * (1.0 + dense::max_abs(W_))) {
    throw ArgumentError("MatrixGaussianBelief: covariance factor must be symmetric");
  }
  W_ = dense::symmetrize(W_);
  if (symmetric_) mean_ = dense::symmetrize(mean_);
  if (require_spd_factor) {
    Eigen::LLT<Matrix> llt(W_);
    if (llt.info() != Eigen::Success) throw ArgumentError("MatrixGaussianBelief: covariance factor must be SPD");
  } else {
    check_psd(W_);
  }
}

GaussianBelief affine_transform(const GaussianBelief& rv, const Matrix& A, const Vector& b) {
  if (A.cols() != rv.dim()) detail::throw_dimension_mismatch("affine_transform", rv.dim(), A.cols());
  if (b.size() != A.rows()) detail::throw_dimension_mismatch("affine_transform (offset)", A.rows(), b.size());
  return GaussianBelief(A * rv.mean() + b, A * rv.cov() * A.transpose());
}

GaussianBelief affine_transform(const GaussianBelief& rv, const Matrix& A) {
  return affine_transform(rv, A, Vector::Zero(A.rows()));
}

GaussianBelief affine_transform(const GaussianBelief& rv, const linops::LinearOperator& A, const Vector& b) {
  if (A.cols() != rv.dim()) detail::throw_dimension_mismatch("affine_transform", rv.dim(), A.cols());
  if (b.size() != A.rows()) detail::throw_dimension_mismatch("affine_transform (offset)", A.rows(), b.size());
  const Matrix AP = A.apply(rv.cov());                   // m x n
  const Matrix APAt = A.apply(Matrix(AP.transpose()));  // m x m
  return GaussianBelief(A.apply(rv.mean()) + b, APAt);
}

Matrix sample(const GaussianBelief& rv, std::mt19937_64& rng, Index count) {
  if (count < 1) throw ArgumentError("sample: count must be positive");
  const Index n = rv.dim();
  const Matrix& L = rv.cov_factor();
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix Z(n, count);
  for (Index j = 0; j < count; ++j) {
    for (Index i = 0; i < n; ++i) Z(i, j) = normal(rng);
  }
  Matrix draws = L * Z;
  draws.colwise() += rv.mean();
  return draws.transpose();
}

GaussianBelief condition_on_linear_observation(const GaussianBelief& rv, const Matrix& H, const Matrix& R,
                                               const Vector& y) {
  const Index n = rv.dim();
  const Index m = H.rows();
  if (H.cols() != n) detail::throw_dimension_mismatch("condition_on_linear_observation (H)", n, H.cols());
  if (R.rows() != m || R.cols() != m) {
    detail::throw_dimension_mismatch("condition_on_linear_observation (R)", m, R.rows());
  }
  if (y.size() != m) detail::throw_dimension_mismatch("condition_on_linear_observation (y)", m, y.size());

  const Matrix& P = rv.cov();
  const Matrix PHt = P * H.transpose();
  const Matrix S = dense::symmetrize(H * PHt + R);
  const double trace = S.trace();
  Eigen::SelfAdjointEigenSolver<Matrix> eig(S, Eigen::EigenvaluesOnly);
  const double min_eig = m > 0 ? eig.eigenvalues().minCoeff() : 1.0;
  if (!(min_eig > 1e-14 * trace) || !(trace > 0.0)) {
    std::ostringstream msg;
    msg << "condition_on_linear_observation: singular innovation covariance (smallest eigenvalue " << min_eig
        << ", trace " << trace << ")";
    throw NumericalError(msg.str());
  }
  Eigen::LLT<Matrix> llt(S);
  if (llt.info() != Eigen::Success) {
    throw NumericalError("condition_on_linear_observation: innovation covariance factorization failed");
  }
  const Matrix K = llt.solve(PHt.transpose()).transpose();  // n x m
  const Vector mean = rv.mean() + K * (y - H * rv.mean());

  // Joseph form (I - K H) P (I - K H)^T + K R K^T, assembled in factor form.
  const Matrix& L = rv.cov_factor();
  const Matrix IKH = Matrix::Identity(n, n) - K * H;
  const Matrix LR = dense::robust_cholesky(R).L;
  Matrix stacked(n + m, n);
  stacked.topRows(n) = (IKH * L).transpose();
  stacked.bottomRows(m) = (K * LR).transpose();
  return GaussianBelief::from_factor(mean, dense::tria(stacked));
}

GaussianBelief marginal(const GaussianBelief& rv, const std::vector<Index>& indices) {
  std::set<Index> seen;
  for (Index i : indices) {
    if (i < 0 || i >= rv.dim()) {
      std::ostringstream msg;
      msg << "marginal: index " << i << " out of range for dimension " << rv.dim();
      throw ArgumentError(msg.str());
    }
    if (!seen.insert(i).second) throw ArgumentError("marginal: duplicate index " + std::to_string(i));
  }
  const Index k = static_cast<Index>(indices.size());
  Vector mean(k);
  Matrix cov(k, k);
  for (Index a = 0; a < k; ++a) {
    mean[a] = rv.mean()[indices[a]];
    for (Index b = 0; b < k; ++b) cov(a, b) = rv.cov()(indices[a], indices[b]);
  }
  return GaussianBelief(std::move(mean), std::move(cov));
}

}  // namespace pn::randvars
