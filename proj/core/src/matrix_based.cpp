#include "pn/dense.hpp"
#include "pn/errors.hpp"
#include "pn/linalg.hpp"

#include <sstream>

namespace pn::linalg {

MatrixGaussianBelief matrix_based_update(const MatrixGaussianBelief& belief, const Matrix& S, const Matrix& Y) {
  const Index n = belief.n();
  if (S.rows() != n || Y.rows() != n) detail::throw_dimension_mismatch("matrix_based_update", n, S.rows());
  if (S.cols() != Y.cols()) detail::throw_dimension_mismatch("matrix_based_update (directions)", S.cols(), Y.cols());
  if (S.cols() == 0) return belief;

  // Observations H y_i = s_i are homogeneous, so columns are rescaled to unit
  // ||y_i|| before the rank test; the posterior is unchanged.
  const Vector col_scale = Y.colwise().norm().cwiseInverse().transpose();
  if (!col_scale.allFinite()) throw NumericalError("matrix_based_update: zero observation column");
  const Matrix Sn = S * col_scale.asDiagonal();
  const Matrix Yn = Y * col_scale.asDiagonal();

  const Matrix& H0 = belief.mean();
  const Matrix& W = belief.factor();
  const Matrix WY = W * Yn;
  const Matrix G = dense::symmetrize(Yn.transpose() * WY);

  Eigen::SelfAdjointEigenSolver<Matrix> eig(G, Eigen::EigenvaluesOnly);
  const double min_eig = eig.eigenvalues().minCoeff();
  if (!(min_eig > 1e-14 * G.trace())) {
    std::ostringstream msg;
    msg << "matrix_based_update: Y^T W Y is rank deficient (smallest eigenvalue " << min_eig << ")";
    throw NumericalError(msg.str());
  }
  Eigen::LLT<Matrix> llt(G);
  const Matrix U = llt.solve(WY.transpose()).transpose();  // W Y G^{-1}
  const Matrix Delta = Sn - H0 * Yn;

  // H0 + Delta U^T + U Delta^T - U (Y^T Delta) U^T
  Matrix mean = H0 + Delta * U.transpose() + U * Delta.transpose() - U * (Yn.transpose() * Delta) * U.transpose();
  if (belief.symmetric()) mean = dense::symmetrize(mean);

  // W - W Y G^{-1} Y^T W = (I - U Y^T) W (I - U Y^T)^T, as a Gram product.
  const Matrix LW = dense::robust_cholesky(W).L;
  const Matrix X = (Matrix::Identity(n, n) - U * Yn.transpose()) * LW;
  return MatrixGaussianBelief(std::move(mean), dense::symmetrize(X * X.transpose()), belief.symmetric(), false);
}

}  // namespace pn::linalg
