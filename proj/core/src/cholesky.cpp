#include "pn/dense.hpp"

#include "pn/errors.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace pn::dense {

namespace {

bool factor_ok(const Matrix& C, const Matrix& L, double jitter) {
  if (!L.allFinite()) return false;
  Matrix recon = L * L.transpose();
  recon.diagonal().array() -= jitter;
  return (recon - C).cwiseAbs().maxCoeff() <= 1e-10 * (1.0 + max_abs(C));
}

}  // namespace

double max_abs(const Matrix& M) { return M.size() == 0 ? 0.0 : M.cwiseAbs().maxCoeff(); }

Matrix symmetrize(const Matrix& C) { return 0.5 * (C + C.transpose()); }

CholeskyResult robust_cholesky(const Matrix& C) {
  if (C.rows() != C.cols()) throw ArgumentError("robust_cholesky: matrix must be square");
  const Eigen::Index n = C.rows();
  if (n == 0) return {Matrix(0, 0), 0.0};
  if (!C.allFinite()) throw NumericalError("robust_cholesky: matrix has non-finite entries");
  const double max_diag = C.diagonal().maxCoeff();
  if (max_diag <= 0.0 && max_abs(C) == 0.0) return {Matrix::Zero(n, n), 0.0};
  if (max_diag <= 0.0) throw NumericalError("robust_cholesky: nonpositive diagonal, matrix is not PSD");

  const Matrix S = symmetrize(C);
  for (double rel : {0.0, 1e-12, 1e-8}) {
    const double jitter = rel * max_diag;
    Matrix shifted = S;
    shifted.diagonal().array() += jitter;
    Eigen::LLT<Matrix> llt(shifted);
    if (llt.info() != Eigen::Success) continue;
    Matrix L = llt.matrixL();
    if (factor_ok(S, L, jitter)) return {std::move(L), jitter};
  }
  std::ostringstream msg;
  msg << "robust_cholesky: factorization failed after jitter escalation (n=" << n << ", max diag=" << max_diag
      << ")";
  throw NumericalError(msg.str());
}

Matrix tria(const Matrix& M) {
  const Eigen::Index n = M.cols();
  Matrix R;
  if (M.rows() >= n) {
    Eigen::HouseholderQR<Matrix> qr(M);
    R = qr.matrixQR().topRows(n).triangularView<Eigen::Upper>();
  } else {
    Matrix padded = Matrix::Zero(n, n);
    padded.topRows(M.rows()) = M;
    Eigen::HouseholderQR<Matrix> qr(padded);
    R = qr.matrixQR().triangularView<Eigen::Upper>();
  }
  Matrix L = R.transpose();
  for (Eigen::Index j = 0; j < n; ++j) {
    if (L(j, j) < 0.0) L.col(j) = -L.col(j);
  }
  return L;
}

Matrix spd_solve(const Matrix& C, const Matrix& B) {
  if (C.rows() != B.rows()) detail::throw_dimension_mismatch("spd_solve", C.rows(), B.rows());
  const CholeskyResult f = robust_cholesky(C);
  for (Eigen::Index i = 0; i < f.L.rows(); ++i) {
    if (f.L(i, i) <= 0.0) throw NumericalError("spd_solve: matrix is singular");
  }
  const auto L = f.L.triangularView<Eigen::Lower>();
  return L.transpose().solve(L.solve(B));
}

}  // namespace pn::dense
