#pragma once

#include <Eigen/Dense>

namespace pn::dense {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// (C + C^T) / 2.
Matrix symmetrize(const Matrix& C);

struct CholeskyResult {
  Matrix L;             // lower triangular, L L^T = C + jitter * I
  double jitter = 0.0;  // diagonal shift that was needed
};

// Cholesky of a symmetric PSD matrix. Tries the plain factorization first,
// then jitter 1e-12 * max-diag, then 1e-8 * max-diag. The all-zero matrix
// factors to zero. Throws NumericalError if every attempt fails.
CholeskyResult robust_cholesky(const Matrix& C);

// Lower-triangular L with nonnegative diagonal and L L^T = M^T M.
// Computed from a Householder QR of M; M may be wide or tall.
Matrix tria(const Matrix& M);

// Solves C X = B for symmetric PSD C through robust_cholesky.
Matrix spd_solve(const Matrix& C, const Matrix& B);

double max_abs(const Matrix& M);

}  // namespace pn::dense
