#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <memory>
#include <string>

namespace pn::linops {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

struct OperatorFlags {
  bool symmetric = false;
  bool positive_definite = false;
};

// Matrix-free linear map R^cols -> R^rows.
//
// A LinearOperator is an immutable value: copies share the underlying
// implementation, and apply/adjoint_apply are reentrant. Vectorized matrices
// are always column-major (vec(X) stacks the columns of X).
class LinearOperator {
 public:
  class Impl {
   public:
    virtual ~Impl() = default;
    virtual Vector apply(const Vector& v) const = 0;
    virtual Vector adjoint_apply(const Vector& w) const = 0;
    virtual std::string name() const = 0;
  };

  LinearOperator(std::shared_ptr<const Impl> impl, Index rows, Index cols, OperatorFlags flags = {});

  Index rows() const noexcept { return rows_; }
  Index cols() const noexcept { return cols_; }
  OperatorFlags flags() const noexcept { return flags_; }
  bool is_square() const noexcept { return rows_ == cols_; }
  std::string name() const { return impl_->name(); }

  // A * v. Throws ArgumentError if v.size() != cols().
  Vector apply(const Vector& v) const;
  // A^T * w. Throws ArgumentError if w.size() != rows().
  Vector adjoint_apply(const Vector& w) const;
  // A * V, column by column.
  Matrix apply(const Matrix& V) const;
  Matrix adjoint_apply(const Matrix& W) const;

  LinearOperator transpose() const;

  const std::shared_ptr<const Impl>& impl() const noexcept { return impl_; }

 private:
  std::shared_ptr<const Impl> impl_;
  Index rows_;
  Index cols_;
  OperatorFlags flags_;
};

LinearOperator dense(Matrix A, OperatorFlags flags = {});
LinearOperator identity(Index n);
LinearOperator scaling(Index n, double alpha);
LinearOperator from_functions(Index rows, Index cols, std::function<Vector(const Vector&)> apply,
                              std::function<Vector(const Vector&)> adjoint_apply,
                              OperatorFlags flags = {});

// Lazy combinators.
LinearOperator operator+(const LinearOperator& a, const LinearOperator& b);
LinearOperator operator-(const LinearOperator& a, const LinearOperator& b);
LinearOperator operator*(const LinearOperator& a, const LinearOperator& b);  // composition a∘b
LinearOperator operator*(double alpha, const LinearOperator& a);

// left ⊗ right acting on vec(X), X of shape right.cols() x left.cols():
// (L ⊗ R) vec(X) = vec(R X L^T).
class KroneckerOperator {
 public:
  KroneckerOperator(LinearOperator left, LinearOperator right);

  const LinearOperator& left() const noexcept { return left_; }
  const LinearOperator& right() const noexcept { return right_; }
  Index rows() const noexcept { return left_.rows() * right_.rows(); }
  Index cols() const noexcept { return left_.cols() * right_.cols(); }

  LinearOperator as_operator() const;

 private:
  LinearOperator left_;
  LinearOperator right_;
};

Vector kron_apply(const KroneckerOperator& op, const Vector& vec_x);
LinearOperator kronecker(const LinearOperator& left, const LinearOperator& right);

// W ⊗ₛ W on vec(X), X n x n: vec(½ W (X + X^T) W^T). W must be symmetric.
LinearOperator symmetric_kronecker(const Matrix& W);

inline constexpr Index kDefaultDenseCap = 1'000'000;

// Materializes op column by column. Throws ResourceError above `cap` entries.
Matrix to_dense(const LinearOperator& op, Index cap = kDefaultDenseCap);

// Hutchinson trace estimate with Rademacher probes from a fixed seed.
double estimate_trace(const LinearOperator& op, int probes = 10, std::uint64_t seed = 0);

}  // namespace pn::linops
