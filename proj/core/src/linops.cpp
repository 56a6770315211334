#include "pn/linops.hpp"

#include "pn/errors.hpp"

#include <random>
#include <sstream>
#include <utility>

namespace pn::linops {

namespace {

class DenseImpl final : public LinearOperator::Impl {
 public:
  explicit DenseImpl(Matrix A) : A_(std::move(A)) {}
  Vector apply(const Vector& v) const override { return A_ * v; }
  Vector adjoint_apply(const Vector& w) const override { return A_.transpose() * w; }
  std::string name() const override { return "Dense"; }

 private:
  Matrix A_;
};

class ScalingImpl final : public LinearOperator::Impl {
 public:
  explicit ScalingImpl(double alpha) : alpha_(alpha) {}
  Vector apply(const Vector& v) const override { return alpha_ * v; }
  Vector adjoint_apply(const Vector& w) const override { return alpha_ * w; }
  std::string name() const override { return alpha_ == 1.0 ? "Identity" : "Scaling"; }

 private:
  double alpha_;
};

class FunctionImpl final : public LinearOperator::Impl {
 public:
  FunctionImpl(std::function<Vector(const Vector&)> f, std::function<Vector(const Vector&)> g)
      : apply_(std::move(f)), adjoint_(std::move(g)) {}
  Vector apply(const Vector& v) const override { return apply_(v); }
  Vector adjoint_apply(const Vector& w) const override { return adjoint_(w); }
  std::string name() const override { return "Function"; }

 private:
  std::function<Vector(const Vector&)> apply_;
  std::function<Vector(const Vector&)> adjoint_;
};

class SumImpl final : public LinearOperator::Impl {
 public:
  SumImpl(LinearOperator a, LinearOperator b, double sign) : a_(std::move(a)), b_(std::move(b)), sign_(sign) {}
  Vector apply(const Vector& v) const override { return a_.apply(v) + sign_ * b_.apply(v); }
  Vector adjoint_apply(const Vector& w) const override {
    return a_.adjoint_apply(w) + sign_ * b_.adjoint_apply(w);
  }
  std::string name() const override { return "Sum(" + a_.name() + ", " + b_.name() + ")"; }

 private:
  LinearOperator a_;
  LinearOperator b_;
  double sign_;
};

class CompositionImpl final : public LinearOperator::Impl {
 public:
  CompositionImpl(LinearOperator a, LinearOperator b) : a_(std::move(a)), b_(std::move(b)) {}
  Vector apply(const Vector& v) const override { return a_.apply(b_.apply(v)); }
  Vector adjoint_apply(const Vector& w) const override { return b_.adjoint_apply(a_.adjoint_apply(w)); }
  std::string name() const override { return "Composition(" + a_.name() + ", " + b_.name() + ")"; }

 private:
  LinearOperator a_;
  LinearOperator b_;
};

class ScaledImpl final : public LinearOperator::Impl {
 public:
  ScaledImpl(double alpha, LinearOperator a) : alpha_(alpha), a_(std::move(a)) {}
  Vector apply(const Vector& v) const override { return alpha_ * a_.apply(v); }
  Vector adjoint_apply(const Vector& w) const override { return alpha_ * a_.adjoint_apply(w); }
  std::string name() const override { return "Scaled(" + a_.name() + ")"; }

 private:
  double alpha_;
  LinearOperator a_;
};

class TransposeImpl final : public LinearOperator::Impl {
 public:
  explicit TransposeImpl(LinearOperator a) : a_(std::move(a)) {}
  Vector apply(const Vector& v) const override { return a_.adjoint_apply(v); }
  Vector adjoint_apply(const Vector& w) const override { return a_.apply(w); }
  std::string name() const override { return "Transpose(" + a_.name() + ")"; }

 private:
  LinearOperator a_;
};

// Applies op to every column of X (X has op.cols() rows).
Matrix apply_to_columns(const LinearOperator& op, const Eigen::Ref<const Matrix>& X) {
  Matrix out(op.rows(), X.cols());
  for (Index j = 0; j < X.cols(); ++j) out.col(j) = op.apply(Vector(X.col(j)));
  return out;
}

Matrix adjoint_to_columns(const LinearOperator& op, const Eigen::Ref<const Matrix>& X) {
  Matrix out(op.cols(), X.cols());
  for (Index j = 0; j < X.cols(); ++j) out.col(j) = op.adjoint_apply(Vector(X.col(j)));
  return out;
}

// vec(R X L^T) where X is reshaped from v (column-major, R.cols() x L.cols()).
Vector kron_vec(const LinearOperator& L, const LinearOperator& R, const Vector& v, bool adjoint) {
  const Index xr = adjoint ? R.rows() : R.cols();
  const Index xc = adjoint ? L.rows() : L.cols();
  const Eigen::Map<const Matrix> X(v.data(), xr, xc);
  // Y = R X, then Z = Y L^T computed row-wise as (L Y^T)^T.
  const Matrix Y = adjoint ? adjoint_to_columns(R, X) : apply_to_columns(R, X);
  const Matrix Yt = Y.transpose();
  const Matrix Zt = adjoint ? adjoint_to_columns(L, Yt) : apply_to_columns(L, Yt);
  const Matrix Z = Zt.transpose();
  return Eigen::Map<const Vector>(Z.data(), Z.size());
}

class KroneckerImpl final : public LinearOperator::Impl {
 public:
  KroneckerImpl(LinearOperator L, LinearOperator R) : L_(std::move(L)), R_(std::move(R)) {}
  Vector apply(const Vector& v) const override { return kron_vec(L_, R_, v, false); }
  Vector adjoint_apply(const Vector& w) const override { return kron_vec(L_, R_, w, true); }
  std::string name() const override { return "Kronecker(" + L_.name() + ", " + R_.name() + ")"; }

 private:
  LinearOperator L_;
  LinearOperator R_;
};

class SymmetricKroneckerImpl final : public LinearOperator::Impl {
 public:
  explicit SymmetricKroneckerImpl(Matrix W) : W_(std::move(W)) {}
  Vector apply(const Vector& v) const override {
    const Index n = W_.rows();
    const Eigen::Map<const Matrix> X(v.data(), n, n);
    const Matrix Z = 0.5 * W_ * (X + X.transpose()) * W_.transpose();
    return Eigen::Map<const Vector>(Z.data(), Z.size());
  }
  Vector adjoint_apply(const Vector& w) const override { return apply(w); }
  std::string name() const override { return "SymmetricKronecker"; }

 private:
  Matrix W_;
};

void check_same_shape(const LinearOperator& a, const LinearOperator& b, const char* where) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    std::ostringstream msg;
    msg << where << ": shape mismatch (" << a.rows() << "x" << a.cols() << " vs " << b.rows() << "x"
        << b.cols() << ")";
    throw ArgumentError(msg.str());
  }
}

}  // namespace

LinearOperator::LinearOperator(std::shared_ptr<const Impl> impl, Index rows, Index cols, OperatorFlags flags)
    : impl_(std::move(impl)), rows_(rows), cols_(cols), flags_(flags) {
  if (!impl_) throw ArgumentError("LinearOperator: null implementation");
  if (rows < 0 || cols < 0) throw ArgumentError("LinearOperator: negative shape");
  if ((flags_.symmetric || flags_.positive_definite) && rows != cols) {
    throw ArgumentError("LinearOperator: symmetric/positive-definite flags require a square shape");
  }
}

Vector LinearOperator::apply(const Vector& v) const {
  if (v.size() != cols_) detail::throw_dimension_mismatch("LinearOperator::apply", cols_, v.size());
  return impl_->apply(v);
}

Vector LinearOperator::adjoint_apply(const Vector& w) const {
  if (w.size() != rows_) detail::throw_dimension_mismatch("LinearOperator::adjoint_apply", rows_, w.size());
  return impl_->adjoint_apply(w);
}

Matrix LinearOperator::apply(const Matrix& V) const {
  if (V.rows() != cols_) detail::throw_dimension_mismatch("LinearOperator::apply", cols_, V.rows());
  return apply_to_columns(*this, V);
}

Matrix LinearOperator::adjoint_apply(const Matrix& W) const {
  if (W.rows() != rows_) detail::throw_dimension_mismatch("LinearOperator::adjoint_apply", rows_, W.rows());
  return adjoint_to_columns(*this, W);
}

LinearOperator LinearOperator::transpose() const {
  return LinearOperator(std::make_shared<TransposeImpl>(*this), cols_, rows_, flags_);
}

LinearOperator dense(Matrix A, OperatorFlags flags) {
  const Index r = A.rows();
  const Index c = A.cols();
  return LinearOperator(std::make_shared<DenseImpl>(std::move(A)), r, c, flags);
}

LinearOperator identity(Index n) { return scaling(n, 1.0); }

LinearOperator scaling(Index n, double alpha) {
  return LinearOperator(std::make_shared<ScalingImpl>(alpha), n, n, {true, alpha > 0.0});
}

LinearOperator from_functions(Index rows, Index cols, std::function<Vector(const Vector&)> apply,
                              std::function<Vector(const Vector&)> adjoint_apply, OperatorFlags flags) {
  if (!apply || !adjoint_apply) throw ArgumentError("from_functions: both apply and adjoint_apply are required");
  return LinearOperator(std::make_shared<FunctionImpl>(std::move(apply), std::move(adjoint_apply)), rows, cols,
                        flags);
}

LinearOperator operator+(const LinearOperator& a, const LinearOperator& b) {
  check_same_shape(a, b, "operator+");
  const OperatorFlags f{a.flags().symmetric && b.flags().symmetric,
                        a.flags().positive_definite && b.flags().positive_definite};
  return LinearOperator(std::make_shared<SumImpl>(a, b, 1.0), a.rows(), a.cols(), f);
}

LinearOperator operator-(const LinearOperator& a, const LinearOperator& b) {
  check_same_shape(a, b, "operator-");
  const OperatorFlags f{a.flags().symmetric && b.flags().symmetric, false};
  return LinearOperator(std::make_shared<SumImpl>(a, b, -1.0), a.rows(), a.cols(), f);
}

LinearOperator operator*(const LinearOperator& a, const LinearOperator& b) {
  if (a.cols() != b.rows()) detail::throw_dimension_mismatch("operator* (composition)", a.cols(), b.rows());
  return LinearOperator(std::make_shared<CompositionImpl>(a, b), a.rows(), b.cols());
}

LinearOperator operator*(double alpha, const LinearOperator& a) {
  const OperatorFlags f{a.flags().symmetric, a.flags().positive_definite && alpha > 0.0};
  return LinearOperator(std::make_shared<ScaledImpl>(alpha, a), a.rows(), a.cols(), f);
}

KroneckerOperator::KroneckerOperator(LinearOperator left, LinearOperator right)
    : left_(std::move(left)), right_(std::move(right)) {}

LinearOperator KroneckerOperator::as_operator() const {
  const OperatorFlags f{left_.flags().symmetric && right_.flags().symmetric,
                        left_.flags().positive_definite && right_.flags().positive_definite};
  return LinearOperator(std::make_shared<KroneckerImpl>(left_, right_), rows(), cols(), f);
}

Vector kron_apply(const KroneckerOperator& op, const Vector& vec_x) {
  if (vec_x.size() != op.cols()) detail::throw_dimension_mismatch("kron_apply", op.cols(), vec_x.size());
  return kron_vec(op.left(), op.right(), vec_x, false);
}

LinearOperator kronecker(const LinearOperator& left, const LinearOperator& right) {
  return KroneckerOperator(left, right).as_operator();
}

LinearOperator symmetric_kronecker(const Matrix& W) {
  if (W.rows() != W.cols()) throw ArgumentError("symmetric_kronecker: factor must be square");
  const double scale = 1.0 + W.cwiseAbs().maxCoeff();
  if ((W - W.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
    throw ArgumentError("symmetric_kronecker: factor must be symmetric");
  }
  const Index n2 = W.rows() * W.rows();
  return LinearOperator(std::make_shared<SymmetricKroneckerImpl>(W), n2, n2, {true, false});
}

Matrix to_dense(const LinearOperator& op, Index cap) {
  if (op.rows() * op.cols() > cap) {
    std::ostringstream msg;
    msg << "to_dense: " << op.rows() << "x" << op.cols() << " exceeds the cap of " << cap << " entries";
    throw ResourceError(msg.str());
  }
  Matrix out(op.rows(), op.cols());
  Vector e = Vector::Zero(op.cols());
  for (Index j = 0; j < op.cols(); ++j) {
    e[j] = 1.0;
    out.col(j) = op.apply(e);
    e[j] = 0.0;
  }
  return out;
}

double estimate_trace(const LinearOperator& op, int probes, std::uint64_t seed) {
  if (!op.is_square()) throw ArgumentError("estimate_trace: operator must be square");
  if (probes < 1) throw ArgumentError("estimate_trace: need at least one probe");
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution coin(0.5);
  double acc = 0.0;
  Vector z(op.cols());
  for (int p = 0; p < probes; ++p) {
    for (Index i = 0; i < z.size(); ++i) z[i] = coin(rng) ? 1.0 : -1.0;
    acc += z.dot(op.apply(z));
  }
  return acc / probes;
}

}  // namespace pn::linops
