#include "pn/dense.hpp"
#include "pn/diffeq.hpp"
#include "pn/errors.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <unsupported/Eigen/KroneckerProduct>

namespace pn::diffeq {

namespace {

double factorial(int k) {
  double out = 1.0;
  for (int i = 2; i <= k; ++i) out *= i;
  return out;
}

double binomial(int n, int k) { return factorial(n) / (factorial(k) * factorial(n - k)); }

Matrix lift(const Matrix& block, Index d) { return Eigen::kroneckerProduct(Matrix::Identity(d, d), block); }

Matrix fd_jacobian(const IVP& ivp, const Vector& y, double t) {
  const Index d = y.size();
  const double eps = 1e-6 * (1.0 + y.norm());
  Matrix J(d, d);
  Vector yp = y;
  Vector ym = y;
  for (Index k = 0; k < d; ++k) {
    yp[k] = y[k] + eps;
    ym[k] = y[k] - eps;
    J.col(k) = (ivp.f(yp, t) - ivp.f(ym, t)) / (2.0 * eps);
    yp[k] = y[k];
    ym[k] = y[k];
  }
  return J;
}

}  // namespace

IVP::IVP(VectorField f, double t0, double tmax, Vector y0, JacobianField jacobian)
    : f_(std::move(f)), jacobian_(std::move(jacobian)), t0_(t0), tmax_(tmax), y0_(std::move(y0)) {
  if (!f_) throw ArgumentError("IVP: vector field is required");
  if (!(tmax_ > t0_)) throw ArgumentError("IVP: tmax must exceed t0");
  if (y0_.size() == 0) throw ArgumentError("IVP: y0 must be nonempty");
  const Vector f0 = f_(y0_, t0_);
  if (f0.size() != y0_.size()) detail::throw_dimension_mismatch("IVP (f(y0, t0))", y0_.size(), f0.size());
  if (!f0.allFinite()) throw ArgumentError("IVP: f(y0, t0) is not finite");
}

Matrix IVP::jacobian(const Vector& y, double t) const {
  if (jacobian_) return jacobian_(y, t);
  return fd_jacobian(*this, y, t);
}

IWPPrior::IWPPrior(int q_, Index d_, double diffusion_) : q(q_), d(d_), diffusion(diffusion_) {
  if (q < 1 || q > 5) throw ArgumentError("IWPPrior: q must be in [1, 5], got " + std::to_string(q));
  if (d < 1) throw ArgumentError("IWPPrior: dimension must be positive");
  if (!(diffusion > 0.0)) throw ArgumentError("IWPPrior: diffusion must be positive");
}

Matrix IWPPrior::projection(int derivative) const {
  Matrix E = Matrix::Zero(d, state_dim());
  for (Index i = 0; i < d; ++i) E(i, index(i, derivative)) = 1.0;
  return E;
}

GaussianTransition iwp_discretize(const IWPPrior& prior, double h) {
  if (!(h > 0.0)) throw ArgumentError("iwp_discretize: step must be positive");
  const int q = prior.q;
  Matrix Phi = Matrix::Zero(q + 1, q + 1);
  for (int i = 0; i <= q; ++i) {
    for (int j = i; j <= q; ++j) Phi(i, j) = std::pow(h, j - i) / factorial(j - i);
  }
  // Q(h) = T Q_bar T^T; its factor is T chol(Q_bar), which stays accurate
  // when Q(h) itself is too ill-conditioned to factor directly.
  const Preconditioner pre = precondition(prior, h);
  const Matrix Q_factor = pre.T.asDiagonal() * pre.step.Q_factor();
  return GaussianTransition::from_noise_factor(lift(Phi, prior.d), Q_factor);
}

Preconditioner precondition(const IWPPrior& prior, double h) {
  if (!(h > 0.0)) throw ArgumentError("precondition: step must be positive");
  const int q = prior.q;
  Vector T1(q + 1);
  Matrix Phi_bar = Matrix::Zero(q + 1, q + 1);
  Matrix Q_bar(q + 1, q + 1);
  for (int i = 0; i <= q; ++i) {
    T1[i] = std::sqrt(h) * std::pow(h, q - i) / factorial(q - i);
    for (int j = 0; j <= q; ++j) {
      if (j >= i) Phi_bar(i, j) = binomial(q - i, q - j);
      Q_bar(i, j) = prior.diffusion / (2 * q + 1 - i - j);
    }
  }
  Eigen::LLT<Matrix> llt(Q_bar);
  const Matrix L1 = llt.matrixL();
  Vector T(prior.state_dim());
  for (Index k = 0; k < prior.d; ++k) T.segment(k * (q + 1), q + 1) = T1;
  return {T, GaussianTransition::from_noise_factor(lift(Phi_bar, prior.d), lift(L1, prior.d))};
}

GaussianBelief scale_coordinates(const GaussianBelief& rv, const Vector& scale) {
  if (scale.size() != rv.dim()) detail::throw_dimension_mismatch("scale_coordinates", rv.dim(), scale.size());
  // Row scaling by a positive diagonal keeps a lower-triangular factor lower triangular.
  return GaussianBelief::from_factor(scale.cwiseProduct(rv.mean()), scale.asDiagonal() * rv.cov_factor());
}

std::string to_string(Linearization mode) { return mode == Linearization::EK0 ? "ek0" : "ek1"; }

LinearObservationModel ek_linearize(const IVP& ivp, const IWPPrior& prior, const GaussianBelief& predicted, double t,
                                    Linearization mode) {
  if (predicted.dim() != prior.state_dim()) {
    detail::throw_dimension_mismatch("ek_linearize", prior.state_dim(), predicted.dim());
  }
  const Matrix E0 = prior.projection(0);
  const Matrix E1 = prior.projection(1);
  const Vector& mu = predicted.mean();
  const Vector y = E0 * mu;
  const Vector fy = ivp.f(y, t);
  if (!fy.allFinite()) {
    std::ostringstream msg;
    msg << "ek_linearize: non-finite vector field at t=" << t;
    throw NumericalError(msg.str());
  }
  Matrix H = E1;
  if (mode == Linearization::EK1) {
    const Matrix J = ivp.jacobian(y, t);
    if (!J.allFinite()) {
      std::ostringstream msg;
      msg << "ek_linearize: non-finite Jacobian at t=" << t;
      throw NumericalError(msg.str());
    }
    H -= J * E0;
  }
  const Vector residual = E1 * mu - fy;
  Vector offset = residual - H * mu;
  return LinearObservationModel(std::move(H), Matrix::Zero(prior.d, prior.d), std::move(offset));
}

double calibrate_diffusion(const std::vector<ResidualRecord>& residuals) {
  if (residuals.empty()) throw ArgumentError("calibrate_diffusion: need at least one residual");
  double acc = 0.0;
  Index count = 0;
  for (const ResidualRecord& r : residuals) {
    if (r.S_unit.rows() != r.z.size()) detail::throw_dimension_mismatch("calibrate_diffusion", r.z.size(), r.S_unit.rows());
    Eigen::LLT<Matrix> llt(r.S_unit);
    if (llt.info() != Eigen::Success) throw NumericalError("calibrate_diffusion: singular innovation covariance");
    acc += r.z.dot(llt.solve(r.z));
    count += r.z.size();
  }
  return std::max(acc / static_cast<double>(count), 0.0);
}

StepDecision adapt_step(const Vector& local_error, double atol, double rtol, const Vector& reference, double h, int q,
                        double max_step) {
  if (!(h > 0.0)) throw ArgumentError("adapt_step: step must be positive");
  if (reference.size() != local_error.size()) {
    detail::throw_dimension_mismatch("adapt_step", local_error.size(), reference.size());
  }
  const Vector weights = (atol + rtol * reference.array().abs()).matrix();
  const double E = std::sqrt((local_error.array() / weights.array()).square().mean());
  StepDecision out;
  out.error_norm = E;
  out.accept = E <= 1.0;
  double factor = 10.0;
  if (E > 0.0) factor = std::clamp(0.95 * std::pow(E, -1.0 / (q + 1)), 0.2, 10.0);
  if (!std::isfinite(E)) {
    out.accept = false;
    factor = 0.2;
  }
  out.h_next = std::min(h * factor, max_step);
  return out;
}

GaussianBelief taylor_init(const IVP& ivp, const IWPPrior& prior, std::vector<std::string>* warnings) {
  const int q = prior.q;
  const Index d = prior.d;
  if (ivp.dim() != d) detail::throw_dimension_mismatch("taylor_init", d, ivp.dim());
  const double t0 = ivp.t0();

  // g_1 = f; g_{j+1}(y, t) = (g_j(y + eps_j f(y, t), t + eps_j) - g_j(y, t)) / eps_j.
  // eps_1 = 1e-6 (1 + |y|); deeper levels use 1e-6^(1/j) so nested
  // differences do not drown in cancellation.
  std::function<Vector(int, const Vector&, double)> g = [&](int level, const Vector& y, double t) -> Vector {
    if (level == 1) return ivp.f(y, t);
    const int j = level - 1;
    const double eps = std::pow(1e-6, 1.0 / j) * (1.0 + y.norm());
    const Vector fy = ivp.f(y, t);
    return (g(j, y + eps * fy, t + eps) - g(j, y, t)) / eps;
  };

  Vector mean = Vector::Zero(prior.state_dim());
  Vector stddev = Vector::Zero(prior.state_dim());
  const Vector& y0 = ivp.y0();
  const Vector f0 = ivp.f(y0, t0);
  for (Index i = 0; i < d; ++i) {
    mean[prior.index(i, 0)] = y0[i];
    mean[prior.index(i, 1)] = f0[i];
  }
  for (int k = 2; k <= q; ++k) {
    const Vector dk = g(k, y0, t0);
    const double inflate = std::pow(10.0, k - 1);
    for (Index i = 0; i < d; ++i) {
      const Index idx = prior.index(i, k);
      if (std::isfinite(dk[i])) {
        mean[idx] = dk[i];
        stddev[idx] = inflate * 1e-6 * (1.0 + std::abs(dk[i]));
      } else {
        mean[idx] = 0.0;
        stddev[idx] = 1.0;
        if (warnings) {
          warnings->push_back("taylor_init: non-finite estimate for derivative " + std::to_string(k) +
                              " of dimension " + std::to_string(i) + "; using N(0, 1)");
        }
      }
    }
  }
  return GaussianBelief::from_factor(std::move(mean), Matrix(stddev.asDiagonal()));
}

}  // namespace pn::diffeq
