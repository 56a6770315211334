#pragma once

#include "pn/randvars.hpp"

#include <optional>
#include <random>
#include <vector>

namespace pn::filtsmooth {

using randvars::GaussianBelief;
using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// x' = Phi x + drift + w, w ~ N(0, Q).
class GaussianTransition {
 public:
  GaussianTransition(Matrix Phi, Matrix Q, Vector drift = Vector());
  // Q = Q_factor Q_factor^T, supplied directly (no factorization of Q).
  static GaussianTransition from_noise_factor(Matrix Phi, const Matrix& Q_factor, Vector drift = Vector());

  Index dim() const noexcept { return Phi_.rows(); }
  const Matrix& Phi() const noexcept { return Phi_; }
  const Matrix& Q() const noexcept { return Q_; }
  const Matrix& Q_factor() const noexcept { return Q_factor_; }
  const Vector& drift() const noexcept { return drift_; }

 private:
  GaussianTransition() = default;
  Matrix Phi_;
  Matrix Q_;
  Matrix Q_factor_;
  Vector drift_;
};

// y = H x + offset + v, v ~ N(0, R).
class LinearObservationModel {
 public:
  LinearObservationModel(Matrix H, Matrix R, Vector offset = Vector());

  Index obs_dim() const noexcept { return H_.rows(); }
  Index state_dim() const noexcept { return H_.cols(); }
  const Matrix& H() const noexcept { return H_; }
  const Matrix& R() const noexcept { return R_; }
  const Matrix& R_factor() const noexcept { return R_factor_; }
  const Vector& offset() const noexcept { return offset_; }

 private:
  Matrix H_;
  Matrix R_;
  Matrix R_factor_;
  Vector offset_;
};

struct UpdateResult {
  GaussianBelief posterior;
  GaussianBelief innovation;  // N(z, S): residual z = y - H mean - offset, S = H cov H^T + R
};

GaussianBelief predict(const GaussianBelief& state, const GaussianTransition& t);
UpdateResult update(const GaussianBelief& state, const LinearObservationModel& m, const Vector& y);

// Square-root recursions: only triangular factors are propagated, via QR of
// stacked factors. Outputs carry a lower-triangular factor with nonnegative
// diagonal.
GaussianBelief sqrt_predict(const GaussianBelief& state, const GaussianTransition& t);
UpdateResult sqrt_update(const GaussianBelief& state, const LinearObservationModel& m, const Vector& y);

struct Observation {
  LinearObservationModel model;
  Vector y;
};

struct FilterTrajectory {
  std::vector<double> times;
  std::vector<GaussianBelief> filtered;
  std::vector<GaussianBelief> predicted;  // predicted[0] is the initial belief
  std::vector<GaussianTransition> transitions;
  std::vector<std::optional<GaussianBelief>> innovations;  // innovations[0] is always empty

  std::size_t size() const noexcept { return times.size(); }
};

struct FilterOptions {
  bool square_root = false;
};

// Forward Kalman recursion. times has one entry more than transitions;
// observations[k] (possibly empty) is assimilated after transitions[k].
FilterTrajectory filter(const GaussianBelief& initial, std::vector<double> times,
                        const std::vector<GaussianTransition>& transitions,
                        const std::vector<std::optional<Observation>>& observations, FilterOptions options = {});

// Smoother gain G = P_f Phi^T P_pred^{-1}, by a factor-based solve.
Matrix smoother_gain(const GaussianBelief& filtered, const GaussianBelief& predicted_next,
                     const GaussianTransition& t);

// One backward step of the Rauch-Tung-Striebel smoother. The smoothed
// covariance is assembled as the factor of
// (I - G Phi) P_f (I - G Phi)^T + G Q G^T + G P_s' G^T,
// which equals P_f + G (P_s' - P_pred) G^T without subtracting PSD matrices.
GaussianBelief rts_step(const GaussianBelief& filtered, const GaussianBelief& predicted_next,
                        const GaussianBelief& smoothed_next, const GaussianTransition& t);

std::vector<GaussianBelief> rts_smooth(const FilterTrajectory& traj);

// Joint posterior draws by backward sampling. Each returned matrix is
// (number of times) x (state dim).
std::vector<Matrix> sample_posterior(const FilterTrajectory& traj, const std::vector<GaussianBelief>& smoothed,
                                     std::mt19937_64& rng, Index count);

}  // namespace pn::filtsmooth
