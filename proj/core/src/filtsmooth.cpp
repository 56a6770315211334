#include "pn/filtsmooth.hpp"

#include "pn/dense.hpp"
#include "pn/errors.hpp"

#include <sstream>

namespace pn::filtsmooth {

namespace {

Matrix psd_factor(const Matrix& C, const char* what) {
  try {
    return dense::robust_cholesky(C).L;
  } catch (const NumericalError& e) {
    throw ArgumentError(std::string(what) + " is not positive semidefinite: " + e.what());
  }
}

void check_state(const GaussianBelief& state, Index n, const char* where) {
  if (state.dim() != n) detail::throw_dimension_mismatch(where, n, state.dim());
}

void check_innovation(const Matrix& S, const char* where) {
  const double trace = S.trace();
  Eigen::SelfAdjointEigenSolver<Matrix> eig(S, Eigen::EigenvaluesOnly);
  const double min_eig = S.rows() > 0 ? eig.eigenvalues().minCoeff() : 1.0;
  if (!(trace > 0.0) || !(min_eig > 1e-14 * trace)) {
    std::ostringstream msg;
    msg << where << ": singular innovation covariance (smallest eigenvalue " << min_eig << ", trace " << trace
        << ")";
    throw NumericalError(msg.str());
  }
}

}  // namespace

GaussianTransition::GaussianTransition(Matrix Phi, Matrix Q, Vector drift)
    : Phi_(std::move(Phi)), Q_(std::move(Q)), drift_(std::move(drift)) {
  const Index n = Phi_.rows();
  if (Phi_.cols() != n) throw ArgumentError("GaussianTransition: Phi must be square");
  if (Q_.rows() != n || Q_.cols() != n) detail::throw_dimension_mismatch("GaussianTransition (Q)", n, Q_.rows());
  if (drift_.size() == 0) drift_ = Vector::Zero(n);
  if (drift_.size() != n) detail::throw_dimension_mismatch("GaussianTransition (drift)", n, drift_.size());
  Q_ = dense::symmetrize(Q_);
  Q_factor_ = psd_factor(Q_, "GaussianTransition: Q");
}

GaussianTransition GaussianTransition::from_noise_factor(Matrix Phi, const Matrix& Q_factor, Vector drift) {
  const Index n = Phi.rows();
  if (Phi.cols() != n) throw ArgumentError("GaussianTransition: Phi must be square");
  if (Q_factor.rows() != n || Q_factor.cols() != n) {
    detail::throw_dimension_mismatch("GaussianTransition (Q factor)", n, Q_factor.rows());
  }
  GaussianTransition t;
  t.Phi_ = std::move(Phi);
  t.Q_factor_ = dense::tria(Q_factor.transpose());
  t.Q_ = dense::symmetrize(t.Q_factor_ * t.Q_factor_.transpose());
  t.drift_ = drift.size() == 0 ? Vector::Zero(n) : std::move(drift);
  if (t.drift_.size() != n) detail::throw_dimension_mismatch("GaussianTransition (drift)", n, t.drift_.size());
  return t;
}

LinearObservationModel::LinearObservationModel(Matrix H, Matrix R, Vector offset)
    : H_(std::move(H)), R_(std::move(R)), offset_(std::move(offset)) {
  const Index m = H_.rows();
  if (R_.rows() != m || R_.cols() != m) detail::throw_dimension_mismatch("LinearObservationModel (R)", m, R_.rows());
  if (offset_.size() == 0) offset_ = Vector::Zero(m);
  if (offset_.size() != m) detail::throw_dimension_mismatch("LinearObservationModel (offset)", m, offset_.size());
  R_ = dense::symmetrize(R_);
  R_factor_ = psd_factor(R_, "LinearObservationModel: R");
}

GaussianBelief predict(const GaussianBelief& state, const GaussianTransition& t) {
  check_state(state, t.dim(), "predict");
  const Matrix& Phi = t.Phi();
  return GaussianBelief(Phi * state.mean() + t.drift(), Phi * state.cov() * Phi.transpose() + t.Q());
}

UpdateResult update(const GaussianBelief& state, const LinearObservationModel& m, const Vector& y) {
  check_state(state, m.state_dim(), "update");
  if (y.size() != m.obs_dim()) detail::throw_dimension_mismatch("update (y)", m.obs_dim(), y.size());
  const Matrix& H = m.H();
  const Vector z = y - H * state.mean() - m.offset();
  Matrix S = dense::symmetrize(H * state.cov() * H.transpose() + m.R());
  check_innovation(S, "update");
  GaussianBelief posterior = randvars::condition_on_linear_observation(state, H, m.R(), y - m.offset());
  return {std::move(posterior), GaussianBelief(z, std::move(S))};
}

GaussianBelief sqrt_predict(const GaussianBelief& state, const GaussianTransition& t) {
  check_state(state, t.dim(), "sqrt_predict");
  const Index n = t.dim();
  Matrix stacked(2 * n, n);
  stacked.topRows(n) = (t.Phi() * state.cov_factor()).transpose();
  stacked.bottomRows(n) = t.Q_factor().transpose();
  return GaussianBelief::from_factor(t.Phi() * state.mean() + t.drift(), dense::tria(stacked));
}

UpdateResult sqrt_update(const GaussianBelief& state, const LinearObservationModel& m, const Vector& y) {
  check_state(state, m.state_dim(), "sqrt_update");
  if (y.size() != m.obs_dim()) detail::throw_dimension_mismatch("sqrt_update (y)", m.obs_dim(), y.size());
  const Index n = m.state_dim();
  const Index k = m.obs_dim();
  const Matrix& L = state.cov_factor();

  // Pre-array [[L_R, H L], [0, L]]; its triangularization is
  // [[S_f, 0], [Kbar, L+]] with S_f S_f^T = S and Kbar = P H^T S_f^{-T}.
  Matrix pre = Matrix::Zero(k + n, k + n);
  pre.topLeftCorner(k, k) = m.R_factor();
  pre.topRightCorner(k, n) = m.H() * L;
  pre.bottomRightCorner(n, n) = L;
  const Matrix post = dense::tria(pre.transpose());

  const Matrix S_f = post.topLeftCorner(k, k);
  const Matrix Kbar = post.bottomLeftCorner(n, k);
  const Matrix L_plus = post.bottomRightCorner(n, n);

  check_innovation(dense::symmetrize(S_f * S_f.transpose()), "sqrt_update");
  const Vector z = y - m.H() * state.mean() - m.offset();
  const Vector w = S_f.triangularView<Eigen::Lower>().solve(z);
  return {GaussianBelief::from_factor(state.mean() + Kbar * w, L_plus), GaussianBelief::from_factor(z, S_f)};
}

FilterTrajectory filter(const GaussianBelief& initial, std::vector<double> times,
                        const std::vector<GaussianTransition>& transitions,
                        const std::vector<std::optional<Observation>>& observations, FilterOptions options) {
  const std::size_t steps = transitions.size();
  if (observations.size() != steps) {
    detail::throw_dimension_mismatch("filter (observations)", static_cast<long>(steps),
                                     static_cast<long>(observations.size()));
  }
  if (times.size() != steps + 1) {
    detail::throw_dimension_mismatch("filter (times)", static_cast<long>(steps + 1), static_cast<long>(times.size()));
  }
  for (std::size_t k = 1; k < times.size(); ++k) {
    if (!(times[k] > times[k - 1])) throw ArgumentError("filter: times must be strictly increasing");
  }

  FilterTrajectory traj;
  traj.times = std::move(times);
  traj.transitions = transitions;
  traj.filtered.reserve(steps + 1);
  traj.predicted.reserve(steps + 1);
  traj.filtered.push_back(initial);
  traj.predicted.push_back(initial);
  traj.innovations.emplace_back(std::nullopt);

  for (std::size_t k = 0; k < steps; ++k) {
    GaussianBelief pred = options.square_root ? sqrt_predict(traj.filtered.back(), transitions[k])
                                              : predict(traj.filtered.back(), transitions[k]);
    if (observations[k]) {
      const Observation& obs = *observations[k];
      UpdateResult up = options.square_root ? sqrt_update(pred, obs.model, obs.y) : update(pred, obs.model, obs.y);
      traj.filtered.push_back(std::move(up.posterior));
      traj.innovations.emplace_back(std::move(up.innovation));
    } else {
      traj.filtered.push_back(pred);
      traj.innovations.emplace_back(std::nullopt);
    }
    traj.predicted.push_back(std::move(pred));
  }
  return traj;
}

Matrix smoother_gain(const GaussianBelief& filtered, const GaussianBelief& predicted_next,
                     const GaussianTransition& t) {
  const Matrix cross = t.Phi() * filtered.cov();  // Phi P_f = (P_f Phi^T)^T
  if (dense::max_abs(predicted_next.cov()) == 0.0) return Matrix::Zero(filtered.dim(), t.dim());
  return dense::spd_solve(predicted_next.cov(), cross).transpose();
}

GaussianBelief rts_step(const GaussianBelief& filtered, const GaussianBelief& predicted_next,
                        const GaussianBelief& smoothed_next, const GaussianTransition& t) {
  const Index n = filtered.dim();
  check_state(filtered, t.dim(), "rts_step");
  const Matrix G = smoother_gain(filtered, predicted_next, t);
  const Vector mean = filtered.mean() + G * (smoothed_next.mean() - predicted_next.mean());
  Matrix stacked(3 * n, n);
  stacked.topRows(n) = ((Matrix::Identity(n, n) - G * t.Phi()) * filtered.cov_factor()).transpose();
  stacked.middleRows(n, n) = (G * t.Q_factor()).transpose();
  stacked.bottomRows(n) = (G * smoothed_next.cov_factor()).transpose();
  return GaussianBelief::from_factor(mean, dense::tria(stacked));
}

std::vector<GaussianBelief> rts_smooth(const FilterTrajectory& traj) {
  const std::size_t N = traj.size();
  if (N == 0) return {};
  if (traj.filtered.size() != N || traj.predicted.size() != N || traj.transitions.size() + 1 != N) {
    throw ArgumentError("rts_smooth: incomplete trajectory");
  }
  std::vector<GaussianBelief> smoothed(traj.filtered.begin(), traj.filtered.end());
  for (std::size_t k = N - 1; k-- > 0;) {
    smoothed[k] = rts_step(traj.filtered[k], traj.predicted[k + 1], smoothed[k + 1], traj.transitions[k]);
  }
  return smoothed;
}

std::vector<Matrix> sample_posterior(const FilterTrajectory& traj, const std::vector<GaussianBelief>& smoothed,
                                     std::mt19937_64& rng, Index count) {
  const std::size_t N = traj.size();
  if (count < 1) throw ArgumentError("sample_posterior: count must be positive");
  if (smoothed.size() != N || N == 0) throw ArgumentError("sample_posterior: smoothing pass missing");
  const Index n = smoothed.back().dim();

  // x_k | x_{k+1} ~ N(m_f + G (x_{k+1} - m_pred), L_c L_c^T).
  std::vector<Matrix> gains(N - 1);
  std::vector<Matrix> cond_factors(N - 1);
  for (std::size_t k = 0; k + 1 < N; ++k) {
    const GaussianTransition& t = traj.transitions[k];
    gains[k] = smoother_gain(traj.filtered[k], traj.predicted[k + 1], t);
    Matrix stacked(2 * n, n);
    stacked.topRows(n) = ((Matrix::Identity(n, n) - gains[k] * t.Phi()) * traj.filtered[k].cov_factor()).transpose();
    stacked.bottomRows(n) = (gains[k] * t.Q_factor()).transpose();
    cond_factors[k] = dense::tria(stacked);
  }

  std::normal_distribution<double> normal(0.0, 1.0);
  auto draw = [&](Index dim) {
    Vector z(dim);
    for (Index i = 0; i < dim; ++i) z[i] = normal(rng);
    return z;
  };

  std::vector<Matrix> out;
  out.reserve(static_cast<std::size_t>(count));
  for (Index s = 0; s < count; ++s) {
    Matrix path(static_cast<Index>(N), n);
    Vector x = smoothed.back().mean() + smoothed.back().cov_factor() * draw(n);
    path.row(static_cast<Index>(N) - 1) = x.transpose();
    for (std::size_t k = N - 1; k-- > 0;) {
      x = traj.filtered[k].mean() + gains[k] * (x - traj.predicted[k + 1].mean()) + cond_factors[k] * draw(n);
      path.row(static_cast<Index>(k)) = x.transpose();
    }
    out.push_back(std::move(path));
  }
  return out;
}

}  // namespace pn::filtsmooth
