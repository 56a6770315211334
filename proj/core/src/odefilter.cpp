#include "pn/dense.hpp"
#include "pn/diffeq.hpp"
#include "pn/errors.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace pn::diffeq {

namespace {

using filtsmooth::rts_step;
using filtsmooth::sqrt_predict;
using filtsmooth::sqrt_update;

GaussianBelief scale_factor(const GaussianBelief& rv, double s) {
  return GaussianBelief::from_factor(rv.mean(), s * rv.cov_factor());
}

// One backward smoothing step across [t, t + h], run in T(h) coordinates.
GaussianBelief smooth_across(const IWPPrior& prior, double h, const GaussianBelief& filtered,
                             const GaussianBelief& smoothed_next) {
  const Preconditioner pre = precondition(prior, h);
  const Vector Tinv = pre.T.cwiseInverse();
  const GaussianBelief f_bar = scale_coordinates(filtered, Tinv);
  const GaussianBelief p_bar = sqrt_predict(f_bar, pre.step);
  const GaussianBelief s_bar = scale_coordinates(smoothed_next, Tinv);
  const GaussianBelief out_bar = rts_step(f_bar, p_bar, s_bar, pre.step);
  // Map the correction back rather than the mean itself, so components the
  // smoother leaves untouched keep their exact filtered values.
  Vector mean = filtered.mean() + pre.T.cwiseProduct(out_bar.mean() - f_bar.mean());
  return GaussianBelief::from_factor(std::move(mean), pre.T.asDiagonal() * out_bar.cov_factor());
}

std::string at_time(const char* what, double t) {
  std::ostringstream msg;
  msg.precision(17);
  msg << what << " at t=" << t;
  return msg.str();
}

}  // namespace

StepResult odefilter_step(const GaussianBelief& state, double t, const IVP& ivp, double h, Linearization mode,
                          const IWPPrior& prior) {
  if (!(h > 0.0)) throw ArgumentError("odefilter_step: step must be positive");
  if (state.dim() != prior.state_dim()) {
    detail::throw_dimension_mismatch("odefilter_step", prior.state_dim(), state.dim());
  }
  const Preconditioner pre = precondition(prior, h);
  const GaussianBelief x_bar = scale_coordinates(state, pre.T.cwiseInverse());
  const GaussianBelief pred_bar = sqrt_predict(x_bar, pre.step);
  const GaussianBelief predicted = scale_coordinates(pred_bar, pre.T);

  const double t_next = t + h;
  const LinearObservationModel model = ek_linearize(ivp, prior, predicted, t_next, mode);
  const Matrix H_bar = model.H() * pre.T.asDiagonal();
  const LinearObservationModel model_bar(H_bar, model.R(), model.offset());
  const filtsmooth::UpdateResult upd = sqrt_update(pred_bar, model_bar, Vector::Zero(prior.d));

  StepResult out{predicted, scale_coordinates(upd.posterior, pre.T), Vector(), {}};
  out.residual.z = upd.innovation.mean();
  out.residual.S_unit = upd.innovation.cov();
  if (!out.residual.z.allFinite() || !out.filtered.mean().allFinite()) {
    throw NumericalError(at_time("odefilter_step: non-finite state", t_next));
  }

  // Local diffusion from the residual against the process noise of this
  // step alone; the error is what that noise puts on the solution.
  const Matrix HL = H_bar * pre.step.Q_factor();
  const Matrix HQH = HL * HL.transpose();
  Eigen::LDLT<Matrix> ldlt(HQH);
  double sigma2 = 0.0;
  if (ldlt.info() == Eigen::Success && ldlt.isPositive()) {
    sigma2 = std::max(out.residual.z.dot(ldlt.solve(out.residual.z)) / static_cast<double>(prior.d), 0.0);
  }
  const Matrix E0L = prior.projection(0) * pre.T.asDiagonal() * pre.step.Q_factor();
  out.local_error = std::sqrt(sigma2) * E0L.rowwise().norm();
  return out;
}

std::vector<double> uniform_grid(double t0, double tmax, double h) {
  if (!(h > 0.0)) throw ArgumentError("uniform_grid: step must be positive");
  if (!(tmax > t0)) throw ArgumentError("uniform_grid: tmax must exceed t0");
  const double span = tmax - t0;
  const auto n = static_cast<long long>(std::ceil(span / h - 1e-9));
  if (n > 100000000LL) throw ResourceError("uniform_grid: too many steps");
  std::vector<double> grid;
  grid.reserve(static_cast<std::size_t>(n) + 1);
  for (long long k = 0; k < n; ++k) grid.push_back(t0 + static_cast<double>(k) * h);
  grid.push_back(tmax);
  return grid;
}

std::size_t ODEPosterior::rejected_steps() const noexcept {
  return static_cast<std::size_t>(
      std::count_if(step_log_.begin(), step_log_.end(), [](const StepLogEntry& e) { return !e.accepted; }));
}

GaussianBelief ODEPosterior::state_at(double t) const {
  const double t0 = grid_.front();
  const double t1 = grid_.back();
  if (!(t >= t0 && t <= t1)) {
    std::ostringstream msg;
    msg << "ODEPosterior: t=" << t << " outside [" << t0 << ", " << t1 << "]";
    throw ArgumentError(msg.str());
  }
  const auto it = std::lower_bound(grid_.begin(), grid_.end(), t);
  const auto k = static_cast<std::size_t>(it - grid_.begin());
  if (*it == t) return states_[k];
  // t lies in (grid[k-1], grid[k]): predict to t from the filtered state,
  // then condition on the smoothed state at grid[k].
  const double h1 = t - grid_[k - 1];
  const double h2 = grid_[k] - t;
  const Preconditioner pre = precondition(prior_, h1);
  const GaussianBelief f_bar = scale_coordinates(filtered_[k - 1], pre.T.cwiseInverse());
  const GaussianBelief at_t = scale_coordinates(sqrt_predict(f_bar, pre.step), pre.T);
  const GaussianBelief s = smooth_across(prior_, h2, at_t, smoothed_[k]);
  return scale_factor(s, std::sqrt(diffusion_));
}

GaussianBelief ODEPosterior::solution_at(double t) const {
  return randvars::affine_transform(state_at(t), prior_.projection(0));
}

ODEPosterior solve_ivp(const IVP& ivp, const SolveConfig& config) {
  const IWPPrior prior(config.q, ivp.dim(), 1.0);
  if (!(config.rtol >= 0.0) || !(config.atol >= 0.0) || config.rtol + config.atol <= 0.0) {
    throw ArgumentError("solve_ivp: tolerances must be nonnegative and not both zero");
  }
  ODEPosterior post(prior);
  const double t0 = ivp.t0();
  const double tmax = ivp.tmax();
  const double span = tmax - t0;
  const Matrix E0 = prior.projection(0);

  GaussianBelief state = taylor_init(ivp, prior, &post.warnings_);
  post.grid_.push_back(t0);
  post.filtered_.push_back(state);
  std::vector<ResidualRecord> residuals;

  if (config.grid) {
    const std::vector<double>& g = *config.grid;
    if (g.size() < 2 || g.front() != t0 || g.back() != tmax) {
      throw ArgumentError("solve_ivp: fixed grid must start at t0 and end at tmax");
    }
    for (std::size_t k = 1; k < g.size(); ++k) {
      const double h = g[k] - g[k - 1];
      if (!(h > 0.0)) throw ArgumentError("solve_ivp: fixed grid must be strictly increasing");
      StepResult step = odefilter_step(state, g[k - 1], ivp, h, config.mode, prior);
      post.step_log_.push_back({g[k - 1], h, true, 0.0});
      residuals.push_back(std::move(step.residual));
      state = step.filtered;
      post.grid_.push_back(g[k]);
      post.filtered_.push_back(step.filtered);
    }
  } else {
    const Vector& y0 = ivp.y0();
    const Vector f0 = ivp.f(y0, t0);
    double h = 0.0;
    if (config.initial_step) {
      h = *config.initial_step;
      if (!(h > 0.0)) throw ArgumentError("solve_ivp: initial step must be positive");
    } else {
      const Vector w = (config.atol + config.rtol * y0.array().abs()).matrix();
      const double d0 = std::sqrt((y0.array() / w.array()).square().mean());
      const double d1 = std::sqrt((f0.array() / w.array()).square().mean());
      h = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
    }
    h = std::min(h, span);
    double t = t0;
    const std::size_t max_attempts = 1000000;
    while (t < tmax) {
      if (post.step_log_.size() >= max_attempts) throw ResourceError(at_time("solve_ivp: step limit reached", t));
      if (h < 1e-14 * span) throw NumericalError(at_time("solve_ivp: step size underflow", t));
      double t_next = t + h;
      if (t_next >= tmax || tmax - t_next < 1e-12 * span) {
        t_next = tmax;
        h = tmax - t;
      }
      std::optional<StepResult> step;
      StepDecision decision;
      try {
        step = odefilter_step(state, t, ivp, h, config.mode, prior);
        const Vector y_old = E0 * state.mean();
        const Vector y_new = E0 * step->filtered.mean();
        const Vector reference = y_old.cwiseAbs().cwiseMax(y_new.cwiseAbs());
        decision = adapt_step(step->local_error, config.atol, config.rtol, reference, h, prior.q);
      } catch (const NumericalError&) {
        decision = {false, 0.2 * h, std::numeric_limits<double>::infinity()};
      }
      post.step_log_.push_back({t, h, decision.accept, decision.error_norm});
      if (decision.accept) {
        residuals.push_back(std::move(step->residual));
        state = step->filtered;
        t = t_next;
        post.grid_.push_back(t);
        post.filtered_.push_back(step->filtered);
      }
      h = decision.h_next;
    }
  }

  // Backward pass under unit diffusion.
  const std::size_t n = post.grid_.size();
  post.smoothed_.assign(n, post.filtered_.back());
  for (std::size_t k = n - 1; k-- > 0;) {
    post.smoothed_[k] = smooth_across(prior, post.grid_[k + 1] - post.grid_[k], post.filtered_[k], post.smoothed_[k + 1]);
  }

  post.diffusion_ = calibrate_diffusion(residuals);
  const double sigma = std::sqrt(post.diffusion_);
  post.states_.reserve(n);
  for (const GaussianBelief& s : post.smoothed_) post.states_.push_back(scale_factor(s, sigma));
  return post;
}

}  // namespace pn::diffeq
