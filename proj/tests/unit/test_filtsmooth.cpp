#include "oracles.hpp"
#include "random_chain.hpp"
#include "pn/diffeq.hpp"
#include "pn/errors.hpp"
#include "pn/filtsmooth.hpp"

#include <gtest/gtest.h>

#include <cmath>

namespace {

using namespace pn::filtsmooth;

using oracle::random_problem;
using Problem = oracle::ChainProblem;

TEST(Predict, IdentityAndRandomWalk) {
  const GaussianBelief x(Vector::Ones(2), Matrix::Identity(2, 2));
  const GaussianBelief same = predict(x, GaussianTransition(Matrix::Identity(2, 2), Matrix::Zero(2, 2)));
  EXPECT_EQ(same.mean(), x.mean());
  EXPECT_EQ(same.cov(), x.cov());
  const GaussianBelief rw = predict(GaussianBelief::scalar(0, 1), GaussianTransition(Matrix::Ones(1, 1), 0.5 * Matrix::Ones(1, 1)));
  EXPECT_DOUBLE_EQ(rw.cov()(0, 0), 1.5);
  EXPECT_THROW(predict(x, GaussianTransition(Matrix::Identity(3, 3), Matrix::Zero(3, 3))), pn::ArgumentError);
}

TEST(Predict, MonteCarloPropagation) {
  std::mt19937_64 rng(1);
  const GaussianBelief x(oracle::random_vector(3, rng), oracle::random_spd(3, rng));
  const Matrix Phi = oracle::random_vector(9, rng).reshaped(3, 3);
  const Matrix Q = oracle::random_spd(3, rng, 0.3);
  const GaussianTransition t(Phi, Q);
  const GaussianBelief pred = predict(x, t);
  const Matrix xs = pn::randvars::sample(x, rng, 1000000);
  const Matrix ws = pn::randvars::sample(GaussianBelief(Vector::Zero(3), Q), rng, 1000000);
  const Matrix out = xs * Phi.transpose() + ws;
  const Vector mu = out.colwise().mean().transpose();
  const Matrix c = out.rowwise() - mu.transpose();
  const Matrix cov = c.transpose() * c / (out.rows() - 1.0);
  EXPECT_LE((mu - pred.mean()).cwiseAbs().maxCoeff(), 0.01 * std::max(1.0, pred.mean().cwiseAbs().maxCoeff()));
  EXPECT_LE((cov - pred.cov()).cwiseAbs().maxCoeff(), 0.01 * pred.cov().cwiseAbs().maxCoeff());
}

TEST(Update, ExactAndScalar) {
  const GaussianBelief x(Vector::Zero(2), Matrix::Identity(2, 2));
  const Vector c = (Vector(2) << 0.5, -1.0).finished();
  const UpdateResult exact = update(x, LinearObservationModel(Matrix::Identity(2, 2), Matrix::Zero(2, 2), c), Vector::Ones(2));
  EXPECT_LE((exact.posterior.mean() - (Vector::Ones(2) - c)).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_LE(exact.posterior.cov().cwiseAbs().maxCoeff(), 1e-14);

  const UpdateResult s = update(GaussianBelief::scalar(0, 1), LinearObservationModel(Matrix::Ones(1, 1), Matrix::Ones(1, 1)),
                                Vector::Ones(1));
  EXPECT_DOUBLE_EQ(s.posterior.mean()[0], 0.5);
  EXPECT_DOUBLE_EQ(s.posterior.cov()(0, 0), 0.5);
  EXPECT_DOUBLE_EQ(s.innovation.mean()[0], 1.0);
  EXPECT_DOUBLE_EQ(s.innovation.cov()(0, 0), 2.0);
}

TEST(Update, EqualsGenericConditioning) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    std::mt19937_64 rng(seed + 100);
    const GaussianBelief x(oracle::random_vector(4, rng), oracle::random_spd(4, rng));
    const Matrix H = oracle::random_vector(8, rng).reshaped(2, 4);
    const Matrix R = oracle::random_spd(2, rng);
    const Vector c = oracle::random_vector(2, rng);
    const Vector y = oracle::random_vector(2, rng);
    const GaussianBelief a = update(x, LinearObservationModel(H, R, c), y).posterior;
    const GaussianBelief b = pn::randvars::condition_on_linear_observation(x, H, R, y - c);
    EXPECT_LE((a.mean() - b.mean()).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LE((a.cov() - b.cov()).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(SquareRoot, MatchesVanillaOnWellConditionedSteps) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    std::mt19937_64 rng(seed + 200);
    const GaussianBelief x(oracle::random_vector(4, rng), oracle::random_spd(4, rng));
    const GaussianTransition t(oracle::random_vector(16, rng).reshaped(4, 4), oracle::random_spd(4, rng, 0.2));
    const LinearObservationModel m(oracle::random_vector(8, rng).reshaped(2, 4), oracle::random_spd(2, rng));
    const Vector y = oracle::random_vector(2, rng);
    const GaussianBelief vp = predict(x, t);
    const GaussianBelief sp = sqrt_predict(x, t);
    EXPECT_LE((sp.cov_factor() * sp.cov_factor().transpose() - vp.cov()).cwiseAbs().maxCoeff(), 1e-8);
    EXPECT_TRUE(sp.cov_factor().isLowerTriangular());
    EXPECT_TRUE((sp.cov_factor().diagonal().array() >= 0.0).all());
    const UpdateResult vu = update(vp, m, y);
    const UpdateResult su = sqrt_update(sp, m, y);
    const Matrix& L = su.posterior.cov_factor();
    EXPECT_LE((L * L.transpose() - vu.posterior.cov()).cwiseAbs().maxCoeff(), 1e-8);
    EXPECT_LE((su.posterior.mean() - vu.posterior.mean()).cwiseAbs().maxCoeff(), 1e-8);
    EXPECT_LE((su.innovation.cov() - vu.innovation.cov()).cwiseAbs().maxCoeff(), 1e-8);
  }
}

TEST(SquareRoot, IdentityStepKeepsFactor) {
  std::mt19937_64 rng(3);
  const GaussianBelief x(oracle::random_vector(3, rng), oracle::random_spd(3, rng));
  const Matrix L0 = x.cov_factor();
  const GaussianBelief y = sqrt_predict(x, GaussianTransition(Matrix::Identity(3, 3), Matrix::Zero(3, 3)));
  EXPECT_LE((y.cov_factor().cwiseAbs() - L0.cwiseAbs()).cwiseAbs().maxCoeff(), 1e-12);
}

// IWP q = 4, h = 1e-3: predicted covariances with condition number >= 1e14.
TEST(SquareRoot, StaysPSDOnIllConditionedIWP) {
  const pn::diffeq::IWPPrior prior(4, 1);
  const double h = 1e-3;
  const GaussianTransition t = pn::diffeq::iwp_discretize(prior, h);
  const LinearObservationModel m(prior.projection(1), Matrix::Zero(1, 1));
  GaussianBelief x(Vector::Zero(5), Matrix::Identity(5, 5));
  double worst_cond = 0.0;
  for (int k = 0; k < 50; ++k) {
    const GaussianBelief pred = sqrt_predict(x, t);
    const Eigen::SelfAdjointEigenSolver<Matrix> es(pred.cov());
    worst_cond = std::max(worst_cond, es.eigenvalues().maxCoeff() / std::max(es.eigenvalues().minCoeff(), 1e-300));
    x = sqrt_update(pred, m, Vector::Constant(1, std::sin(k * h))).posterior;
    EXPECT_TRUE((x.var().array() >= 0.0).all()) << "step " << k;
    EXPECT_TRUE(x.mean().allFinite());
  }
  EXPECT_GE(worst_cond, 1e14);
}

TEST(Filter, EmptyTrajectory) {
  const GaussianBelief x = GaussianBelief::scalar(1.0, 2.0);
  const FilterTrajectory traj = filter(x, {0.0}, {}, {});
  ASSERT_EQ(traj.size(), 1u);
  EXPECT_EQ(traj.filtered[0].mean(), x.mean());
  const auto smoothed = rts_smooth(traj);
  ASSERT_EQ(smoothed.size(), 1u);
  EXPECT_EQ(smoothed[0].cov(), x.cov());
}

TEST(FilterSmoother, ScalarMatchesBatchPosterior) {
  const Problem p = random_problem(1, 1, 10, 7);
  for (bool sq : {false, true}) {
    const FilterTrajectory traj = filter(p.initial, p.times, p.transitions, p.observations, {sq});
    const auto smoothed = rts_smooth(traj);
    const oracle::Marginals full = oracle::batch_posterior(p.chain, 10);
    for (int k = 0; k <= 10; ++k) {
      const oracle::Marginals upto = oracle::batch_posterior(p.chain, k);
      EXPECT_LE((traj.filtered[k].mean() - upto.mean[k]).cwiseAbs().maxCoeff(), 1e-8);
      EXPECT_LE((traj.filtered[k].cov() - upto.cov[k]).cwiseAbs().maxCoeff(), 1e-8);
      EXPECT_LE((smoothed[k].mean() - full.mean[k]).cwiseAbs().maxCoeff(), 1e-8);
      EXPECT_LE((smoothed[k].cov() - full.cov[k]).cwiseAbs().maxCoeff(), 1e-8);
    }
    EXPECT_EQ(smoothed.back().mean(), traj.filtered.back().mean());
    EXPECT_EQ(smoothed.back().cov(), traj.filtered.back().cov());
  }
}

TEST(FilterSmoother, MultivariateWithMissingData) {
  const Problem p = random_problem(6, 3, 12, 8, 3);
  const FilterTrajectory traj = filter(p.initial, p.times, p.transitions, p.observations, {true});
  const auto smoothed = rts_smooth(traj);
  const oracle::Marginals full = oracle::batch_posterior(p.chain, 12);
  for (int k = 0; k <= 12; ++k) {
    EXPECT_LE((smoothed[k].mean() - full.mean[k]).cwiseAbs().maxCoeff(), 1e-8) << k;
    EXPECT_LE((smoothed[k].cov() - full.cov[k]).cwiseAbs().maxCoeff(), 1e-8) << k;
  }
  EXPECT_FALSE(traj.innovations[3].has_value());
  EXPECT_TRUE(traj.innovations[1].has_value());
}

TEST(Filter, AllMissingIsPurePrediction) {
  // Random-walk dynamics: without data the covariance can only grow.
  Problem p = random_problem(2, 1, 6, 9, 1);
  for (auto& t : p.transitions) t = GaussianTransition(Matrix::Identity(2, 2), t.Q(), t.drift());
  const FilterTrajectory traj = filter(p.initial, p.times, p.transitions, p.observations);
  for (std::size_t k = 1; k < traj.size(); ++k) {
    EXPECT_GE(traj.filtered[k].cov().trace(), traj.filtered[k - 1].cov().trace() - 1e-12);
    EXPECT_EQ(traj.filtered[k].mean(), traj.predicted[k].mean());
  }
}

TEST(Filter, RejectsInconsistentInput) {
  const Problem p = random_problem(2, 1, 3, 10);
  std::vector<double> bad_times{0.0, 0.2, 0.1, 0.3};
  EXPECT_THROW(filter(p.initial, bad_times, p.transitions, p.observations), pn::ArgumentError);
  EXPECT_THROW(filter(p.initial, {0.0, 0.1}, p.transitions, p.observations), pn::ArgumentError);
}

TEST(Smoother, DeterministicChainFollowsPropagation) {
  const Matrix Phi = (Matrix(2, 2) << 1.0, 0.1, 0.0, 1.0).finished();
  const GaussianBelief x0 = GaussianBelief::point((Vector(2) << 1.0, 2.0).finished());
  std::vector<GaussianTransition> ts(5, GaussianTransition(Phi, Matrix::Zero(2, 2)));
  std::vector<double> times{0, 1, 2, 3, 4, 5};
  const FilterTrajectory traj = filter(x0, times, ts, std::vector<std::optional<Observation>>(5));
  const auto smoothed = rts_smooth(traj);
  Vector m = x0.mean();
  for (int k = 0; k <= 5; ++k) {
    EXPECT_LE((smoothed[k].mean() - m).cwiseAbs().maxCoeff(), 1e-14);
    m = Phi * m;
  }
  std::mt19937_64 rng(1);
  const auto draws = sample_posterior(traj, smoothed, rng, 3);
  for (const Matrix& d : draws) {
    Vector mm = x0.mean();
    for (int k = 0; k <= 5; ++k) {
      EXPECT_LE((d.row(k).transpose() - mm).cwiseAbs().maxCoeff(), 1e-12);
      mm = Phi * mm;
    }
  }
}

TEST(SamplePosterior, MarginalsAndLagCorrelation) {
  const Problem p = random_problem(1, 1, 5, 11);
  const FilterTrajectory traj = filter(p.initial, p.times, p.transitions, p.observations);
  const auto smoothed = rts_smooth(traj);
  std::mt19937_64 rng(12);
  const int count = 100000;
  const auto draws = sample_posterior(traj, smoothed, rng, count);
  ASSERT_EQ(draws.size(), static_cast<std::size_t>(count));
  Matrix paths(count, 6);
  for (int i = 0; i < count; ++i) paths.row(i) = draws[i].col(0).transpose();
  const Vector mu = paths.colwise().mean().transpose();
  const Matrix c = paths.rowwise() - mu.transpose();
  const Matrix cov = c.transpose() * c / (count - 1.0);
  for (int k = 0; k <= 5; ++k) {
    const double sd = std::sqrt(smoothed[k].cov()(0, 0));
    EXPECT_LE(std::abs(mu[k] - smoothed[k].mean()[0]), 0.02 * std::max(sd, std::abs(smoothed[k].mean()[0])));
    EXPECT_NEAR(std::sqrt(cov(k, k)), sd, 0.02 * sd);
  }
  for (int k = 0; k < 5; ++k) {
    const double emp = cov(k, k + 1) / std::sqrt(cov(k, k) * cov(k + 1, k + 1));
    const oracle::Joint j = oracle::batch_joint(p.chain, 5);
    const double want = j.cov(k, k + 1) / std::sqrt(j.cov(k, k) * j.cov(k + 1, k + 1));
    EXPECT_NEAR(emp, want, 0.03 * std::max(std::abs(want), 0.1)) << k;
  }
  std::mt19937_64 r1(5), r2(5);
  const auto a = sample_posterior(traj, smoothed, r1, 4);
  const auto b = sample_posterior(traj, smoothed, r2, 4);
  for (int i = 0; i < 4; ++i) EXPECT_EQ(a[i], b[i]);
}

// Predicting over h then h' equals predicting over h + h' for IWP transitions.
TEST(Filter, MissingStepsCommuteWithMerging) {
  const pn::diffeq::IWPPrior prior(2, 1);
  std::mt19937_64 rng(13);
  const GaussianBelief x(oracle::random_vector(3, rng), oracle::random_spd(3, rng));
  const FilterTrajectory two = filter(x, {0.0, 0.3, 0.7},
                                      {pn::diffeq::iwp_discretize(prior, 0.3), pn::diffeq::iwp_discretize(prior, 0.4)},
                                      std::vector<std::optional<Observation>>(2));
  const GaussianBelief one = predict(x, pn::diffeq::iwp_discretize(prior, 0.7));
  EXPECT_LE((two.filtered.back().mean() - one.mean()).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_LE((two.filtered.back().cov() - one.cov()).cwiseAbs().maxCoeff(), 1e-10);
}

}  // namespace
