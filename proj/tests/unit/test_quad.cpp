#include "quad_oracles.hpp"
#include "pn/errors.hpp"
#include "pn/quad.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

namespace {

using namespace pn::quad;

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Index>(v.size()));
  Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

TEST(KernelMean, GaussianCentered) {
  const SquaredExpKernel k = SquaredExpKernel::isotropic(1, 1.0);
  const Measure mu = GaussianMeasure{vec({0.0}), vec({1.0})};
  const double z = kernel_mean(k, mu, vec({0.0}));
  const double ref = oracle::kernel_mean_numeric(k.lengthscales, 1.0, oracle::gaussian_axes(vec({0.0}), vec({1.0})), vec({0.0}));
  EXPECT_NEAR(z, ref, 1e-10);
  EXPECT_NEAR(z, 1.0 / std::sqrt(2.0), 1e-12);
}

TEST(KernelMean, WideLebesgueBox) {
  const SquaredExpKernel k = SquaredExpKernel::isotropic(1, 1.0);
  const Measure mu = LebesgueBox{vec({-10.0}), vec({10.0}), false};
  const double z = kernel_mean(k, mu, vec({0.0}));
  const double ref = oracle::kernel_mean_numeric(k.lengthscales, 1.0, oracle::box_axes(vec({-10.0}), vec({10.0}), false), vec({0.0}));
  EXPECT_LE(std::abs(z - ref), 1e-8 * ref);
  EXPECT_NEAR(z, std::sqrt(2.0 * std::numbers::pi), 1e-12);
}

TEST(KernelMean, VanishingBox) {
  const SquaredExpKernel k = SquaredExpKernel::isotropic(1, 1.0);
  double prev = std::numeric_limits<double>::infinity();
  for (double w : {1.0, 1e-2, 1e-4, 1e-8}) {
    const double z = kernel_mean(k, LebesgueBox{vec({0.3}), vec({0.3 + w}), false}, vec({0.0}));
    EXPECT_LT(z, prev);
    prev = z;
  }
  EXPECT_LT(prev, 1e-7);
}

TEST(KernelMean, RandomGaussianCasesMatchOracle) {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int c = 0; c < 20; ++c) {
    const Index d = 1 + c % 2;
    Vector ell(d), m(d), V(d), x(d);
    for (Index i = 0; i < d; ++i) {
      ell[i] = 0.2 + 1.8 * u(rng);
      m[i] = -1.0 + 2.0 * u(rng);
      V[i] = 0.1 + 1.9 * u(rng);
      x[i] = m[i] - 2.0 + 4.0 * u(rng);
    }
    const double sf2 = 0.5 + 1.5 * u(rng);
    const double z = kernel_mean(SquaredExpKernel{ell, sf2}, GaussianMeasure{m, V}, x);
    const double ref = oracle::kernel_mean_numeric(ell, sf2, oracle::gaussian_axes(m, V), x);
    EXPECT_LE(std::abs(z - ref), 1e-8 * std::abs(ref)) << "case " << c;
  }
}

TEST(KernelMean, RandomBoxCasesMatchOracle) {
  std::mt19937_64 rng(32);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int c = 0; c < 20; ++c) {
    const Index d = 1 + c % 2;
    Vector ell(d), a(d), b(d), x(d);
    for (Index i = 0; i < d; ++i) {
      ell[i] = 0.1 + 1.9 * u(rng);
      a[i] = -2.0 + 2.0 * u(rng);
      b[i] = a[i] + 0.05 + 3.0 * u(rng);
      x[i] = a[i] - 1.0 + (b[i] - a[i] + 2.0) * u(rng);
    }
    const double sf2 = 0.5 + 1.5 * u(rng);
    const bool normalize = c % 3 == 0;
    const double z = kernel_mean(SquaredExpKernel{ell, sf2}, LebesgueBox{a, b, normalize}, x);
    const double ref = oracle::kernel_mean_numeric(ell, sf2, oracle::box_axes(a, b, normalize), x);
    EXPECT_LE(std::abs(z - ref), 1e-8 * std::abs(ref)) << "case " << c;
  }
}

TEST(KernelMean, FarTailStaysAccurate) {
  const SquaredExpKernel k = SquaredExpKernel::isotropic(1, 0.3);
  const Vector x = vec({4.0});
  const double z = kernel_mean(k, LebesgueBox{vec({0.0}), vec({1.0}), false}, x);
  const double ref = oracle::kernel_mean_numeric(k.lengthscales, 1.0, oracle::box_axes(vec({0.0}), vec({1.0}), false), x);
  EXPECT_GT(z, 0.0);
  EXPECT_LE(std::abs(z - ref), 1e-8 * ref);
}

TEST(InitialError, GaussianUnit) {
  const SquaredExpKernel k = SquaredExpKernel::isotropic(1, 1.0);
  const GaussianMeasure mu{vec({0.0}), vec({1.0})};
  const double c = initial_error(k, mu);
  const double ref = oracle::initial_error_numeric(k.lengthscales, 1.0, oracle::gaussian_axes(mu.mean, mu.var));
  EXPECT_LE(std::abs(c - ref), 1e-6 * ref);
  EXPECT_NEAR(c, 1.0 / std::sqrt(3.0), 1e-12);
}

TEST(InitialError, LinearInOutputScale) {
  for (const Measure& mu : {Measure(GaussianMeasure{vec({0.2, -0.1}), vec({0.5, 2.0})}),
                            Measure(LebesgueBox{vec({0.0, 1.0}), vec({0.3, 4.0}), true})}) {
    const double c1 = initial_error(SquaredExpKernel{vec({0.7, 1.3}), 1.5}, mu);
    const double c4 = initial_error(SquaredExpKernel{vec({0.7, 1.3}), 6.0}, mu);
    EXPECT_EQ(c4, 4.0 * c1);
  }
}

TEST(InitialError, NormalizedBoxTranslationInvariant) {
  const SquaredExpKernel k = SquaredExpKernel::isotropic(1, 0.4);
  const double c0 = initial_error(k, LebesgueBox{vec({0.0}), vec({1.5}), true});
  for (double shift : {-7.0, 0.25, 3.0, 100.0}) {
    const double c = initial_error(k, LebesgueBox{vec({shift}), vec({shift + 1.5}), true});
    EXPECT_LE(std::abs(c - c0), 1e-12 * c0) << shift;
  }
}

TEST(InitialError, RandomCasesMatchDoubleIntegral) {
  std::mt19937_64 rng(33);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int c = 0; c < 20; ++c) {
    const Index d = c < 16 ? 1 : 2;
    Vector ell(d), a(d), b(d), m(d), V(d);
    for (Index i = 0; i < d; ++i) {
      ell[i] = 0.2 + 1.8 * u(rng);
      a[i] = -1.0 + u(rng);
      // Widths straddle the lengthscale so both evaluation branches are hit.
      b[i] = a[i] + ell[i] * (0.1 + 3.0 * u(rng));
      m[i] = -1.0 + 2.0 * u(rng);
      V[i] = 0.1 + 1.9 * u(rng);
    }
    const double sf2 = 0.5 + 1.5 * u(rng);
    const bool normalize = c % 2 == 0;
    const double cb = initial_error(SquaredExpKernel{ell, sf2}, LebesgueBox{a, b, normalize});
    const double rb = oracle::initial_error_numeric(ell, sf2, oracle::box_axes(a, b, normalize));
    EXPECT_LE(std::abs(cb - rb), 1e-6 * rb) << "box case " << c;
    const double cg = initial_error(SquaredExpKernel{ell, sf2}, GaussianMeasure{m, V});
    const double rg = oracle::initial_error_numeric(ell, sf2, oracle::gaussian_axes(m, V));
    EXPECT_LE(std::abs(cg - rg), 1e-6 * rg) << "gaussian case " << c;
    EXPECT_GT(cb, 0.0);
    EXPECT_GT(cg, 0.0);
  }
}

TEST(Measure, Validation) {
  EXPECT_THROW(validate(LebesgueBox{vec({1.0}), vec({0.0}), false}), pn::ArgumentError);
  EXPECT_THROW(validate(GaussianMeasure{vec({0.0}), vec({-1.0})}), pn::ArgumentError);
  EXPECT_THROW(validate(GaussianMeasure{vec({0.0, 1.0}), vec({1.0})}), pn::ArgumentError);
  EXPECT_THROW(SquaredExpKernel::isotropic(1, -1.0).validate(), pn::ArgumentError);
  EXPECT_THROW(kernel_mean(SquaredExpKernel::isotropic(2, 1.0), GaussianMeasure{vec({0.0}), vec({1.0})}, vec({0.0})),
               pn::ArgumentError);
}

TEST(BQ, NoNodesGivesPrior) {
  const SquaredExpKernel k = SquaredExpKernel::isotropic(1, 1.0);
  const GaussianMeasure mu{vec({0.0}), vec({1.0})};
  const GaussianBelief F = bq_integrate(mu, Matrix(0, 1), Vector(0), k);
  EXPECT_EQ(F.mean()[0], 0.0);
  EXPECT_NEAR(F.cov()(0, 0), initial_error(k, mu), 1e-15);
}

TEST(BQ, SingleNodeInSpan) {
  const SquaredExpKernel k{vec({0.6, 1.1}), 2.0};
  const Measure mu = LebesgueBox{vec({0.0, 0.0}), vec({1.0, 2.0}), false};
  const Vector x0 = vec({0.4, 1.3});
  const QuadProblem prob{[&](const Vector& x) { return k(x, x0); }, mu};
  Matrix X(1, 2);
  X.row(0) = x0.transpose();
  const GaussianBelief F = bq_integrate(prob, X, k);
  const double z = kernel_mean(k, mu, x0);
  EXPECT_LE(std::abs(F.mean()[0] - z), 1e-9 * z);
  const double c = initial_error(k, mu);
  EXPECT_NEAR(F.cov()(0, 0), c - z * z / k(x0, x0), 1e-9 * c);
}

TEST(BQ, InSpanCombinationsExact) {
  std::mt19937_64 rng(34);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const SquaredExpKernel k = SquaredExpKernel::isotropic(1, 0.7, 1.3);
  const GaussianMeasure mu{vec({0.5}), vec({0.8})};
  Matrix X(12, 1);
  for (Index i = 0; i < 12; ++i) X(i, 0) = -2.0 + 5.0 * u(rng);
  Vector alpha(5);
  for (Index i = 0; i < 5; ++i) alpha[i] = -1.0 + 2.0 * u(rng);
  auto f = [&](const Vector& x) {
    double s = 0.0;
    for (Index i = 0; i < 5; ++i) s += alpha[i] * k(x, Vector(X.row(2 * i).transpose()));
    return s;
  };
  double exact = 0.0;
  for (Index i = 0; i < 5; ++i) exact += alpha[i] * kernel_mean(k, mu, Vector(X.row(2 * i).transpose()));
  BQState st;
  const GaussianBelief F = bq_integrate(QuadProblem{f, mu}, X, k, &st);
  EXPECT_LE(std::abs(F.mean()[0] - exact), 1e-9);
  EXPECT_NEAR(F.cov()(0, 0), std::max(0.0, st.c - st.z.dot(st.weights)), 1e-12);
}

TEST(BQ, SquareUnderStandardNormal) {
  const SquaredExpKernel k = SquaredExpKernel::isotropic(1, 1.0);
  Matrix X(30, 1);
  for (Index i = 0; i < 30; ++i) X(i, 0) = -5.0 + 10.0 * static_cast<double>(i) / 29.0;
  const GaussianBelief F =
      bq_integrate(QuadProblem{[](const Vector& x) { return x[0] * x[0]; }, GaussianMeasure{vec({0.0}), vec({1.0})}}, X, k);
  EXPECT_LE(std::abs(F.mean()[0] - 1.0), 1e-3);
  EXPECT_LE(std::abs(F.mean()[0] - 1.0), 3.0 * std::sqrt(F.cov()(0, 0)));
}

TEST(BQ, VarianceDecreasesWithNewNodes) {
  std::mt19937_64 rng(35);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const SquaredExpKernel k{vec({0.5, 0.8}), 1.0};
  const Measure mu = LebesgueBox{vec({0.0, 0.0}), vec({2.0, 1.0}), true};
  Matrix X(15, 2);
  for (Index i = 0; i < 15; ++i) X.row(i) << 2.0 * u(rng), u(rng);
  const Vector values = Vector::Zero(15);
  double prev = initial_error(k, mu);
  for (Index n = 1; n <= 15; ++n) {
    const double v = bq_integrate(mu, X.topRows(n), values.head(n), k).cov()(0, 0);
    EXPECT_GE(v, 0.0);
    EXPECT_LT(v, prev + 1e-12);
    EXPECT_LT(v, prev) << n;
    prev = v;
  }
}

TEST(BQ, DuplicateNodesSurviveJitter) {
  const SquaredExpKernel k = SquaredExpKernel::isotropic(1, 1.0);
  Matrix X(3, 1);
  X << 0.1, 0.1, 0.5;
  BQState st;
  const GaussianBelief F = bq_integrate(GaussianMeasure{vec({0.0}), vec({1.0})}, X, vec({1.0, 1.0, 2.0}), k, &st);
  EXPECT_GT(st.jitter, 0.0);
  EXPECT_TRUE(std::isfinite(F.mean()[0]));
}

TEST(BQ, RejectsNodesOutsideBox) {
  const SquaredExpKernel k = SquaredExpKernel::isotropic(1, 1.0);
  Matrix X(1, 1);
  X << 1.5;
  EXPECT_THROW(bq_integrate(LebesgueBox{vec({0.0}), vec({1.0}), false}, X, vec({1.0}), k), pn::ArgumentError);
}

TEST(BMC, ConstantOnUnitBox) {
  std::mt19937_64 rng(36);
  const QuadProblem prob{[](const Vector&) { return 3.0; }, LebesgueBox{vec({0.0}), vec({1.0}), true}};
  const GaussianBelief F = bayesian_monte_carlo(prob, 50, SquaredExpKernel::isotropic(1, 1.0), rng);
  EXPECT_LE(std::abs(F.mean()[0] - 3.0), 1e-2);
}

TEST(BMC, SeedDeterminism) {
  const QuadProblem prob{[](const Vector& x) { return std::sin(x[0]) + x[1]; },
                         GaussianMeasure{vec({0.0, 1.0}), vec({1.0, 0.5})}};
  std::mt19937_64 r1(99), r2(99);
  const GaussianBelief a = bayesian_monte_carlo(prob, 20, SquaredExpKernel::isotropic(2, 1.0), r1);
  const GaussianBelief b = bayesian_monte_carlo(prob, 20, SquaredExpKernel::isotropic(2, 1.0), r2);
  EXPECT_EQ(a.mean()[0], b.mean()[0]);
  EXPECT_EQ(a.cov()(0, 0), b.cov()(0, 0));
}

TEST(BMC, IdentityUnderGaussianIsCalibrated) {
  std::mt19937_64 rng(37);
  const QuadProblem prob{[](const Vector& x) { return x[0]; }, GaussianMeasure{vec({0.0}), vec({1.0})}};
  const GaussianBelief F = bayesian_monte_carlo(prob, 20, SquaredExpKernel::isotropic(1, 1.0), rng);
  EXPECT_LE(std::abs(F.mean()[0]), 3.0 * std::sqrt(F.cov()(0, 0)));
}

TEST(BMC, UnnormalizedBoxScalesByVolume) {
  std::mt19937_64 rng(38);
  const QuadProblem prob{[](const Vector&) { return 1.0; }, LebesgueBox{vec({0.0}), vec({4.0}), false}};
  const GaussianBelief F = bayesian_monte_carlo(prob, 60, SquaredExpKernel::isotropic(1, 1.0), rng);
  EXPECT_NEAR(F.mean()[0], 4.0, 4e-2);
}

TEST(BMC, ErrorDecreasesWithSampleSize) {
  const auto f = [](const Vector& x) { return std::exp(std::sin(3.0 * x[0])); };
  const double exact = oracle::integrate([](double t) { return std::exp(std::sin(3.0 * t)); }, 0.0, 1.0);
  const QuadProblem prob{f, LebesgueBox{vec({0.0}), vec({1.0}), false}};
  const SquaredExpKernel k = SquaredExpKernel::isotropic(1, 0.3);
  int wins = 0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    std::mt19937_64 r8(seed), r64(seed);
    const double e8 = std::abs(bayesian_monte_carlo(prob, 8, k, r8).mean()[0] - exact);
    const double e64 = std::abs(bayesian_monte_carlo(prob, 64, k, r64).mean()[0] - exact);
    if (e64 < e8) ++wins;
  }
  EXPECT_GE(wins, 4);
}

// Profile log likelihood computed directly from a dense Cholesky.
double profile_loglik(const Matrix& X, const Vector& y, double ell) {
  const Index n = X.rows();
  Matrix K(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) K(i, j) = std::exp(-0.5 * (X.row(i) - X.row(j)).squaredNorm() / (ell * ell));
  K.diagonal().array() += 1e-10;
  const Eigen::LLT<Matrix> llt(K);
  if (llt.info() != Eigen::Success) return -std::numeric_limits<double>::infinity();
  const Matrix L = llt.matrixL();
  const double s2 = y.dot(llt.solve(y)) / static_cast<double>(n);
  return -0.5 * static_cast<double>(n) * std::log(s2) - L.diagonal().array().log().sum();
}

TEST(OptimizeLengthscale, RecoversGridArgmax) {
  std::mt19937_64 rng(40);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> u(0.0, 5.0);
  Matrix X(40, 1);
  for (Index i = 0; i < 40; ++i) X(i, 0) = u(rng);
  Matrix K = SquaredExpKernel::isotropic(1, 0.5).gram(X);
  K.diagonal().array() += 1e-8;
  Vector w(40);
  for (Index i = 0; i < 40; ++i) w[i] = normal(rng);
  const Vector y = K.llt().matrixL() * w;
  const LengthscaleFit fit = optimize_lengthscale(X, y);
  ASSERT_EQ(fit.candidates.size(), 25u);
  std::size_t best = 0;
  double best_ll = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < fit.candidates.size(); ++i) {
    const double ll = profile_loglik(X, y, fit.candidates[i]);
    if (ll > best_ll) {
      best_ll = ll;
      best = i;
    }
  }
  const double ratio = std::pow(10.0, 4.0 / 24.0);
  const double chosen = fit.kernel.lengthscales[0];
  EXPECT_LE(std::abs(std::log(chosen / fit.candidates[best])), std::log(ratio) * 1.001);
  EXPECT_LE(std::abs(std::log(chosen / 0.5)), 2.0 * std::log(ratio) * 1.001);
  EXPECT_FALSE(fit.warning.has_value());
}

TEST(OptimizeLengthscale, SingleCandidateAndOutputScaling) {
  std::mt19937_64 rng(41);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Matrix X(15, 2);
  Vector y(15);
  for (Index i = 0; i < 15; ++i) {
    X.row(i) << u(rng), u(rng);
    y[i] = std::sin(2.0 * X(i, 0)) + X(i, 1);
  }
  const LengthscaleFit one = optimize_lengthscale(X, y, std::vector<double>{0.37});
  EXPECT_EQ(one.kernel.lengthscales[0], 0.37);
  EXPECT_EQ(one.kernel.lengthscales[1], 0.37);
  const LengthscaleFit a = optimize_lengthscale(X, y);
  const LengthscaleFit b = optimize_lengthscale(X, Vector(10.0 * y));
  EXPECT_EQ(a.kernel.lengthscales[0], b.kernel.lengthscales[0]);
  EXPECT_NEAR(b.kernel.output_scale, 100.0 * a.kernel.output_scale, 1e-9 * b.kernel.output_scale);
}

TEST(OptimizeLengthscale, IdenticalValuesWarn) {
  Matrix X(4, 1);
  X << 0.0, 1.0, 2.0, 3.0;
  const LengthscaleFit fit = optimize_lengthscale(X, Vector::Constant(4, 2.0));
  EXPECT_TRUE(fit.warning.has_value());
  EXPECT_EQ(fit.kernel.lengthscales[0], *std::min_element(fit.candidates.begin(), fit.candidates.end()));
  EXPECT_THROW(optimize_lengthscale(Matrix::Zero(2, 1), vec({1.0, 2.0})), pn::ArgumentError);
}

}  // namespace
