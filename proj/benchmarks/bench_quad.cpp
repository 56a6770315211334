#include "pn/quad.hpp"

#include <benchmark/benchmark.h>

#include <cmath>

namespace {

using namespace pn::quad;

void BM_BayesianMonteCarlo(benchmark::State& state) {
  const QuadProblem prob{[](const Eigen::VectorXd& x) { return std::exp(std::sin(3.0 * x[0])) * x[1]; },
                         GaussianMeasure{Eigen::VectorXd::Zero(2), Eigen::VectorXd::Ones(2)}};
  const SquaredExpKernel k = SquaredExpKernel::isotropic(2, 0.8);
  for (auto _ : state) {
    std::mt19937_64 rng(3);
    auto F = bayesian_monte_carlo(prob, state.range(0), k, rng);
    benchmark::DoNotOptimize(F.mean().data());
  }
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_BayesianMonteCarlo)->RangeMultiplier(2)->Range(16, 512)->Complexity();

void BM_OptimizeLengthscale(benchmark::State& state) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const auto n = static_cast<Eigen::Index>(state.range(0));
  Eigen::MatrixXd X(n, 1);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    X(i, 0) = u(rng);
    y[i] = std::sin(6.0 * X(i, 0));
  }
  for (auto _ : state) {
    auto fit = optimize_lengthscale(X, y);
    benchmark::DoNotOptimize(fit.kernel.lengthscales.data());
  }
}
BENCHMARK(BM_OptimizeLengthscale)->Arg(32)->Arg(128);

}  // namespace
