#include "pn/linalg.hpp"
#include "pn/problems.hpp"

#include <benchmark/benchmark.h>

namespace {

void BM_ProbLinSolve(benchmark::State& state) {
  const auto n = static_cast<Eigen::Index>(state.range(0));
  const auto sys = pn::problems::random_spd_system(n, 100.0, 1);
  const pn::linalg::LinearSystem ls(pn::linops::dense(sys.A, {true, true}), sys.b);
  for (auto _ : state) {
    auto sol = pn::linalg::problinsolve(ls);
    benchmark::DoNotOptimize(sol.x.mean().data());
  }
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_ProbLinSolve)->RangeMultiplier(2)->Range(16, 256)->Complexity();

void BM_MatrixBasedUpdate(benchmark::State& state) {
  const auto n = static_cast<Eigen::Index>(state.range(0));
  const auto sys = pn::problems::random_spd_system(n, 10.0, 2);
  const Eigen::MatrixXd S = Eigen::MatrixXd::Identity(n, n).leftCols(n / 2);
  const Eigen::MatrixXd Y = sys.A * S;
  const pn::randvars::MatrixGaussianBelief prior(Eigen::MatrixXd::Identity(n, n), Eigen::MatrixXd::Identity(n, n));
  for (auto _ : state) {
    auto post = pn::linalg::matrix_based_update(prior, S, Y);
    benchmark::DoNotOptimize(post.mean().data());
  }
}
BENCHMARK(BM_MatrixBasedUpdate)->Arg(16)->Arg(64);

}  // namespace
