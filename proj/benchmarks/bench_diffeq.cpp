#include "pn/diffeq.hpp"
#include "pn/problems.hpp"

#include <benchmark/benchmark.h>

namespace {

void BM_SolveIVP(benchmark::State& state, const std::string& name, pn::diffeq::Linearization mode, int q) {
  const pn::diffeq::IVP ivp = pn::problems::make_ivp(pn::problems::builtin(name));
  pn::diffeq::SolveConfig cfg;
  cfg.q = q;
  cfg.mode = mode;
  for (auto _ : state) {
    auto post = pn::diffeq::solve_ivp(ivp, cfg);
    benchmark::DoNotOptimize(post.diffusion());
    state.counters["steps"] = static_cast<double>(post.accepted_steps());
  }
}
BENCHMARK_CAPTURE(BM_SolveIVP, logistic_ek1, std::string("logistic"), pn::diffeq::Linearization::EK1, 2);
BENCHMARK_CAPTURE(BM_SolveIVP, logistic_ek0, std::string("logistic"), pn::diffeq::Linearization::EK0, 2);
BENCHMARK_CAPTURE(BM_SolveIVP, lotka_volterra_ek1, std::string("lotka_volterra"), pn::diffeq::Linearization::EK1, 3);

void BM_PerturbedRK4(benchmark::State& state) {
  const pn::diffeq::IVP ivp = pn::problems::make_ivp(pn::problems::builtin("linear_decay"));
  for (auto _ : state) {
    auto sol = pn::diffeq::perturbed_solve(ivp, pn::diffeq::RKMethod::RK4, 0.01, 1.0, state.range(0), 7);
    benchmark::DoNotOptimize(sol.members.data());
  }
}
BENCHMARK(BM_PerturbedRK4)->Arg(10)->Arg(100);

}  // namespace
