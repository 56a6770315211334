#include "pn/diffeq.hpp"
#include "pn/filtsmooth.hpp"

#include <benchmark/benchmark.h>

namespace {

using namespace pn::filtsmooth;

// Kalman filter plus RTS smoother on an IWP(2) prior with scalar position
// observations.
void run_chain(benchmark::State& state, bool square_root) {
  const auto steps = static_cast<std::size_t>(state.range(0));
  const pn::diffeq::IWPPrior prior(2, 1);
  const GaussianTransition t = pn::diffeq::iwp_discretize(prior, 0.1);
  const LinearObservationModel m(prior.projection(0), Matrix::Constant(1, 1, 1e-2));
  std::vector<double> times(steps + 1);
  std::vector<GaussianTransition> transitions(steps, t);
  std::vector<std::optional<Observation>> obs;
  for (std::size_t k = 0; k <= steps; ++k) times[k] = 0.1 * static_cast<double>(k);
  for (std::size_t k = 0; k < steps; ++k) obs.push_back(Observation{m, Vector::Constant(1, std::sin(0.1 * k))});
  const GaussianBelief init(Vector::Zero(3), Matrix::Identity(3, 3));
  for (auto _ : state) {
    const FilterTrajectory traj = filter(init, times, transitions, obs, {square_root});
    auto smoothed = rts_smooth(traj);
    benchmark::DoNotOptimize(smoothed.back().mean().data());
  }
}

void BM_FilterSmooth(benchmark::State& state) { run_chain(state, false); }
void BM_FilterSmoothSqrt(benchmark::State& state) { run_chain(state, true); }
BENCHMARK(BM_FilterSmooth)->Arg(100)->Arg(1000);
BENCHMARK(BM_FilterSmoothSqrt)->Arg(100)->Arg(1000);

}  // namespace
