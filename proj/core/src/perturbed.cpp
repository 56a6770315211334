#include "pn/diffeq.hpp"
#include "pn/errors.hpp"

#include <cmath>
#include <random>

namespace pn::diffeq {

namespace {

Vector rk_step(const IVP& ivp, RKMethod method, const Vector& y, double t, double h) {
  if (method == RKMethod::Euler) return y + h * ivp.f(y, t);
  const Vector k1 = ivp.f(y, t);
  const Vector k2 = ivp.f(y + 0.5 * h * k1, t + 0.5 * h);
  const Vector k3 = ivp.f(y + 0.5 * h * k2, t + 0.5 * h);
  const Vector k4 = ivp.f(y + h * k3, t + h);
  return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

// Steps along the grid; step k uses h_k = grid[k+1] - grid[k] plus a
// uniform perturbation on [-delta_k, delta_k]. Internal time is the grid
// time plus the accumulated perturbation, so delta = 0 reproduces the
// deterministic method exactly.
Matrix integrate(const IVP& ivp, RKMethod method, const std::vector<double>& grid, double scale,
                 std::mt19937_64* rng) {
  const int p = order(method);
  Matrix out(static_cast<Index>(grid.size()), ivp.dim());
  Vector y = ivp.y0();
  out.row(0) = y.transpose();
  double drift = 0.0;
  for (std::size_t k = 0; k + 1 < grid.size(); ++k) {
    const double h_nom = grid[k + 1] - grid[k];
    double h = h_nom;
    if (scale > 0.0 && rng != nullptr) {
      const double delta = std::min(scale * std::pow(h_nom, p + 0.5), 0.9 * h_nom);
      std::uniform_real_distribution<double> u(-delta, delta);
      h = h_nom + u(*rng);
    }
    y = rk_step(ivp, method, y, grid[k] + drift, h);
    drift += h - h_nom;
    out.row(static_cast<Index>(k + 1)) = y.transpose();
  }
  return out;
}

}  // namespace

int order(RKMethod method) { return method == RKMethod::Euler ? 1 : 4; }

std::string to_string(RKMethod method) { return method == RKMethod::Euler ? "euler" : "rk4"; }

Vector PerturbedSolution::mean(std::size_t k) const {
  if (members.empty()) throw ArgumentError("PerturbedSolution: no members");
  if (k >= grid.size()) throw ArgumentError("PerturbedSolution: grid index out of range");
  // Shifted by the first member so that identical members give their exact value.
  const Vector ref = members.front().row(static_cast<Index>(k)).transpose();
  Vector acc = Vector::Zero(ref.size());
  for (const Matrix& m : members) acc += m.row(static_cast<Index>(k)).transpose() - ref;
  return ref + acc / static_cast<double>(members.size());
}

Vector PerturbedSolution::std(std::size_t k) const {
  const Vector mu = mean(k);
  if (members.size() < 2) return Vector::Zero(mu.size());
  Vector acc = Vector::Zero(mu.size());
  for (const Matrix& m : members) acc += (m.row(static_cast<Index>(k)).transpose() - mu).array().square().matrix();
  return (acc / static_cast<double>(members.size() - 1)).cwiseSqrt();
}

Matrix rk_solve(const IVP& ivp, RKMethod method, double h) {
  return integrate(ivp, method, uniform_grid(ivp.t0(), ivp.tmax(), h), 0.0, nullptr);
}

PerturbedSolution perturbed_solve(const IVP& ivp, RKMethod method, double h, double scale, Index ensemble_size,
                                  std::uint64_t seed) {
  if (!(h > 0.0)) throw ArgumentError("perturbed_solve: step must be positive");
  if (!(scale >= 0.0)) throw ArgumentError("perturbed_solve: scale must be nonnegative");
  if (ensemble_size < 1) throw ArgumentError("perturbed_solve: ensemble size must be at least 1");
  PerturbedSolution out;
  out.grid = uniform_grid(ivp.t0(), ivp.tmax(), h);
  out.order = order(method);
  out.scale = scale;
  for (Index m = 0; m < ensemble_size; ++m) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(m), static_cast<std::uint32_t>(static_cast<std::uint64_t>(m) >> 32)};
    std::mt19937_64 rng(seq);
    Matrix traj = integrate(ivp, method, out.grid, scale, &rng);
    if (traj.allFinite()) {
      out.members.push_back(std::move(traj));
    } else {
      ++out.excluded;
    }
  }
  return out;
}

}  // namespace pn::diffeq
