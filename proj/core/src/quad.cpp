#include "pn/quad.hpp"

#include "pn/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

namespace pn::quad {

namespace {

constexpr double kSqrtHalfPi = 1.2533141373155002512;  // sqrt(pi / 2)

// erf(b) - erf(a) without cancellation in the tails.
double erf_diff(double a, double b) {
  if (a > 0.0 && b > 0.0) return std::erfc(a) - std::erfc(b);
  if (a < 0.0 && b < 0.0) return std::erfc(-b) - std::erfc(-a);
  return std::erf(b) - std::erf(a);
}

// Integral of exp(-(x - y)^2 / (2 l^2)) over [0, w]^2.
double box_double_integral(double w, double l) {
  const double u = w / l;
  if (u < 1.0) {
    // sum_n (-1)^n 2 u^(2n+2) / (2^n n! (2n+1)(2n+2))
    double term_scale = 1.0;  // (-1)^n u^(2n) / (2^n n!)
    double acc = 0.0;
    for (int n = 0; n < 30; ++n) {
      acc += 2.0 * term_scale / ((2.0 * n + 1.0) * (2.0 * n + 2.0));
      term_scale *= -u * u / (2.0 * (n + 1));
    }
    return l * l * u * u * acc;
  }
  return 2.0 * (w * l * kSqrtHalfPi * std::erf(u / std::numbers::sqrt2) - l * l * (-std::expm1(-0.5 * u * u)));
}

void check_point(const Measure& measure, const Vector& x, const char* where) {
  if (x.size() != dim(measure)) detail::throw_dimension_mismatch(where, dim(measure), x.size());
}

void check_kernel(const SquaredExpKernel& kernel, const Measure& measure) {
  kernel.validate();
  validate(measure);
  if (kernel.lengthscales.size() != dim(measure)) {
    throw ArgumentError("quad: kernel dimension " + std::to_string(kernel.lengthscales.size()) +
                        " does not match measure dimension " + std::to_string(dim(measure)));
  }
}

double box_volume(const LebesgueBox& box) { return (box.upper - box.lower).prod(); }

// Cholesky of K + jitter I with nugget 1e-10 output_scale, escalated by
// factors of 100 up to 1e-4 output_scale.
void factor_gram(const Matrix& K, double output_scale, BQState& state) {
  const Index k = K.rows();
  for (double rel = 1e-10; rel <= 1e-4 * 1.0001; rel *= 100.0) {
    const double jitter = rel * output_scale;
    Eigen::LLT<Matrix> llt(K + jitter * Matrix::Identity(k, k));
    if (llt.info() == Eigen::Success && (llt.matrixLLT().diagonal().array() > 0.0).all()) {
      state.gram_factor = llt.matrixL();
      state.jitter = jitter;
      return;
    }
  }
  throw NumericalError("bq_integrate: Gram matrix is singular after jitter escalation; remove duplicate nodes");
}

}  // namespace

Index dim(const Measure& measure) {
  return std::visit(
      [](const auto& m) -> Index {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, GaussianMeasure>) {
          return m.mean.size();
        } else {
          return m.lower.size();
        }
      },
      measure);
}

void validate(const Measure& measure) {
  if (const auto* g = std::get_if<GaussianMeasure>(&measure)) {
    if (g->mean.size() == 0) throw ArgumentError("GaussianMeasure: dimension must be positive");
    if (g->var.size() != g->mean.size()) detail::throw_dimension_mismatch("GaussianMeasure (var)", g->mean.size(), g->var.size());
    if (!g->mean.allFinite() || !(g->var.array() > 0.0).all() || !g->var.allFinite()) {
      throw ArgumentError("GaussianMeasure: variances must be positive and finite");
    }
    return;
  }
  const auto& box = std::get<LebesgueBox>(measure);
  if (box.lower.size() == 0) throw ArgumentError("LebesgueBox: dimension must be positive");
  if (box.upper.size() != box.lower.size()) detail::throw_dimension_mismatch("LebesgueBox (upper)", box.lower.size(), box.upper.size());
  if (!box.lower.allFinite() || !box.upper.allFinite() || !(box.lower.array() < box.upper.array()).all()) {
    throw ArgumentError("LebesgueBox: need finite bounds with lower < upper componentwise");
  }
}

SquaredExpKernel SquaredExpKernel::isotropic(Index dim, double lengthscale, double output_scale) {
  SquaredExpKernel k{Vector::Constant(dim, lengthscale), output_scale};
  k.validate();
  return k;
}

void SquaredExpKernel::validate() const {
  if (lengthscales.size() == 0) throw ArgumentError("SquaredExpKernel: dimension must be positive");
  if (!(lengthscales.array() > 0.0).all() || !lengthscales.allFinite()) {
    throw ArgumentError("SquaredExpKernel: lengthscales must be positive and finite");
  }
  if (!(output_scale > 0.0) || !std::isfinite(output_scale)) {
    throw ArgumentError("SquaredExpKernel: output scale must be positive and finite");
  }
}

double SquaredExpKernel::operator()(const Vector& x, const Vector& y) const {
  return output_scale * std::exp(-0.5 * ((x - y).array() / lengthscales.array()).square().sum());
}

Matrix SquaredExpKernel::gram(const Matrix& X) const {
  if (X.cols() != lengthscales.size()) detail::throw_dimension_mismatch("SquaredExpKernel::gram", lengthscales.size(), X.cols());
  const Index k = X.rows();
  Matrix K(k, k);
  for (Index i = 0; i < k; ++i) {
    K(i, i) = output_scale;
    for (Index j = 0; j < i; ++j) {
      K(i, j) = (*this)(X.row(i).transpose(), X.row(j).transpose());
      K(j, i) = K(i, j);
    }
  }
  return K;
}

double kernel_mean(const SquaredExpKernel& kernel, const Measure& measure, const Vector& x) {
  check_kernel(kernel, measure);
  check_point(measure, x, "kernel_mean");
  const Vector& l = kernel.lengthscales;
  if (const auto* g = std::get_if<GaussianMeasure>(&measure)) {
    const Eigen::ArrayXd s = l.array().square() + g->var.array();
    const double quad_form = ((x - g->mean).array().square() / s).sum();
    return kernel.output_scale * (l.array() / s.sqrt()).prod() * std::exp(-0.5 * quad_form);
  }
  const auto& box = std::get<LebesgueBox>(measure);
  double out = kernel.output_scale;
  for (Index i = 0; i < x.size(); ++i) {
    const double scale = std::numbers::sqrt2 * l[i];
    out *= l[i] * kSqrtHalfPi * erf_diff((box.lower[i] - x[i]) / scale, (box.upper[i] - x[i]) / scale);
  }
  if (box.normalize) out /= box_volume(box);
  return out;
}

Vector kernel_means(const SquaredExpKernel& kernel, const Measure& measure, const Matrix& X) {
  Vector z(X.rows());
  for (Index i = 0; i < X.rows(); ++i) z[i] = kernel_mean(kernel, measure, X.row(i).transpose());
  return z;
}

double initial_error(const SquaredExpKernel& kernel, const Measure& measure) {
  check_kernel(kernel, measure);
  const Vector& l = kernel.lengthscales;
  if (const auto* g = std::get_if<GaussianMeasure>(&measure)) {
    return kernel.output_scale * (l.array() / (l.array().square() + 2.0 * g->var.array()).sqrt()).prod();
  }
  const auto& box = std::get<LebesgueBox>(measure);
  double out = kernel.output_scale;
  for (Index i = 0; i < l.size(); ++i) out *= box_double_integral(box.upper[i] - box.lower[i], l[i]);
  if (box.normalize) {
    const double vol = box_volume(box);
    out /= vol * vol;
  }
  return out;
}

GaussianBelief bq_integrate(const Measure& measure, const Matrix& nodes, const Vector& values,
                            const SquaredExpKernel& kernel, BQState* state) {
  check_kernel(kernel, measure);
  const Index k = nodes.rows();
  if (values.size() != k) detail::throw_dimension_mismatch("bq_integrate (values)", k, values.size());
  if (k > 0 && nodes.cols() != dim(measure)) detail::throw_dimension_mismatch("bq_integrate (nodes)", dim(measure), nodes.cols());
  if (!values.allFinite()) throw NumericalError("bq_integrate: non-finite integrand values");
  if (const auto* box = std::get_if<LebesgueBox>(&measure)) {
    for (Index i = 0; i < k; ++i) {
      const Eigen::ArrayXd x = nodes.row(i).transpose().array();
      if ((x < box->lower.array()).any() || (x > box->upper.array()).any()) {
        throw ArgumentError("bq_integrate: node " + std::to_string(i) + " lies outside the integration box");
      }
    }
  }
  BQState local;
  BQState& st = state ? *state : local;
  st = BQState{};
  st.nodes = nodes;
  st.values = values;
  st.c = initial_error(kernel, measure);
  if (k == 0) {
    st.z = Vector(0);
    st.weights = Vector(0);
    return GaussianBelief::scalar(0.0, st.c);
  }
  st.z = kernel_means(kernel, measure, nodes);
  factor_gram(kernel.gram(nodes), kernel.output_scale, st);
  const auto L = st.gram_factor.triangularView<Eigen::Lower>();
  const Vector half = L.solve(st.z);
  st.weights = st.gram_factor.transpose().triangularView<Eigen::Upper>().solve(half);
  const double mean = st.weights.dot(values);
  const double var = std::clamp(st.c - half.squaredNorm(), 0.0, st.c);
  return GaussianBelief::scalar(mean, var);
}

GaussianBelief bq_integrate(const QuadProblem& problem, const Matrix& nodes, const SquaredExpKernel& kernel,
                            BQState* state) {
  if (!problem.f) throw ArgumentError("bq_integrate: integrand is required");
  Vector values(nodes.rows());
  for (Index i = 0; i < nodes.rows(); ++i) values[i] = problem.f(nodes.row(i).transpose());
  return bq_integrate(problem.measure, nodes, values, kernel, state);
}

Matrix sample_nodes(const Measure& measure, Index n, std::mt19937_64& rng) {
  validate(measure);
  if (n < 0) throw ArgumentError("sample_nodes: count must be nonnegative");
  const Index d = dim(measure);
  Matrix X(n, d);
  if (const auto* g = std::get_if<GaussianMeasure>(&measure)) {
    std::normal_distribution<double> normal(0.0, 1.0);
    for (Index i = 0; i < n; ++i) {
      for (Index j = 0; j < d; ++j) X(i, j) = g->mean[j] + std::sqrt(g->var[j]) * normal(rng);
    }
    return X;
  }
  const auto& box = std::get<LebesgueBox>(measure);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < d; ++j) X(i, j) = box.lower[j] + (box.upper[j] - box.lower[j]) * unif(rng);
  }
  return X;
}

GaussianBelief bayesian_monte_carlo(const QuadProblem& problem, Index n_nodes, const SquaredExpKernel& kernel,
                                    std::mt19937_64& rng, BQState* state) {
  const Matrix X = sample_nodes(problem.measure, n_nodes, rng);
  return bq_integrate(problem, X, kernel, state);
}

LengthscaleFit optimize_lengthscale(const Matrix& nodes, const Vector& values,
                                    std::optional<std::vector<double>> candidates) {
  const Index k = nodes.rows();
  const Index d = nodes.cols();
  if (values.size() != k) detail::throw_dimension_mismatch("optimize_lengthscale (values)", k, values.size());
  if (k < 2 || d < 1) throw ArgumentError("optimize_lengthscale: need at least 2 nodes");
  if (!values.allFinite()) throw ArgumentError("optimize_lengthscale: non-finite values");

  LengthscaleFit fit;
  if (candidates) {
    if (candidates->empty()) throw ArgumentError("optimize_lengthscale: empty candidate grid");
    for (double l : *candidates) {
      if (!(l > 0.0) || !std::isfinite(l)) throw ArgumentError("optimize_lengthscale: candidates must be positive");
    }
    fit.candidates = *candidates;
  } else {
    std::vector<double> dists;
    dists.reserve(static_cast<std::size_t>(k * (k - 1) / 2));
    for (Index i = 0; i < k; ++i) {
      for (Index j = 0; j < i; ++j) dists.push_back((nodes.row(i) - nodes.row(j)).norm());
    }
    auto mid = dists.begin() + static_cast<std::ptrdiff_t>(dists.size() / 2);
    std::nth_element(dists.begin(), mid, dists.end());
    double median = *mid;
    if (dists.size() % 2 == 0) median = 0.5 * (median + *std::max_element(dists.begin(), mid));
    if (!(median > 0.0)) throw ArgumentError("optimize_lengthscale: nodes must be distinct");
    for (int i = 0; i < 25; ++i) fit.candidates.push_back(median * std::pow(10.0, -2.0 + 4.0 * i / 24.0));
  }

  if ((values.array() == values[0]).all()) {
    const double smallest = *std::min_element(fit.candidates.begin(), fit.candidates.end());
    fit.kernel = SquaredExpKernel::isotropic(d, smallest, values[0] != 0.0 ? values[0] * values[0] : 1.0);
    fit.log_likelihoods.assign(fit.candidates.size(), std::numeric_limits<double>::quiet_NaN());
    fit.warning = "optimize_lengthscale: all values identical; returning the smallest candidate lengthscale";
    return fit;
  }

  const double log2pi = std::log(2.0 * std::numbers::pi);
  double best = -std::numeric_limits<double>::infinity();
  std::size_t best_idx = 0;
  double best_scale = 1.0;
  for (std::size_t c = 0; c < fit.candidates.size(); ++c) {
    const SquaredExpKernel unit = SquaredExpKernel::isotropic(d, fit.candidates[c], 1.0);
    BQState st;
    double ll = -std::numeric_limits<double>::infinity();
    double scale = 1.0;
    try {
      factor_gram(unit.gram(nodes), 1.0, st);
      const Vector alpha = st.gram_factor.triangularView<Eigen::Lower>().solve(values);
      scale = alpha.squaredNorm() / static_cast<double>(k);
      const double logdet = 2.0 * st.gram_factor.diagonal().array().log().sum();
      if (scale > 0.0) ll = -0.5 * static_cast<double>(k) * (std::log(scale) + 1.0 + log2pi) - 0.5 * logdet;
    } catch (const NumericalError&) {
    }
    fit.log_likelihoods.push_back(ll);
    if (ll > best) {
      best = ll;
      best_idx = c;
      best_scale = scale;
    }
  }
  if (!std::isfinite(best)) throw NumericalError("optimize_lengthscale: no candidate gave a finite likelihood");
  fit.kernel = SquaredExpKernel::isotropic(d, fit.candidates[best_idx], best_scale);
  return fit;
}

}  // namespace pn::quad
