#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "hebm/numcore/array.hpp"
#include "hebm/rng.hpp"
#include "hebm/statistics.hpp"

namespace hebm::oracle {

/// A low-dimensional statistic for quadrature work (closures over d <= 2 inputs).
struct Statistic {
  std::string name;
  std::size_t out_dim = 1;
  std::function<std::vector<double>(std::span<const double>)> eval;
};

inline Statistic from_statistic(const StatisticFn& fn) {
  return {to_string(fn.kind()), fn.output_dim(), [fn](std::span<const double> x) { return fn.value(x); }};
}

inline Statistic no_statistic() {
  return {"none", 1, [](std::span<const double>) { return std::vector<double>{0.0}; }};
}

/// exp(-|x|^2 / (2 width^2)): large only near the origin.
inline Statistic bump(double width) {
  return {"bump", 1, [width](std::span<const double> x) {
            double r2 = 0.0;
            for (double v : x) r2 += v * v;
            return std::vector<double>{std::exp(-r2 / (2.0 * width * width))};
          }};
}

/**
 * Unnormalized density exp(F(x) + eta . T(x)) on a box in one or two dimensions.
 *
 * `grid` is the node count per axis; 0 selects the default (2048 in 1-d,
 * 512 per axis in 2-d).
 */
struct DensitySpec {
  std::string name;
  std::size_t dim = 1;
  std::function<double(std::span<const double>)> base;
  Statistic statistic = no_statistic();
  std::vector<double> eta{0.0};
  std::array<double, 2> lo{-10.0, -10.0};
  std::array<double, 2> hi{10.0, 10.0};
  std::size_t grid = 0;

  std::size_t nodes_per_axis() const { return grid ? grid : (dim == 1 ? 2048 : 512); }

  double log_unnormalized(std::span<const double> x) const {
    double v = base(x);
    const auto t = statistic.eval(x);
    for (std::size_t j = 0; j < t.size(); ++j) v += eta[j] * t[j];
    return v;
  }

  void validate() const {
    if (dim != 1 && dim != 2) throw ConfigError("oracle densities support dimension 1 or 2");
    if (!base || !statistic.eval) throw ConfigError("density spec needs a base energy and a statistic");
    if (eta.size() != statistic.out_dim) throw ShapeError("eta length does not match the statistic");
    for (std::size_t a = 0; a < dim; ++a) {
      if (!(hi[a] > lo[a])) throw ConfigError("integration box is empty");
    }
    if (nodes_per_axis() < 3) throw ConfigError("quadrature grid is too coarse");
  }
};

/// F, T, and trapezoid log-weights tabulated once on the grid nodes.
struct Tabulation {
  std::size_t dim = 1;
  std::size_t m = 1;
  std::vector<double> log_weight;
  std::vector<double> base;
  std::vector<double> stat;  // nodes x m
  std::vector<char> boundary;
};

inline Tabulation tabulate(const DensitySpec& spec) {
  spec.validate();
  const std::size_t n = spec.nodes_per_axis();
  Tabulation tab;
  tab.dim = spec.dim;
  tab.m = spec.statistic.out_dim;
  const std::size_t total = spec.dim == 1 ? n : n * n;
  tab.log_weight.reserve(total);
  tab.base.reserve(total);
  tab.stat.reserve(total * tab.m);
  tab.boundary.reserve(total);

  std::array<double, 2> h{};
  for (std::size_t a = 0; a < spec.dim; ++a) h[a] = (spec.hi[a] - spec.lo[a]) / static_cast<double>(n - 1);
  auto axis_weight = [&](std::size_t i, std::size_t a) { return (i == 0 || i == n - 1) ? 0.5 * h[a] : h[a]; };

  auto push = [&](std::span<const double> x, double w, bool edge) {
    tab.log_weight.push_back(std::log(w));
    tab.base.push_back(spec.base(x));
    const auto t = spec.statistic.eval(x);
    if (t.size() != tab.m) throw ShapeError("statistic returned the wrong number of outputs");
    tab.stat.insert(tab.stat.end(), t.begin(), t.end());
    tab.boundary.push_back(edge ? 1 : 0);
  };
  if (spec.dim == 1) {
    for (std::size_t i = 0; i < n; ++i) {
      const double x[1] = {spec.lo[0] + h[0] * static_cast<double>(i)};
      push(x, axis_weight(i, 0), i == 0 || i == n - 1);
    }
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        const double x[2] = {spec.lo[0] + h[0] * static_cast<double>(i), spec.lo[1] + h[1] * static_cast<double>(j)};
        push(x, axis_weight(i, 0) * axis_weight(j, 1), i == 0 || j == 0 || i == n - 1 || j == n - 1);
      }
    }
  }
  return tab;
}

/// Quadrature moments of T under the normalized density at a given eta.
struct Moments {
  double log_z = 0.0;
  std::vector<double> mean;
  Array cov;
  double boundary_mass = 0.0;
};

/// Boundary-mass threshold above which the density is treated as non-integrable on its box.
inline constexpr double kMaxBoundaryMass = 1e-10;

inline Moments moments(const Tabulation& tab, std::span<const double> eta) {
  if (eta.size() != tab.m) throw ShapeError("eta length does not match the statistic");
  const std::size_t nodes = tab.base.size();
  const std::size_t m = tab.m;
  std::vector<double> logp(nodes);
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < nodes; ++i) {
    double v = tab.base[i];
    for (std::size_t j = 0; j < m; ++j) v += eta[j] * tab.stat[i * m + j];
    logp[i] = v;
    mx = std::max(mx, v + tab.log_weight[i]);
  }
  if (!std::isfinite(mx)) throw NumericError("density is not finite on the quadrature grid");

  Moments out;
  out.mean.assign(m, 0.0);
  out.cov = Array({m, m});
  double z = 0.0;
  double edge = 0.0;
  for (std::size_t i = 0; i < nodes; ++i) {
    const double w = std::exp(logp[i] + tab.log_weight[i] - mx);
    z += w;
    if (tab.boundary[i]) edge += w;
    for (std::size_t j = 0; j < m; ++j) out.mean[j] += w * tab.stat[i * m + j];
  }
  for (double& v : out.mean) v /= z;
  for (std::size_t i = 0; i < nodes; ++i) {
    const double w = std::exp(logp[i] + tab.log_weight[i] - mx) / z;
    for (std::size_t a = 0; a < m; ++a) {
      const double da = tab.stat[i * m + a] - out.mean[a];
      for (std::size_t b = 0; b < m; ++b) out.cov(a, b) += w * da * (tab.stat[i * m + b] - out.mean[b]);
    }
  }
  out.log_z = mx + std::log(z);
  out.boundary_mass = edge / z;
  if (!std::isfinite(out.log_z)) throw NumericError("partition function is not finite");
  if (out.boundary_mass > kMaxBoundaryMass) {
    throw NumericError("density is not integrable on its box: boundary mass " + std::to_string(out.boundary_mass));
  }
  return out;
}

inline double log_partition(const DensitySpec& spec) { return moments(tabulate(spec), spec.eta).log_z; }

/// Z = integral of exp(F + eta . T) over the box (trapezoidal rule).
inline double partition(const DensitySpec& spec) { return std::exp(log_partition(spec)); }

inline std::vector<double> expected_statistic(const DensitySpec& spec) {
  return moments(tabulate(spec), spec.eta).mean;
}

/// Mean over rows of data of log Z - F(x) - eta . T(x).
inline double exact_nll(const DensitySpec& spec, const Array& data) {
  if (data.rank() != 2 || data.rows() == 0) throw ArgumentError("exact_nll: data must be a non-empty (n, d) array");
  if (data.cols() != spec.dim) throw ShapeError("exact_nll: data dimension does not match the density");
  const double log_z = log_partition(spec);
  double total = 0.0;
  for (std::size_t r = 0; r < data.rows(); ++r) total += log_z - spec.log_unnormalized(data.row(r));
  return total / static_cast<double>(data.rows());
}

/// Sample mean of T over the rows of data.
inline std::vector<double> sample_mean_statistic(const Statistic& stat, const Array& data) {
  std::vector<double> mean(stat.out_dim, 0.0);
  for (std::size_t r = 0; r < data.rows(); ++r) {
    const auto t = stat.eval(data.row(r));
    for (std::size_t j = 0; j < mean.size(); ++j) mean[j] += t[j];
  }
  for (double& v : mean) v /= static_cast<double>(data.rows());
  return mean;
}

/// Average data log-likelihood as a function of eta with F fixed (terms constant in eta dropped).
inline double eta_objective(const Tabulation& tab, std::span<const double> eta, std::span<const double> data_mean) {
  return dot(eta, data_mean) - moments(tab, eta).log_z;
}

struct EtaFit {
  std::vector<double> eta;
  std::vector<std::vector<double>> trajectory;
  std::vector<double> expected;   // E_p[T] at the fitted eta
  std::vector<double> data_mean;  // (1/N) sum T(x_i)
  double grad_norm = 0.0;         // |grad_eta l| / N at the fitted eta
  std::size_t iterations = 0;
};

namespace detail {

/// Solves A x = b for a small symmetric positive definite A (Gaussian elimination with pivoting).
inline std::vector<double> solve_small(Array a, std::vector<double> b) {
  const std::size_t n = b.size();
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < n; ++r) {
      if (std::abs(a(r, c)) > std::abs(a(piv, c))) piv = r;
    }
    if (std::abs(a(piv, c)) < 1e-300) throw NumericError("statistic covariance is singular");
    if (piv != c) {
      for (std::size_t k = 0; k < n; ++k) std::swap(a(c, k), a(piv, k));
      std::swap(b[c], b[piv]);
    }
    for (std::size_t r = c + 1; r < n; ++r) {
      const double f = a(r, c) / a(c, c);
      for (std::size_t k = c; k < n; ++k) a(r, k) -= f * a(c, k);
      b[r] -= f * b[c];
    }
  }
  std::vector<double> x(n);
  for (std::size_t r = n; r-- > 0;) {
    double s = b[r];
    for (std::size_t k = r + 1; k < n; ++k) s -= a(r, k) * x[k];
    x[r] = s / a(r, r);
  }
  return x;
}

}  // namespace detail

/**
 * Maximizes the exact data log-likelihood over eta with F held fixed.
 *
 * The ascent direction is the likelihood gradient preconditioned by the
 * statistic covariance (the negative Hessian), with step halving whenever a
 * step fails to increase the likelihood or leaves the integrable region.
 * Converges when |grad_eta l| / N = |mean T(data) - E_p[T]| <= tol.
 */
inline EtaFit fit_eta_exact(const DensitySpec& spec, const Array& data, double tol = 1e-6,
                            std::size_t max_iter = 200) {
  if (data.rank() != 2 || data.rows() == 0) throw ArgumentError("fit_eta_exact: data is empty");
  if (data.cols() != spec.dim) throw ShapeError("fit_eta_exact: data dimension does not match the density");
  const Tabulation tab = tabulate(spec);
  EtaFit fit;
  fit.data_mean = sample_mean_statistic(spec.statistic, data);
  fit.eta = spec.eta;
  fit.trajectory.push_back(fit.eta);

  Moments mom = moments(tab, fit.eta);
  double objective = dot(fit.eta, fit.data_mean) - mom.log_z;
  for (std::size_t it = 0;; ++it) {
    std::vector<double> grad(tab.m);
    for (std::size_t j = 0; j < tab.m; ++j) grad[j] = fit.data_mean[j] - mom.mean[j];
    fit.grad_norm = std::sqrt(squared_norm(grad));
    fit.expected = mom.mean;
    fit.iterations = it;
    if (fit.grad_norm <= tol) return fit;
    if (it == max_iter) {
      throw NumericError("fit_eta_exact did not converge in " + std::to_string(max_iter) +
                         " iterations; final gradient norm " + std::to_string(fit.grad_norm));
    }

    Array precond = mom.cov;
    for (std::size_t j = 0; j < tab.m; ++j) precond(j, j) += 1e-12;
    const auto dir = detail::solve_small(precond, grad);
    bool accepted = false;
    for (double step = 1.0; step > 1e-12; step *= 0.5) {
      std::vector<double> trial(tab.m);
      for (std::size_t j = 0; j < tab.m; ++j) trial[j] = fit.eta[j] + step * dir[j];
      try {
        Moments m2 = moments(tab, trial);
        const double obj2 = dot(trial, fit.data_mean) - m2.log_z;
        if (obj2 >= objective) {
          fit.eta = std::move(trial);
          mom = std::move(m2);
          objective = obj2;
          accepted = true;
          break;
        }
      } catch (const NumericError&) {
        // outside the integrable region; shrink
      }
    }
    if (!accepted) {
      throw NumericError("fit_eta_exact stalled; final gradient norm " + std::to_string(fit.grad_norm));
    }
    fit.trajectory.push_back(fit.eta);
  }
}

/// Exact samples from a 1-d density by inverse-CDF interpolation on the grid.
inline Array sample_exact(const DensitySpec& spec, std::size_t n, Rng& rng) {
  if (spec.dim != 1) throw ConfigError("sample_exact supports 1-d densities only");
  const Tabulation tab = tabulate(spec);
  const std::size_t nodes = tab.base.size();
  const double h = (spec.hi[0] - spec.lo[0]) / static_cast<double>(nodes - 1);
  std::vector<double> logp(nodes);
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < nodes; ++i) {
    double v = tab.base[i];
    for (std::size_t j = 0; j < tab.m; ++j) v += spec.eta[j] * tab.stat[i * tab.m + j];
    logp[i] = v;
    mx = std::max(mx, v);
  }
  // cumulative trapezoid mass per cell, density linear within a cell
  std::vector<double> dens(nodes);
  for (std::size_t i = 0; i < nodes; ++i) dens[i] = std::exp(logp[i] - mx);
  std::vector<double> cdf(nodes, 0.0);
  for (std::size_t i = 1; i < nodes; ++i) cdf[i] = cdf[i - 1] + 0.5 * h * (dens[i - 1] + dens[i]);
  const double total = cdf.back();
  Array out({n, 1});
  for (std::size_t s = 0; s < n; ++s) {
    const double u = rng.uniform() * total;
    const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    const std::size_t i = std::clamp<std::size_t>(static_cast<std::size_t>(it - cdf.begin()), 1, nodes - 1) - 1;
    // solve for t in [0, 1] with mass a t + (b - a) t^2 / 2 = (u - cdf[i]) / h
    const double a = dens[i];
    const double b = dens[i + 1];
    const double r = (u - cdf[i]) / h;
    double t;
    if (std::abs(b - a) < 1e-14 * std::max(a, b)) {
      t = a > 0 ? r / a : 0.5;
    } else {
      t = (-a + std::sqrt(std::max(0.0, a * a + 2.0 * (b - a) * r))) / (b - a);
    }
    out(s, 0) = spec.lo[0] + h * (static_cast<double>(i) + std::clamp(t, 0.0, 1.0));
  }
  return out;
}

/// Max-norm relative error between an analytic gradient and central differences.
inline double finite_diff_check(const std::function<double(std::span<const double>)>& f,
                                const std::function<std::vector<double>(std::span<const double>)>& grad,
                                std::span<const double> x, double h = 1e-5) {
  const auto analytic = grad(x);
  if (analytic.size() != x.size()) throw ShapeError("finite_diff_check: gradient has the wrong length");
  std::vector<double> xp(x.begin(), x.end());
  double err = 0.0;
  double scale = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = xp[i];
    xp[i] = orig + h;
    const double fp = f(xp);
    xp[i] = orig - h;
    const double fm = f(xp);
    xp[i] = orig;
    const double numeric = (fp - fm) / (2.0 * h);
    err = std::max(err, std::abs(numeric - analytic[i]));
    scale = std::max({scale, std::abs(numeric), std::abs(analytic[i])});
  }
  return scale > 0.0 ? err / scale : err;
}

/// Gauss-Legendre nodes and weights on [-1, 1], by Newton iteration on P_n.
inline std::pair<std::vector<double>, std::vector<double>> gauss_legendre(std::size_t n) {
  if (n == 0) throw ArgumentError("gauss_legendre needs at least one node");
  std::vector<double> x(n), w(n);
  for (std::size_t i = 0; i < (n + 1) / 2; ++i) {
    double z = std::cos(std::numbers::pi * (static_cast<double>(i) + 0.75) / (static_cast<double>(n) + 0.5));
    double dp = 1.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = z;
      for (std::size_t k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * static_cast<double>(k) - 1.0) * z * p1 - (static_cast<double>(k) - 1.0) * p0) /
                          static_cast<double>(k);
        p0 = p1;
        p1 = p2;
      }
      dp = static_cast<double>(n) * (z * p1 - p0) / (z * z - 1.0);
      const double step = p1 / dp;
      z -= step;
      if (std::abs(step) < 1e-16) break;
    }
    x[i] = -z;
    x[n - 1 - i] = z;
    w[i] = w[n - 1 - i] = 2.0 / ((1.0 - z * z) * dp * dp);
  }
  return {x, w};
}

/**
 * One-dimensional density whose log is the antiderivative of `score` on [lo, hi].
 *
 * The antiderivative is anchored at lo and accumulated panel by panel with
 * 16-point Gauss-Legendre; the result plugs into the trapezoid machinery.
 */
inline DensitySpec integrated_score_density(const std::function<double(double)>& score, double lo, double hi,
                                            std::size_t panels = 512) {
  if (!(hi > lo) || panels == 0) throw ConfigError("integrated score density needs a non-empty box");
  const auto [gx, gw] = gauss_legendre(16);
  const double width = (hi - lo) / static_cast<double>(panels);
  auto panel_integral = [score, gx = gx, gw = gw](double a, double b) {
    const double half = 0.5 * (b - a), mid = 0.5 * (a + b);
    double s = 0.0;
    for (std::size_t i = 0; i < gx.size(); ++i) s += gw[i] * score(mid + half * gx[i]);
    return half * s;
  };
  std::vector<double> cum(panels + 1, 0.0);
  for (std::size_t p = 0; p < panels; ++p) {
    cum[p + 1] = cum[p] + panel_integral(lo + width * static_cast<double>(p), lo + width * static_cast<double>(p + 1));
  }
  DensitySpec spec;
  spec.name = "integrated_score";
  spec.dim = 1;
  spec.lo = {lo, lo};
  spec.hi = {hi, hi};
  spec.base = [cum, lo, hi, width, panels, panel_integral](std::span<const double> x) {
    const double slack = 1e-9 * (hi - lo);
    if (x[0] < lo - slack || x[0] > hi + slack) throw ArgumentError("point lies outside the integration box");
    const double v = std::clamp(x[0], lo, hi);
    const auto p = std::min(panels - 1, static_cast<std::size_t>((v - lo) / width));
    const double start = lo + width * static_cast<double>(p);
    return cum[p] + (v > start ? panel_integral(start, v) : 0.0);
  };
  return spec;
}

// ---------------------------------------------------------------------------
// Catalog of analytic base energies and statistics
// ---------------------------------------------------------------------------

inline double log_normal_pdf(double x, double mean, double sd) {
  const double z = (x - mean) / sd;
  return -0.5 * z * z - std::log(sd) - 0.5 * std::log(2.0 * std::numbers::pi);
}

inline double log_sum_exp(std::span<const double> v) {
  const double mx = *std::max_element(v.begin(), v.end());
  double s = 0.0;
  for (double x : v) s += std::exp(x - mx);
  return mx + std::log(s);
}

inline DensitySpec gaussian_1d() {
  DensitySpec s;
  s.name = "gaussian1d";
  s.dim = 1;
  s.base = [](std::span<const double> x) { return -0.5 * x[0] * x[0]; };
  s.lo = {-12.0, 0.0};
  s.hi = {12.0, 0.0};
  return s;
}

inline DensitySpec quartic_1d() {
  DensitySpec s;
  s.name = "quartic1d";
  s.dim = 1;
  s.base = [](std::span<const double> x) { return -x[0] * x[0] * x[0] * x[0]; };
  s.lo = {-5.0, 0.0};
  s.hi = {5.0, 0.0};
  return s;
}

/// Equal mixture of N(-2, 0.5^2) and N(2, 0.5^2) as a log-density.
inline DensitySpec mixture_1d() {
  DensitySpec s;
  s.name = "mixture1d";
  s.dim = 1;
  s.base = [](std::span<const double> x) {
    const double parts[2] = {std::log(0.5) + log_normal_pdf(x[0], -2.0, 0.5),
                             std::log(0.5) + log_normal_pdf(x[0], 2.0, 0.5)};
    return log_sum_exp(parts);
  };
  s.lo = {-10.0, 0.0};
  s.hi = {10.0, 0.0};
  return s;
}

/// Correlated Gaussian with precision [[1, 0.5], [0.5, 1]].
inline DensitySpec gaussian_2d() {
  DensitySpec s;
  s.name = "gaussian2d";
  s.dim = 2;
  s.base = [](std::span<const double> x) { return -0.5 * (x[0] * x[0] + x[0] * x[1] + x[1] * x[1]); };
  s.lo = {-14.0, -14.0};
  s.hi = {14.0, 14.0};
  return s;
}

/// Equal mixture of four isotropic Gaussians (sd 0.5) at (+-2, 0) and (0, +-2).
inline DensitySpec mixture_2d() {
  DensitySpec s;
  s.name = "mixture2d";
  s.dim = 2;
  s.base = [](std::span<const double> x) {
    const double c[4][2] = {{2, 0}, {-2, 0}, {0, 2}, {0, -2}};
    double parts[4];
    for (int k = 0; k < 4; ++k) {
      parts[k] = std::log(0.25) + log_normal_pdf(x[0], c[k][0], 0.5) + log_normal_pdf(x[1], c[k][1], 0.5);
    }
    return log_sum_exp(parts);
  };
  s.lo = {-9.0, -9.0};
  s.hi = {9.0, 9.0};
  return s;
}

inline std::vector<DensitySpec> base_catalog() {
  return {gaussian_1d(), quartic_1d(), mixture_1d(), gaussian_2d(), mixture_2d()};
}

/// Statistics for a given input dimension: T = x, T = x^2, sin(1^T x), and an origin bump.
inline std::vector<Statistic> statistic_catalog(std::size_t dim) {
  auto named = [](Statistic s, std::string name) {
    s.name = std::move(name);
    return s;
  };
  return {named(from_statistic(StatisticFn::raw_moment(dim, 1)), "x"),
          named(from_statistic(StatisticFn::raw_moment(dim, 2)), "x^2"), from_statistic(StatisticFn::sine(dim)),
          bump(0.5)};
}

inline DensitySpec with_statistic(DensitySpec spec, Statistic stat) {
  spec.eta.assign(stat.out_dim, 0.0);
  spec.statistic = std::move(stat);
  return spec;
}

}  // namespace hebm::oracle
