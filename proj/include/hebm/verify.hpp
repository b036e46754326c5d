#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include "hebm/neighbors.hpp"
#include "hebm/oracle.hpp"
#include "hebm/sampling.hpp"
#include "hebm/training.hpp"

namespace hebm {

struct VerifyCheck {
  std::string name;
  double value = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

struct VerifyReport {
  std::string suite;
  std::vector<VerifyCheck> checks;

  void add(std::string name, double value, double tolerance) {
    checks.push_back({std::move(name), value, tolerance, std::isfinite(value) && value <= tolerance});
  }

  bool passed() const {
    return std::all_of(checks.begin(), checks.end(), [](const VerifyCheck& c) { return c.pass; });
  }

  void print(std::ostream& out) const {
    std::size_t width = 5;
    for (const auto& c : checks) width = std::max(width, c.name.size());
    char buf[512];
    std::snprintf(buf, sizeof buf, "%-*s  %14s  %10s  %s\n", static_cast<int>(width), "check", "value", "tolerance",
                  "result");
    out << buf;
    for (const auto& c : checks) {
      std::snprintf(buf, sizeof buf, "%-*s  %14.6g  %10.3g  %s\n", static_cast<int>(width), c.name.c_str(), c.value,
                    c.tolerance, c.pass ? "PASS" : "FAIL");
      out << buf;
    }
    out << suite << ": " << (passed() ? "PASS" : "FAIL") << "\n";
  }
};

struct VerifyOptions {
  std::uint64_t seed = 0;
  /// Negates every analytic gradient before comparison.
  bool inject_fault = false;
};

namespace detail {

inline std::vector<double> flip_if(std::vector<double> g, bool flip) {
  if (flip) {
    for (double& v : g) v = -v;
  }
  return g;
}

inline std::vector<double> normal_vector(std::size_t n, Rng& rng, double scale = 1.0) {
  std::vector<double> v(n);
  for (double& x : v) x = scale * rng.normal();
  return v;
}

}  // namespace detail

/// Statistics matching at the exact maximum-likelihood eta for every catalog pair.
inline VerifyReport verify_theorem1(const VerifyOptions& opt = {}) {
  using namespace oracle;
  VerifyReport r{"theorem1", {}};
  Rng rng(opt.seed, 0x7431);
  for (const auto& base : base_catalog()) {
    Array data({300, base.dim});
    for (std::size_t i = 0; i < data.rows(); ++i) {
      for (std::size_t a = 0; a < base.dim; ++a) data(i, a) = 0.4 - 0.3 * static_cast<double>(a) + 1.3 * rng.normal();
    }
    for (const auto& stat : statistic_catalog(base.dim)) {
      const auto spec = with_statistic(base, stat);
      double gap = std::numeric_limits<double>::infinity();
      try {
        const auto fit = fit_eta_exact(spec, data);
        DensitySpec fitted = spec;
        fitted.eta = fit.eta;
        const auto e = expected_statistic(fitted);
        const auto mean = sample_mean_statistic(spec.statistic, data);
        gap = 0.0;
        for (std::size_t j = 0; j < e.size(); ++j) gap = std::max(gap, std::abs(e[j] - mean[j]));
      } catch (const NumericError&) {
      }
      r.add(base.name + "/" + stat.name + " |E_p[T] - mean T|", gap, 1e-4);
    }
  }
  return r;
}

/// Autodiff, statistic gradients, and DSM gradients against central differences.
inline VerifyReport verify_gradcheck(const VerifyOptions& opt = {}) {
  VerifyReport r{"gradcheck", {}};
  const bool flip = opt.inject_fault;
  constexpr double kTol = 1e-4;
  constexpr int kConfigs = 20;
  Rng rng(opt.seed, 0x6763);

  // MLP parameter gradients of <u, net(input)>
  double worst = 0.0;
  for (int c = 0; c < kConfigs; ++c) {
    const std::size_t d = 1 + rng.index(4);
    std::vector<std::size_t> dims{d + 1};
    for (std::size_t l = 0, n = 1 + rng.index(2); l < n; ++l) dims.push_back(2 + rng.index(5));
    dims.push_back(d);
    MlpParams net = MlpParams::create(dims, c % 2 ? Activation::softplus : Activation::tanh, rng);
    for (auto& p : net.parameters()) {
      for (std::size_t i = 0; i < p.value->size(); ++i) (*p.value)[i] = 0.7 * rng.normal();
    }
    const std::size_t rows = 1 + rng.index(3);
    Array input({rows, d + 1}, detail::normal_vector(rows * (d + 1), rng));
    Array upstream({rows, d}, detail::normal_vector(rows * d, rng));
    const auto grads = backward_params(net, input, upstream);
    auto params = net.parameters();
    for (std::size_t k = 0; k < params.size(); ++k) {
      Array& value = *params[k].value;
      auto f = [&](std::span<const double> v) {
        const Array saved = value;
        std::copy(v.begin(), v.end(), value.data().begin());
        const Array out = forward(net, input);
        value = saved;
        double s = 0.0;
        for (std::size_t i = 0; i < out.size(); ++i) s += out[i] * upstream[i];
        return s;
      };
      auto g = [&](std::span<const double>) { return detail::flip_if(grads[k].values(), flip); };
      worst = std::max(worst, oracle::finite_diff_check(f, g, value.values()));
    }
  }
  r.add("autodiff mlp parameters (20 configs)", worst, kTol);

  // Statistic input gradients
  const std::vector<int> valences{0, 4, 3, 2};
  for (const std::string kind : {"valency", "margin", "laplacian_smoothness", "sine", "raw_moment"}) {
    worst = 0.0;
    for (int c = 0; c < kConfigs; ++c) {
      StatisticFn stat = StatisticFn::none(1);
      std::vector<double> x;
      if (kind == "valency") {
        stat = StatisticFn::valency(MoleculeLayout{2 + rng.index(4), valences});
        x = detail::normal_vector(stat.input_dim(), rng);
        for (double& v : x) v = 1.5 + 1.2 * v;
      } else if (kind == "margin") {
        stat = StatisticFn::margin(MarginGeometry::centered(6, 5, 2 + rng.index(3), 1 + rng.index(3)));
        x = detail::normal_vector(stat.input_dim(), rng);
      } else if (kind == "laplacian_smoothness") {
        const std::size_t n = 6 + rng.index(20);
        stat = StatisticFn::laplacian(n, 1 + rng.index(4));
        x = detail::normal_vector(stat.input_dim(), rng);
      } else if (kind == "sine") {
        stat = StatisticFn::sine(1 + rng.index(5));
        x = detail::normal_vector(stat.input_dim(), rng);
      } else {
        stat = StatisticFn::raw_moment(1 + rng.index(4), 1 + static_cast<int>(rng.index(4)));
        x = detail::normal_vector(stat.input_dim(), rng);
      }
      const auto eta = detail::normal_vector(stat.output_dim(), rng);
      std::function<double(std::span<const double>)> f;
      if (kind == "laplacian_smoothness") {
        // the k-NN graph is held at its value at x
        const SparseLaplacian lap = knn_laplacian(x, stat.neighbor_count());
        f = [lap, e = eta[0]](std::span<const double> v) { return e * laplacian_statistic(v, lap); };
      } else {
        f = [&](std::span<const double> v) {
          const auto t = stat.value(v);
          double s = 0.0;
          for (std::size_t j = 0; j < t.size(); ++j) s += eta[j] * t[j];
          return s;
        };
      }
      auto g = [&](std::span<const double> v) { return detail::flip_if(stat.gradient_dot(v, eta), flip); };
      worst = std::max(worst, oracle::finite_diff_check(f, g, x));
    }
    r.add("statistic " + kind + " gradient (20 configs)", worst, kTol);
  }

  // DSM loss gradients in theta and eta
  double worst_theta = 0.0, worst_eta = 0.0;
  for (int c = 0; c < kConfigs; ++c) {
    const std::size_t d = 1 + static_cast<std::size_t>(c % 3);
    StatisticFn stat = c % 2 ? StatisticFn::sine(d) : StatisticFn::raw_moment(d, 2);
    ScoreModel m = ScoreModel::create(stat, {6}, Activation::tanh, rng);
    for (auto& p : m.net.parameters()) {
      for (std::size_t i = 0; i < p.value->size(); ++i) (*p.value)[i] = 0.5 * rng.normal();
    }
    for (double& e : m.eta) e = 0.3 * rng.normal();
    const auto sched = NoiseSchedule::geometric(1.5, 0.2, 3);
    Array batch({5, d}, detail::normal_vector(5 * d, rng));
    const auto pb = perturb_batch(batch, sched, rng, c % 4 < 2 ? NoiseMode::exact : NoiseMode::stochastic);
    const DsmResult res = dsm_loss(m, pb, sched);
    auto loss = [&] {
      return dsm_loss_value(pb, sched, [&](std::size_t, std::span<const double> x, double s) { return score(m, x, s); });
    };
    auto params = m.net.parameters();
    for (std::size_t k = 0; k < params.size(); ++k) {
      Array& value = *params[k].value;
      auto f = [&](std::span<const double> v) {
        const Array saved = value;
        std::copy(v.begin(), v.end(), value.data().begin());
        const double out = loss();
        value = saved;
        return out;
      };
      auto g = [&](std::span<const double>) { return detail::flip_if(res.theta_grad[k].values(), flip); };
      worst_theta = std::max(worst_theta, oracle::finite_diff_check(f, g, value.values()));
    }
    auto fe = [&](std::span<const double> v) {
      const auto saved = m.eta;
      m.eta.assign(v.begin(), v.end());
      const double out = loss();
      m.eta = saved;
      return out;
    };
    auto ge = [&](std::span<const double>) { return detail::flip_if(res.eta_grad, flip); };
    worst_eta = std::max(worst_eta, oracle::finite_diff_check(fe, ge, m.eta));
  }
  r.add("dsm loss theta gradient (20 configs)", worst_theta, kTol);
  r.add("dsm loss eta gradient (20 configs)", worst_eta, kTol);
  return r;
}

/// kd-tree k-NN queries against exhaustive search.
inline VerifyReport verify_knn(const VerifyOptions& opt = {}) {
  VerifyReport r{"knn", {}};
  Rng rng(opt.seed, 0x6b6e);
  std::size_t query_mismatch = 0, self_mismatch = 0;
  for (int c = 0; c < 100; ++c) {
    const std::size_t n = 1 + rng.index(1000);
    std::vector<Point3> pts(n);
    const bool quantized = c % 5 == 0;
    for (auto& p : pts) {
      for (double& v : p) v = quantized ? std::round(2.0 * rng.normal()) : rng.normal();
    }
    const KdTree tree(pts);
    const std::size_t k = 1 + rng.index(std::min<std::size_t>(n, 16));
    Point3 q{rng.normal(), rng.normal(), rng.normal()};
    std::vector<Neighbor> brute(n);
    for (std::size_t i = 0; i < n; ++i) brute[i] = {squared_distance(q, pts[i]), i};
    std::sort(brute.begin(), brute.end());
    brute.resize(k);
    query_mismatch += tree.knn(q, k) == brute ? 0 : 1;

    if (n > 1) {
      const std::size_t i = rng.index(n);
      const std::size_t kk = 1 + rng.index(std::min<std::size_t>(n - 1, 16));
      std::vector<Neighbor> others;
      for (std::size_t j = 0; j < n; ++j) {
        if (j != i) others.push_back({squared_distance(pts[i], pts[j]), j});
      }
      std::sort(others.begin(), others.end());
      others.resize(kk);
      self_mismatch += tree.knn_of(i, kk) == others ? 0 : 1;
    }
  }
  r.add("knn query mismatches (100 cases)", static_cast<double>(query_mismatch), 0.0);
  r.add("knn_of mismatches (100 cases)", static_cast<double>(self_mismatch), 0.0);
  return r;
}

/// Langevin dynamics on closed-form scores.
inline VerifyReport verify_sampler(const VerifyOptions& opt = {}) {
  VerifyReport r{"sampler", {}};
  const ScoreFn standard = [](std::span<const double> x, double) {
    std::vector<double> s(x.begin(), x.end());
    for (double& v : s) v = -v;
    return s;
  };
  const ScoreFn zero = [](std::span<const double> x, double) { return std::vector<double>(x.size(), 0.0); };

  SamplerConfig c;
  c.steps_per_level = 300;
  c.eps = 0.02;
  c.denoise = false;
  c.seed = opt.seed;
  const std::size_t n = 4000;
  const Array s = sample(standard, 1, n, NoiseSchedule::from_sigmas({1.0}), c);
  double sum = 0.0, sum2 = 0.0;
  for (double v : s.data()) {
    sum += v;
    sum2 += v * v;
  }
  const double mean = sum / static_cast<double>(n);
  const double var = sum2 / static_cast<double>(n) - mean * mean;
  r.add("N(0,1) stationary |mean|", std::abs(mean), 4.0 / std::sqrt(static_cast<double>(n)));
  r.add("N(0,1) stationary |var - 1|", std::abs(var - 1.0), 0.1);

  SamplerConfig z;
  z.steps_per_level = 5;
  z.eps = 1e-3;
  z.denoise = false;
  z.seed = opt.seed;
  const auto sched = NoiseSchedule::geometric(1.0, 0.2, 4);
  double expected = sched.largest() * sched.largest();
  for (double sg : sched.sigmas) expected += static_cast<double>(z.steps_per_level) * z.eps * sg * sg / (0.2 * 0.2);
  const Array out = sample(zero, 4, 5000, sched, z);
  double total = 0.0;
  for (double v : out.data()) total += v * v;
  r.add("zero score |var / injected - 1|", std::abs(total / static_cast<double>(out.size()) / expected - 1.0), 0.04);

  SamplerConfig t = c;
  t.steps_per_level = 20;
  const Array a = sample(standard, 2, 16, sched, t);
  t.threads = 3;
  const Array b = sample(standard, 2, 16, sched, t);
  double diff = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) diff = std::max(diff, std::abs(a[i] - b[i]));
  r.add("thread-count invariance max |diff|", diff, 0.0);
  return r;
}

inline const std::vector<std::string>& verify_suites() {
  static const std::vector<std::string> s{"theorem1", "gradcheck", "knn", "sampler"};
  return s;
}

inline VerifyReport run_verify_suite(const std::string& suite, const VerifyOptions& opt = {}) {
  if (suite == "theorem1") return verify_theorem1(opt);
  if (suite == "gradcheck") return verify_gradcheck(opt);
  if (suite == "knn") return verify_knn(opt);
  if (suite == "sampler") return verify_sampler(opt);
  throw ConfigError("unknown verify suite '" + suite + "'");
}

}  // namespace hebm
