#pragma once

#include <cmath>
#include <functional>
#include <span>
#include <thread>
#include <vector>

#include "hebm/hybrid_model.hpp"
#include "hebm/rng.hpp"
#include "hebm/training.hpp"

namespace hebm {

struct SamplerConfig {
  std::size_t steps_per_level = 100;
  /// Step size at the smallest noise level; level i uses eps * sigma_i^2 / sigma_K^2.
  double eps = 2e-5;
  bool denoise = true;
  std::uint64_t seed = 0;
  std::size_t threads = 1;

  void validate() const {
    if (steps_per_level == 0) throw ConfigError("sampling needs at least one step per level");
    if (!(eps > 0.0)) throw ConfigError("sampling step size must be positive");
    if (threads == 0) throw ConfigError("threads must be positive");
  }
};

/// eps scaled to a schedule: 2e-5 at sigma_K = 0.01, growing with sigma_K^2.
inline double default_step_size(const NoiseSchedule& schedule) {
  const double r = schedule.smallest() / 0.01;
  return 2e-5 * r * r;
}

using ScoreFn = std::function<std::vector<double>(std::span<const double> x, double sigma)>;

inline ScoreFn model_score(const ScoreModel& model) {
  return [&model](std::span<const double> x, double sigma) { return score(model, x, sigma); };
}

/// x <- x + (eps/2) score(x, sigma) + sqrt(eps) z.
inline void langevin_step(const ScoreFn& score_fn, std::span<double> x, double sigma, double eps, Rng& rng) {
  const auto s = score_fn(x, sigma);
  const double noise = std::sqrt(eps);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] += 0.5 * eps * s[i] + noise * rng.normal();
}

inline void langevin_step(const ScoreModel& model, std::span<double> x, double sigma, double eps, Rng& rng) {
  langevin_step(model_score(model), x, sigma, eps, rng);
}

/**
 * Runs one annealed Langevin chain from N(0, sigma_1^2 I), writing into `x`.
 *
 * The chain owns the stream (seed, chain), so its result does not depend on
 * which thread runs it or on other chains.
 */
inline void run_chain(const ScoreFn& score_fn, std::span<double> x, const NoiseSchedule& schedule,
                      const SamplerConfig& config, std::size_t chain) {
  Rng rng = Rng::stream(config.seed, chain);
  const double sigma_k2 = schedule.smallest() * schedule.smallest();
  for (double& v : x) v = schedule.largest() * rng.normal();
  for (std::size_t l = 0; l < schedule.levels(); ++l) {
    const double sigma = schedule.sigmas[l];
    const double eps_l = config.eps * sigma * sigma / sigma_k2;
    for (std::size_t t = 0; t < config.steps_per_level; ++t) {
      langevin_step(score_fn, x, sigma, eps_l, rng);
      for (double v : x) {
        if (!std::isfinite(v)) {
          throw NumericError("sampler state became non-finite at level " + std::to_string(l) + ", step " +
                             std::to_string(t) + " (chain " + std::to_string(chain) + ")");
        }
      }
    }
  }
  if (config.denoise) {
    const auto s = score_fn(x, schedule.smallest());
    for (std::size_t i = 0; i < x.size(); ++i) x[i] += sigma_k2 * s[i];
  }
}

/// Draws n samples of dimension `dim` as an (n, dim) array.
inline Array sample(const ScoreFn& score_fn, std::size_t dim, std::size_t n, const NoiseSchedule& schedule,
                    const SamplerConfig& config) {
  config.validate();
  schedule.validate();
  Array out({n, dim});
  if (n == 0) return out;
  const std::size_t workers = std::min(config.threads, n);
  if (workers == 1) {
    for (std::size_t c = 0; c < n; ++c) run_chain(score_fn, out.row(c), schedule, config, c);
    return out;
  }
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t c = w; c < n; c += workers) run_chain(score_fn, out.row(c), schedule, config, c);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

inline Array sample(const ScoreModel& model, std::size_t n, const NoiseSchedule& schedule,
                    const SamplerConfig& config) {
  model.validate();
  return sample(model_score(model), model.dim(), n, schedule, config);
}

}  // namespace hebm
