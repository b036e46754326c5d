#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "hebm/hybrid_model.hpp"
#include "hebm/numcore/adam.hpp"
#include "hebm/rng.hpp"

namespace hebm {

/// Raised when the training loss exceeds the divergence threshold.
class DivergenceError : public NumericError {
 public:
  using NumericError::NumericError;
};

/// Strictly decreasing noise levels with per-level weights lambda(sigma) = sigma^2.
struct NoiseSchedule {
  std::vector<double> sigmas;
  std::vector<double> weights;

  static NoiseSchedule from_sigmas(std::vector<double> sigmas) {
    NoiseSchedule s;
    s.weights.reserve(sigmas.size());
    for (double v : sigmas) s.weights.push_back(v * v);
    s.sigmas = std::move(sigmas);
    s.validate();
    return s;
  }

  static NoiseSchedule geometric(double sigma_max, double sigma_min, std::size_t levels) {
    if (levels == 0) throw ConfigError("noise schedule needs at least one level");
    if (!(sigma_min > 0.0) || !(sigma_max > 0.0)) throw ConfigError("noise levels must be positive");
    if (levels > 1 && !(sigma_max > sigma_min)) throw ConfigError("sigma_max must exceed sigma_min");
    std::vector<double> sig(levels);
    if (levels == 1) {
      sig[0] = sigma_max;
    } else {
      const double ratio = std::log(sigma_min / sigma_max) / static_cast<double>(levels - 1);
      for (std::size_t i = 0; i < levels; ++i) sig[i] = sigma_max * std::exp(ratio * static_cast<double>(i));
      sig.back() = sigma_min;
    }
    return from_sigmas(std::move(sig));
  }

  std::size_t levels() const noexcept { return sigmas.size(); }
  double largest() const { return sigmas.front(); }
  double smallest() const { return sigmas.back(); }

  void validate() const {
    if (sigmas.empty()) throw ConfigError("noise schedule needs at least one level");
    if (weights.size() != sigmas.size()) throw ConfigError("noise schedule weights do not match levels");
    for (std::size_t i = 0; i < sigmas.size(); ++i) {
      if (!(sigmas[i] > 0.0) || !std::isfinite(sigmas[i])) throw ConfigError("noise levels must be positive");
      if (!(weights[i] > 0.0)) throw ConfigError("noise level weights must be positive");
      if (i > 0 && !(sigmas[i] < sigmas[i - 1])) throw ConfigError("noise levels must be strictly decreasing");
    }
  }
};

/// Largest pairwise distance among (at most the first 1000) data rows.
inline double estimate_sigma_max(const Array& data) {
  const std::size_t n = std::min<std::size_t>(data.rows(), 1000);
  double best = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      double d2 = 0.0;
      for (std::size_t c = 0; c < data.cols(); ++c) {
        const double d = data(i, c) - data(j, c);
        d2 += d * d;
      }
      best = std::max(best, d2);
    }
  }
  return std::sqrt(best);
}

struct Perturbation {
  std::vector<double> x_tilde;
  std::vector<double> target;  // (x - x_tilde) / sigma^2
};

/// x_tilde = x + sigma z with z ~ N(0, I); the target is the Gaussian kernel score.
inline Perturbation perturb(std::span<const double> x, double sigma, Rng& rng) {
  Perturbation p{std::vector<double>(x.size()), std::vector<double>(x.size())};
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double z = rng.normal();
    p.x_tilde[i] = x[i] + sigma * z;
    p.target[i] = (x[i] - p.x_tilde[i]) / (sigma * sigma);
  }
  return p;
}

enum class NoiseMode {
  stochastic,  // one uniformly drawn level per example
  exact,       // every example at every level
};

/// A batch of perturbed rows. `row_weight` already folds in lambda(sigma) and the averaging.
struct PerturbedBatch {
  Array x_tilde;
  Array target;
  Array x_clean;
  std::vector<std::size_t> level;
  std::vector<double> row_weight;

  std::size_t rows() const noexcept { return level.size(); }
};

/**
 * Perturbs every example once per drawn level. With `antithetic`, each draw
 * also emits the mirrored row x - sigma z at the same level; the pair shares
 * the row weight.
 */
inline PerturbedBatch perturb_batch(const Array& batch, const NoiseSchedule& schedule, Rng& rng, NoiseMode mode,
                                   bool antithetic = false) {
  if (batch.rank() != 2 || batch.rows() == 0) throw ArgumentError("dsm: batch must be a non-empty (n, d) array");
  schedule.validate();
  const std::size_t n = batch.rows();
  const std::size_t d = batch.cols();
  const std::size_t k = schedule.levels();
  const std::size_t rows = (mode == NoiseMode::exact ? n * k : n) * (antithetic ? 2 : 1);

  PerturbedBatch pb{Array({rows, d}), Array({rows, d}), Array({rows, d}), {}, {}};
  pb.level.reserve(rows);
  pb.row_weight.reserve(rows);
  std::size_t r = 0;
  auto emit = [&](std::size_t example, std::size_t lvl, double avg) {
    const double sigma = schedule.sigmas[lvl];
    const auto x = batch.row(example);
    auto p = perturb(x, sigma, rng);
    const double w = schedule.weights[lvl] * avg * (antithetic ? 0.5 : 1.0);
    std::copy(p.x_tilde.begin(), p.x_tilde.end(), pb.x_tilde.row(r).begin());
    std::copy(p.target.begin(), p.target.end(), pb.target.row(r).begin());
    std::copy(x.begin(), x.end(), pb.x_clean.row(r).begin());
    pb.level.push_back(lvl);
    pb.row_weight.push_back(w);
    ++r;
    if (antithetic) {
      for (std::size_t c = 0; c < x.size(); ++c) {
        pb.x_tilde(r, c) = 2.0 * x[c] - p.x_tilde[c];
        pb.target(r, c) = -p.target[c];
        pb.x_clean(r, c) = x[c];
      }
      pb.level.push_back(lvl);
      pb.row_weight.push_back(w);
      ++r;
    }
  };
  for (std::size_t i = 0; i < n; ++i) {
    if (mode == NoiseMode::exact) {
      for (std::size_t l = 0; l < k; ++l) emit(i, l, 1.0 / static_cast<double>(n * k));
    } else {
      emit(i, rng.index(k), 1.0 / static_cast<double>(n));
    }
  }
  return pb;
}

/// Any score provider, given the batch row it is evaluated for.
using ScoreOracle = std::function<std::vector<double>(std::size_t row, std::span<const double> x_tilde, double sigma)>;

namespace detail {

inline void check_loss(const std::vector<double>& per_level, const NoiseSchedule& schedule) {
  for (std::size_t l = 0; l < per_level.size(); ++l) {
    if (!std::isfinite(per_level[l])) {
      throw NumericError("non-finite DSM loss at noise level " + std::to_string(l) + " (sigma=" +
                         format_double(schedule.sigmas[l]) + ")");
    }
  }
}

}  // namespace detail

/// Weighted denoising score-matching loss of an arbitrary score provider.
inline double dsm_loss_value(const PerturbedBatch& pb, const NoiseSchedule& schedule, const ScoreOracle& oracle) {
  std::vector<double> per_level(schedule.levels(), 0.0);
  for (std::size_t r = 0; r < pb.rows(); ++r) {
    const auto s = oracle(r, pb.x_tilde.row(r), schedule.sigmas[pb.level[r]]);
    const auto t = pb.target.row(r);
    double e = 0.0;
    for (std::size_t c = 0; c < t.size(); ++c) e += (t[c] - s[c]) * (t[c] - s[c]);
    per_level[pb.level[r]] += pb.row_weight[r] * e;
  }
  detail::check_loss(per_level, schedule);
  return std::accumulate(per_level.begin(), per_level.end(), 0.0);
}

struct DsmResult {
  double loss = 0.0;
  std::vector<Array> theta_grad;  // MlpParams::parameters() order
  std::vector<double> eta_grad;
};

/// Loss and parameter gradients of the hybrid model on a fixed perturbed batch.
/// Where the statistic gradient is evaluated during training.
enum class StatisticPoint { perturbed, clean };

inline DsmResult dsm_loss(const ScoreModel& model, const PerturbedBatch& pb, const NoiseSchedule& schedule,
                          StatisticPoint at = StatisticPoint::perturbed) {
  const std::size_t rows = pb.rows();
  const std::size_t d = model.dim();
  if (pb.x_tilde.cols() != d) throw ShapeError("dsm: batch dimension does not match the model");

  Array input({rows, d + 1});
  std::vector<double> inv_sigma(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double sigma = schedule.sigmas[pb.level[r]];
    auto src = pb.x_tilde.row(r);
    std::copy(src.begin(), src.end(), input.row(r).begin());
    input(r, d) = std::log(sigma);
    inv_sigma[r] = 1.0 / sigma;
  }

  Tape tape;
  MlpNodes nodes = record_forward(tape, model.net, input);
  const Array& net_out = tape.value(nodes.output);

  const bool use_stat = model.statistic.kind() != StatisticKind::none;
  DsmResult res;
  res.eta_grad.assign(model.eta.size(), 0.0);
  std::vector<double> per_level(schedule.levels(), 0.0);
  Array seed({rows, d});
  for (std::size_t r = 0; r < rows; ++r) {
    auto xt = at == StatisticPoint::clean ? pb.x_clean.row(r) : pb.x_tilde.row(r);
    std::vector<double> stat_term = use_stat ? model.statistic.gradient_dot(xt, model.eta) : std::vector<double>(d, 0.0);
    std::vector<double> upstream(d);
    double e = 0.0;
    for (std::size_t c = 0; c < d; ++c) {
      const double s = net_out(r, c) * inv_sigma[r] + stat_term[c];
      const double resid = pb.target(r, c) - s;
      e += resid * resid;
      upstream[c] = -2.0 * pb.row_weight[r] * resid;
      seed(r, c) = upstream[c] * inv_sigma[r];
    }
    per_level[pb.level[r]] += pb.row_weight[r] * e;
    if (use_stat) {
      const auto g = model.statistic.gradient_transpose_dot(xt, upstream);
      for (std::size_t j = 0; j < g.size(); ++j) res.eta_grad[j] += g[j];
    }
  }
  detail::check_loss(per_level, schedule);
  res.loss = std::accumulate(per_level.begin(), per_level.end(), 0.0);

  Gradients grads = tape.backward(nodes.output, seed);
  res.theta_grad.reserve(nodes.params.size());
  for (NodeId id : nodes.params) res.theta_grad.push_back(grads.take(id));
  return res;
}

inline DsmResult dsm_loss(const ScoreModel& model, const Array& batch, const NoiseSchedule& schedule, Rng& rng,
                          NoiseMode mode = NoiseMode::stochastic, bool antithetic = false) {
  return dsm_loss(model, perturb_batch(batch, schedule, rng, mode, antithetic), schedule);
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

struct TrainConfig {
  std::size_t epochs = 100;
  std::size_t batch_size = 128;
  double lr = 1e-3;
  double lr_eta = 1e-2;
  /// Fraction of epochs at constant lr before a linear decay towards zero; 1 keeps lr constant.
  double decay_start = 1.0;
  std::uint64_t seed = 0;
  NoiseMode mode = NoiseMode::stochastic;
  bool antithetic = false;
  StatisticPoint statistic_at = StatisticPoint::perturbed;
  bool freeze_eta = false;
  double divergence_threshold = 1e6;
  std::size_t checkpoint_every = 0;

  void validate() const {
    if (epochs == 0 || batch_size == 0) throw ConfigError("epochs and batch size must be positive");
    if (lr < 0.0 || lr_eta < 0.0) throw ConfigError("learning rates must be non-negative");
    if (decay_start < 0.0 || decay_start > 1.0) throw ConfigError("decay_start must lie in [0, 1]");
  }

  double lr_at(std::size_t epoch) const {
    const double start = decay_start * static_cast<double>(epochs);
    const double e = static_cast<double>(epoch);
    if (e < start || decay_start >= 1.0) return lr;
    return lr * (static_cast<double>(epochs) - e) / (static_cast<double>(epochs) - start);
  }
};

struct EpochRecord {
  std::size_t epoch = 0;
  double loss = 0.0;
  std::vector<double> eta;
};

inline std::string format_log_line(const EpochRecord& rec) {
  std::string s = "epoch " + std::to_string(rec.epoch) + " loss " + format_double(rec.loss) + " eta";
  for (double e : rec.eta) s += " " + format_double(e);
  return s;
}

using EpochCallback = std::function<void(const EpochRecord&, const ScoreModel&)>;

/**
 * Trains network parameters and eta with separate Adam states.
 *
 * Both update on every step; eta keeps the constant rate lr_eta while the
 * network rate follows lr_at. With `freeze_eta` the statistic term is kept but
 * eta stays at its current value, so paired runs share one code path. The run
 * is a deterministic function of (model, data, schedule, config).
 */
inline std::vector<EpochRecord> train(ScoreModel& model, const Array& data, const NoiseSchedule& schedule,
                                      const TrainConfig& config, const EpochCallback& on_epoch = {}) {
  config.validate();
  schedule.validate();
  model.validate();
  if (data.rank() != 2 || data.rows() == 0) throw ArgumentError("train: dataset is empty");
  if (data.cols() != model.dim()) throw ShapeError("train: data dimension does not match the model");

  Rng rng(config.seed, 0x7472);
  AdamState adam;
  adam.lr = config.lr;
  AdamState eta_adam;
  eta_adam.lr = config.lr_eta;
  Array eta_value({model.eta.size()}, model.eta);
  ParamRef eta_ref{"eta", &eta_value};
  const std::size_t n = data.rows();
  const std::size_t d = data.cols();
  std::vector<std::size_t> order(n);
  std::vector<EpochRecord> log;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng.engine());
    adam.lr = config.lr_at(epoch);

    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < n; start += config.batch_size) {
      const std::size_t b = std::min(config.batch_size, n - start);
      Array batch({b, d});
      for (std::size_t i = 0; i < b; ++i) {
        auto src = data.row(order[start + i]);
        std::copy(src.begin(), src.end(), batch.row(i).begin());
      }
      DsmResult res =
          dsm_loss(model, perturb_batch(batch, schedule, rng, config.mode, config.antithetic), schedule, config.statistic_at);
      if (!(res.loss <= config.divergence_threshold)) {
        throw DivergenceError("training diverged at epoch " + std::to_string(epoch) + ": loss " +
                              format_double(res.loss));
      }
      auto params = model.net.parameters();
      adam_step(adam, params, res.theta_grad);
      if (!config.freeze_eta) {
        const Array eta_grad({model.eta.size()}, res.eta_grad);
        adam_step(eta_adam, std::span<const ParamRef>(&eta_ref, 1), std::span<const Array>(&eta_grad, 1));
        model.eta = eta_value.values();
      }
      loss_sum += res.loss;
      ++batches;
    }
    EpochRecord rec{epoch, loss_sum / static_cast<double>(batches), model.eta};
    log.push_back(rec);
    if (on_epoch) on_epoch(rec, model);
  }
  return log;
}

}  // namespace hebm
