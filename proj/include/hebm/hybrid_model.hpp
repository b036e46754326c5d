#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "hebm/numcore/checkpoint.hpp"
#include "hebm/numcore/mlp.hpp"
#include "hebm/statistics.hpp"

namespace hebm {

/**
 * Hybrid score model: s(x, sigma) = net([x, log sigma]) / sigma + grad T(x) . eta.
 *
 * Only the score is parameterized; the neural energy itself is never formed.
 * `eta` starts at zero.
 */
struct ScoreModel {
  MlpParams net;
  std::vector<double> eta;
  StatisticFn statistic;

  std::size_t dim() const noexcept { return statistic.input_dim(); }

  static ScoreModel create(StatisticFn statistic, const std::vector<std::size_t>& hidden, Activation activation,
                           Rng& rng) {
    const std::size_t d = statistic.input_dim();
    std::vector<std::size_t> dims{d + 1};
    dims.insert(dims.end(), hidden.begin(), hidden.end());
    dims.push_back(d);
    const std::size_t m = statistic.output_dim();
    return ScoreModel{MlpParams::create(dims, activation, rng), std::vector<double>(m, 0.0), std::move(statistic)};
  }

  void validate() const {
    net.validate();
    if (net.input_dim() != dim() + 1 || net.output_dim() != dim()) {
      throw ShapeError("score network dimensions do not match the statistic dimension");
    }
    if (eta.size() != statistic.output_dim()) throw ShapeError("eta length does not match statistic output");
    for (double e : eta) {
      if (!std::isfinite(e)) throw NumericError("eta is not finite");
    }
  }
};

namespace detail {

inline void check_score_input(const ScoreModel& model, std::span<const double> x, double sigma) {
  if (x.size() != model.dim()) throw ShapeError("score: x has length " + std::to_string(x.size()));
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw ArgumentError("score: sigma must be positive and finite");
  for (double v : x) {
    if (!std::isfinite(v)) throw NumericError("score: non-finite input");
  }
}

inline Array conditioned_input(std::span<const double> x, double sigma) {
  Array in({x.size() + 1});
  std::copy(x.begin(), x.end(), in.data().begin());
  in[x.size()] = std::log(sigma);
  return in;
}

inline bool eta_is_zero(const ScoreModel& model) {
  for (double e : model.eta) {
    if (e != 0.0) return false;
  }
  return true;
}

}  // namespace detail

/// Neural part of the score only: net([x, log sigma]) / sigma.
inline std::vector<double> neural_score(const ScoreModel& model, std::span<const double> x, double sigma) {
  detail::check_score_input(model, x, sigma);
  Array out = forward(model.net, detail::conditioned_input(x, sigma));
  std::vector<double> s(out.data().begin(), out.data().end());
  for (double& v : s) v /= sigma;
  return s;
}

inline std::vector<double> score(const ScoreModel& model, std::span<const double> x, double sigma) {
  auto s = neural_score(model, x, sigma);
  const auto stat = model.statistic.gradient_dot(x, model.eta);
  for (std::size_t i = 0; i < s.size(); ++i) s[i] += stat[i];
  return s;
}

struct ScoreParamGrads {
  std::vector<Array> theta;  // MlpParams::parameters() order
  std::vector<double> eta;
};

/// Gradients of <upstream, score(model, x, sigma)> w.r.t. network parameters and eta.
inline ScoreParamGrads score_params_grad(const ScoreModel& model, std::span<const double> x, double sigma,
                                         std::span<const double> upstream) {
  detail::check_score_input(model, x, sigma);
  if (upstream.size() != model.dim()) throw ShapeError("score_params_grad: upstream has wrong length");
  Array seed({model.dim()});
  for (std::size_t i = 0; i < seed.size(); ++i) seed[i] = upstream[i] / sigma;
  ScoreParamGrads g;
  g.theta = backward_params(model.net, detail::conditioned_input(x, sigma), seed);
  g.eta = model.statistic.gradient_transpose_dot(x, upstream);
  return g;
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

/// Adds the model's header records and parameter blocks to `ckpt`.
inline void append_to_checkpoint(const ScoreModel& model, Checkpoint& ckpt) {
  ckpt.header.push_back("statistic " + model.statistic.describe());
  std::string mlp = "mlp";
  mlp += " " + std::to_string(model.net.input_dim());
  for (const auto& layer : model.net.layers) mlp += " " + std::to_string(layer.out_dim());
  for (const auto& layer : model.net.layers) mlp += " " + to_string(layer.activation);
  ckpt.header.push_back(mlp);
  for (const auto& p : model.net.parameters()) ckpt.params.emplace_back(p.name, p.value->values());
  ckpt.params.emplace_back("eta", model.eta);
}

inline ScoreModel model_from_checkpoint(const Checkpoint& ckpt) {
  auto stat_tokens = ckpt.header_record("statistic");
  stat_tokens.erase(stat_tokens.begin());
  StatisticFn statistic = StatisticFn::parse(stat_tokens);

  const auto mlp = ckpt.header_record("mlp");
  if (mlp.size() < 4 || (mlp.size() - 2) % 2 != 0) throw ParseError("checkpoint", 0, "malformed 'mlp' record");
  const std::size_t n_layers = (mlp.size() - 2) / 2;
  std::vector<std::size_t> dims;
  for (std::size_t i = 1; i <= n_layers + 1; ++i) dims.push_back(std::stoul(mlp[i]));

  MlpParams net;
  for (std::size_t l = 0; l < n_layers; ++l) {
    const std::string prefix = "layer" + std::to_string(l);
    net.layers.push_back({Array({dims[l + 1], dims[l]}, ckpt.param(prefix + ".weight")),
                          Array({dims[l + 1]}, ckpt.param(prefix + ".bias")),
                          parse_activation(mlp[n_layers + 2 + l])});
  }
  ScoreModel model{std::move(net), ckpt.param("eta"), std::move(statistic)};
  model.validate();
  return model;
}

}  // namespace hebm
