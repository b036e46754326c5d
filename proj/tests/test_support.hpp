#pragma once

// Independent oracles shared by the test suites. Nothing here calls into the
// code paths it is used to check.

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "hebm/numcore/array.hpp"
#include "hebm/numcore/mlp.hpp"
#include "hebm/rng.hpp"

namespace hebm::testing {

/// Central-difference gradient of a scalar function.
inline std::vector<double> numeric_gradient(const std::function<double(std::span<const double>)>& f,
                                            std::span<const double> x, double h = 1e-5) {
  std::vector<double> xp(x.begin(), x.end());
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = xp[i];
    xp[i] = orig + h;
    const double fp = f(xp);
    xp[i] = orig - h;
    const double fm = f(xp);
    xp[i] = orig;
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

/// max |a - b| / max(|a|_inf, |b|_inf).
inline double relative_error(std::span<const double> a, std::span<const double> b) {
  double err = 0.0;
  double scale = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    err = std::max(err, std::abs(a[i] - b[i]));
    scale = std::max({scale, std::abs(a[i]), std::abs(b[i])});
  }
  return scale > 0.0 ? err / scale : err;
}

inline Array random_array(Shape shape, Rng& rng, double scale = 1.0) {
  Array a(std::move(shape));
  for (std::size_t i = 0; i < a.size(); ++i) a[i] = scale * rng.normal();
  return a;
}

/// Straight-line MLP evaluation on one vector, written independently of hebm::forward.
inline std::vector<double> reference_forward(const MlpParams& p, std::vector<double> x) {
  for (const auto& layer : p.layers) {
    std::vector<double> y(layer.out_dim());
    for (std::size_t o = 0; o < y.size(); ++o) {
      long double s = layer.bias[o];
      for (std::size_t i = 0; i < x.size(); ++i) s += static_cast<long double>(layer.weight(o, i)) * x[i];
      const double v = static_cast<double>(s);
      switch (layer.activation) {
        case Activation::tanh: y[o] = std::tanh(v); break;
        case Activation::softplus: y[o] = std::log1p(std::exp(v)); break;
        case Activation::identity: y[o] = v; break;
      }
    }
    x = std::move(y);
  }
  return x;
}

/// Random network with every parameter (including the final layer) drawn N(0, scale^2).
inline MlpParams random_mlp(const std::vector<std::size_t>& dims, Activation act, Rng& rng, double scale = 0.5) {
  MlpParams p = MlpParams::create(dims, act, rng);
  for (auto& ref : p.parameters()) {
    for (std::size_t i = 0; i < ref.value->size(); ++i) (*ref.value)[i] = scale * rng.normal();
  }
  return p;
}

}  // namespace hebm::testing
