#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "hebm/numcore/array.hpp"
#include "hebm/numcore/mlp.hpp"

namespace hebm {

struct AdamState {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t step = 0;
  std::vector<Array> first_moment;
  std::vector<Array> second_moment;
};

/**
 * One Adam update with bias correction, applied in place.
 *
 * Moment accumulators are created (zeroed) on the first call. Every gradient
 * is checked for finiteness before any parameter changes.
 */
inline void adam_step(AdamState& state, std::span<const ParamRef> params, std::span<const Array> grads) {
  if (params.size() != grads.size()) throw ShapeError("adam_step: parameter and gradient counts differ");
  for (std::size_t p = 0; p < params.size(); ++p) {
    require_same_shape(*params[p].value, grads[p], "adam_step");
    if (!grads[p].all_finite()) throw NumericError("non-finite gradient for parameter '" + params[p].name + "'");
  }
  if (state.first_moment.empty()) {
    for (const auto& p : params) {
      state.first_moment.emplace_back(p.value->shape());
      state.second_moment.emplace_back(p.value->shape());
    }
  } else if (state.first_moment.size() != params.size()) {
    throw StateError("adam_step: parameter set changed between steps");
  }

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t p = 0; p < params.size(); ++p) {
    Array& value = *params[p].value;
    Array& m = state.first_moment[p];
    Array& v = state.second_moment[p];
    const Array& g = grads[p];
    for (std::size_t i = 0; i < value.size(); ++i) {
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      value[i] -= state.lr * m_hat / (std::sqrt(v_hat) + state.eps);
    }
  }
}

}  // namespace hebm
