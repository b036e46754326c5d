#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "hebm/numcore/array.hpp"
#include "hebm/numcore/tape.hpp"
#include "hebm/rng.hpp"

namespace hebm {

enum class Activation { tanh, softplus, identity };

inline std::string to_string(Activation a) {
  switch (a) {
    case Activation::tanh: return "tanh";
    case Activation::softplus: return "softplus";
    case Activation::identity: return "identity";
  }
  return "?";
}

inline Activation parse_activation(const std::string& name) {
  if (name == "tanh") return Activation::tanh;
  if (name == "softplus") return Activation::softplus;
  if (name == "identity") return Activation::identity;
  throw ConfigError("unknown activation '" + name + "'");
}

inline double activate(Activation a, double x) {
  switch (a) {
    case Activation::tanh: return std::tanh(x);
    case Activation::softplus: return softplus(x);
    case Activation::identity: return x;
  }
  return x;
}

struct DenseLayer {
  Array weight;  // (out, in)
  Array bias;    // (out)
  Activation activation = Activation::tanh;

  std::size_t in_dim() const { return weight.extent(1); }
  std::size_t out_dim() const { return weight.extent(0); }
};

/// Non-owning handle to one named parameter tensor.
struct ParamRef {
  std::string name;
  Array* value;
};

struct ConstParamRef {
  std::string name;
  const Array* value;
};

/**
 * Multilayer perceptron parameters.
 *
 * Layer dimensions chain and the final activation is always identity.
 */
struct MlpParams {
  std::vector<DenseLayer> layers;

  std::size_t input_dim() const { return layers.empty() ? 0 : layers.front().in_dim(); }
  std::size_t output_dim() const { return layers.empty() ? 0 : layers.back().out_dim(); }

  /// Glorot-uniform hidden layers; the final layer starts at exactly zero.
  static MlpParams create(const std::vector<std::size_t>& dims, Activation hidden, Rng& rng) {
    if (dims.size() < 2) throw ConfigError("an MLP needs at least input and output dimensions");
    MlpParams p;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
      const std::size_t in = dims[l];
      const std::size_t out = dims[l + 1];
      if (in == 0 || out == 0) throw ConfigError("MLP layer dimensions must be positive");
      const bool last = l + 2 == dims.size();
      DenseLayer layer{Array({out, in}), Array({out}), last ? Activation::identity : hidden};
      if (!last) {
        const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
        for (std::size_t i = 0; i < layer.weight.size(); ++i) layer.weight[i] = rng.uniform(-limit, limit);
      }
      p.layers.push_back(std::move(layer));
    }
    return p;
  }

  std::vector<ParamRef> parameters() {
    std::vector<ParamRef> out;
    for (std::size_t l = 0; l < layers.size(); ++l) {
      out.push_back({"layer" + std::to_string(l) + ".weight", &layers[l].weight});
      out.push_back({"layer" + std::to_string(l) + ".bias", &layers[l].bias});
    }
    return out;
  }

  std::vector<ConstParamRef> parameters() const {
    std::vector<ConstParamRef> out;
    for (std::size_t l = 0; l < layers.size(); ++l) {
      out.push_back({"layer" + std::to_string(l) + ".weight", &layers[l].weight});
      out.push_back({"layer" + std::to_string(l) + ".bias", &layers[l].bias});
    }
    return out;
  }

  void validate() const {
    if (layers.empty()) throw ConfigError("MLP has no layers");
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const auto& layer = layers[l];
      if (layer.weight.rank() != 2 || layer.bias.rank() != 1 || layer.bias.size() != layer.out_dim()) {
        throw ShapeError("layer " + std::to_string(l) + " has inconsistent weight/bias shapes");
      }
      if (l > 0 && layers[l - 1].out_dim() != layer.in_dim()) {
        throw ShapeError("layer " + std::to_string(l) + " input does not chain with previous output");
      }
    }
    if (layers.back().activation != Activation::identity) {
      throw ConfigError("final MLP activation must be identity");
    }
  }
};

/// Evaluates the network on a vector (in) or a batch (rows, in).
inline Array forward(const MlpParams& params, const Array& input) {
  if (input.rank() == 0 || input.rank() > 2 || input.cols() != params.input_dim()) {
    throw ShapeError("forward: input shape " + shape_string(input.shape()) + " does not match input_dim " +
                     std::to_string(params.input_dim()));
  }
  const std::size_t rows = input.rows();
  std::vector<double> cur(input.data().begin(), input.data().end());
  std::vector<double> next;
  for (const auto& layer : params.layers) {
    const std::size_t in = layer.in_dim();
    const std::size_t out = layer.out_dim();
    next.assign(rows * out, 0.0);
    for (std::size_t r = 0; r < rows; ++r) {
      const double* xr = cur.data() + r * in;
      for (std::size_t o = 0; o < out; ++o) {
        const double* wo = layer.weight.data().data() + o * in;
        double s = layer.bias[o];
        for (std::size_t i = 0; i < in; ++i) s += xr[i] * wo[i];
        next[r * out + o] = activate(layer.activation, s);
      }
    }
    cur.swap(next);
  }
  const std::size_t out = params.output_dim();
  return input.rank() == 2 ? Array({rows, out}, std::move(cur)) : Array({out}, std::move(cur));
}

/// Node ids of one network evaluation recorded on a tape.
struct MlpNodes {
  std::vector<NodeId> params;  // same order as MlpParams::parameters()
  NodeId input;
  NodeId output;
};

inline MlpNodes record_forward(Tape& tape, const MlpParams& params, const Array& input) {
  if (input.rank() == 0 || input.rank() > 2 || input.cols() != params.input_dim()) {
    throw ShapeError("forward: input shape " + shape_string(input.shape()) + " does not match input_dim " +
                     std::to_string(params.input_dim()));
  }
  MlpNodes nodes;
  nodes.input = tape.leaf(input);
  NodeId cur = nodes.input;
  for (const auto& layer : params.layers) {
    NodeId w = tape.leaf(layer.weight);
    NodeId b = tape.leaf(layer.bias);
    nodes.params.push_back(w);
    nodes.params.push_back(b);
    cur = tape.linear(cur, w, b);
    switch (layer.activation) {
      case Activation::tanh: cur = tape.tanh(cur); break;
      case Activation::softplus: cur = tape.softplus(cur); break;
      case Activation::identity: break;
    }
  }
  nodes.output = cur;
  return nodes;
}

/// Parameter gradients of <upstream, net(input)>, in parameters() order.
inline std::vector<Array> backward_params(const MlpParams& params, const Array& input, const Array& upstream) {
  Tape tape;
  MlpNodes nodes = record_forward(tape, params, input);
  Gradients grads = tape.backward(nodes.output, upstream);
  std::vector<Array> out;
  out.reserve(nodes.params.size());
  for (NodeId id : nodes.params) out.push_back(grads.take(id));
  return out;
}

}  // namespace hebm
