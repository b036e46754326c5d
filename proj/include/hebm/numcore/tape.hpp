#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <optional>
#include <vector>

#include "hebm/numcore/array.hpp"

namespace hebm {

using NodeId = std::size_t;

enum class OpKind { leaf, linear, tanh, softplus, add, sub, mul, scale, scale_rows, square, sum };

/// Numerically stable log(1 + exp(x)).
inline double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

inline double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

/// Gradients produced by one backward sweep, indexed by node id.
class Gradients {
 public:
  explicit Gradients(std::vector<std::optional<Array>> grads) : grads_(std::move(grads)) {}

  /// Gradient of node `id`; nodes not on a path to the output get a zero array.
  bool has(NodeId id) const { return id < grads_.size() && grads_[id].has_value(); }

  const Array& operator[](NodeId id) const {
    if (!has(id)) throw StateError("no gradient recorded for node " + std::to_string(id));
    return *grads_[id];
  }

  Array take(NodeId id) {
    if (!has(id)) throw StateError("no gradient recorded for node " + std::to_string(id));
    return std::move(*grads_[id]);
  }

 private:
  std::vector<std::optional<Array>> grads_;
};

/**
 * Reverse-mode automatic differentiation tape.
 *
 * Nodes are appended in evaluation order, so every node's inputs precede it.
 * The backward sweep walks nodes in strict reverse insertion order, which
 * keeps gradient accumulation order (and therefore the resulting bits) fixed.
 *
 * A tape is single-use: record one evaluation, call backward, discard.
 */
class Tape {
 public:
  NodeId leaf(Array value) { return push(OpKind::leaf, {}, std::move(value)); }

  /// y = x W^T + b for x of shape (rows, in) or (in), W of shape (out, in), b of shape (out).
  NodeId linear(NodeId x, NodeId w, NodeId b) {
    const Array& xv = value(x);
    const Array& wv = value(w);
    const Array& bv = value(b);
    if (wv.rank() != 2 || bv.rank() != 1 || wv.extent(0) != bv.extent(0) || xv.cols() != wv.extent(1) ||
        xv.rank() > 2) {
      throw ShapeError("linear: incompatible shapes x" + shape_string(xv.shape()) + " W" +
                       shape_string(wv.shape()) + " b" + shape_string(bv.shape()));
    }
    const std::size_t rows = xv.rows();
    const std::size_t in = wv.extent(1);
    const std::size_t out = wv.extent(0);
    Array y(xv.rank() == 2 ? Shape{rows, out} : Shape{out});
    for (std::size_t r = 0; r < rows; ++r) {
      const double* xr = xv.data().data() + r * in;
      for (std::size_t o = 0; o < out; ++o) {
        const double* wo = wv.data().data() + o * in;
        double s = bv[o];
        for (std::size_t i = 0; i < in; ++i) s += xr[i] * wo[i];
        y[r * out + o] = s;
      }
    }
    return push(OpKind::linear, {x, w, b}, std::move(y));
  }

  NodeId tanh(NodeId a) {
    Array y = value(a);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = std::tanh(y[i]);
    return push(OpKind::tanh, {a}, std::move(y));
  }

  NodeId softplus(NodeId a) {
    Array y = value(a);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = hebm::softplus(y[i]);
    return push(OpKind::softplus, {a}, std::move(y));
  }

  NodeId add(NodeId a, NodeId b) { return push(OpKind::add, {a, b}, hebm::add(value(a), value(b))); }
  NodeId sub(NodeId a, NodeId b) { return push(OpKind::sub, {a, b}, hebm::sub(value(a), value(b))); }
  NodeId mul(NodeId a, NodeId b) { return push(OpKind::mul, {a, b}, hebm::mul(value(a), value(b))); }

  NodeId scale(NodeId a, double factor) {
    NodeId id = push(OpKind::scale, {a}, scaled(value(a), factor));
    nodes_[id].factors = {factor};
    return id;
  }

  /// Multiplies row r of a matrix by factors[r]; the factors are constants.
  NodeId scale_rows(NodeId a, std::vector<double> factors) {
    const Array& av = value(a);
    if (av.rows() != factors.size()) throw ShapeError("scale_rows: factor count does not match rows");
    Array y = av;
    const std::size_t cols = av.cols();
    for (std::size_t r = 0; r < factors.size(); ++r) {
      for (std::size_t c = 0; c < cols; ++c) y[r * cols + c] *= factors[r];
    }
    NodeId id = push(OpKind::scale_rows, {a}, std::move(y));
    nodes_[id].factors = std::move(factors);
    return id;
  }

  NodeId square(NodeId a) { return push(OpKind::square, {a}, hebm::mul(value(a), value(a))); }

  /// Sum of all elements, as a length-1 vector.
  NodeId sum(NodeId a) { return push(OpKind::sum, {a}, Array::vector({hebm::sum(value(a))})); }

  const Array& value(NodeId id) const {
    if (id >= nodes_.size()) throw StateError("unknown tape node " + std::to_string(id));
    return nodes_[id].value;
  }

  std::size_t size() const noexcept { return nodes_.size(); }
  bool empty() const noexcept { return nodes_.empty(); }

  /// Backpropagates `seed` (shaped like the output value) from `output` to every node.
  Gradients backward(NodeId output, const Array& seed) const {
    if (nodes_.empty()) throw StateError("backward called on an empty tape");
    if (output >= nodes_.size()) throw StateError("backward: unknown output node");
    require_same_shape(nodes_[output].value, seed, "backward seed");

    std::vector<std::optional<Array>> grads(nodes_.size());
    grads[output] = seed;
    for (std::size_t k = output + 1; k-- > 0;) {
      if (!grads[k]) continue;
      const Node& node = nodes_[k];
      const Array& g = *grads[k];
      switch (node.op) {
        case OpKind::leaf:
          break;
        case OpKind::linear:
          backward_linear(node, g, grads);
          break;
        case OpKind::tanh: {
          Array d = g;
          for (std::size_t i = 0; i < d.size(); ++i) d[i] *= 1.0 - node.value[i] * node.value[i];
          accumulate(grads, node.inputs[0], d);
          break;
        }
        case OpKind::softplus: {
          const Array& x = value(node.inputs[0]);
          Array d = g;
          for (std::size_t i = 0; i < d.size(); ++i) d[i] *= sigmoid(x[i]);
          accumulate(grads, node.inputs[0], d);
          break;
        }
        case OpKind::add:
          accumulate(grads, node.inputs[0], g);
          accumulate(grads, node.inputs[1], g);
          break;
        case OpKind::sub:
          accumulate(grads, node.inputs[0], g);
          accumulate(grads, node.inputs[1], scaled(g, -1.0));
          break;
        case OpKind::mul:
          accumulate(grads, node.inputs[0], hebm::mul(g, value(node.inputs[1])));
          accumulate(grads, node.inputs[1], hebm::mul(g, value(node.inputs[0])));
          break;
        case OpKind::scale:
          accumulate(grads, node.inputs[0], scaled(g, node.factors[0]));
          break;
        case OpKind::scale_rows: {
          Array d = g;
          const std::size_t cols = d.cols();
          for (std::size_t r = 0; r < node.factors.size(); ++r) {
            for (std::size_t c = 0; c < cols; ++c) d[r * cols + c] *= node.factors[r];
          }
          accumulate(grads, node.inputs[0], d);
          break;
        }
        case OpKind::square:
          accumulate(grads, node.inputs[0], scaled(hebm::mul(g, value(node.inputs[0])), 2.0));
          break;
        case OpKind::sum:
          accumulate(grads, node.inputs[0], Array(value(node.inputs[0]).shape(), g[0]));
          break;
      }
    }
    return Gradients(std::move(grads));
  }

 private:
  struct Node {
    OpKind op;
    std::array<NodeId, 3> inputs{};
    std::size_t n_inputs = 0;
    Array value;
    std::vector<double> factors;
  };

  NodeId push(OpKind op, std::initializer_list<NodeId> inputs, Array value) {
    Node node{op, {}, inputs.size(), std::move(value), {}};
    std::size_t i = 0;
    for (NodeId in : inputs) {
      if (in >= nodes_.size()) throw StateError("tape input refers to a later node");
      node.inputs[i++] = in;
    }
    nodes_.push_back(std::move(node));
    return nodes_.size() - 1;
  }

  static void accumulate(std::vector<std::optional<Array>>& grads, NodeId id, const Array& g) {
    if (!grads[id]) {
      grads[id] = g;
    } else {
      Array& acc = *grads[id];
      for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += g[i];
    }
  }

  void backward_linear(const Node& node, const Array& g, std::vector<std::optional<Array>>& grads) const {
    const Array& x = value(node.inputs[0]);
    const Array& w = value(node.inputs[1]);
    const std::size_t rows = x.rows();
    const std::size_t in = w.extent(1);
    const std::size_t out = w.extent(0);

    Array dx(x.shape());
    Array dw(w.shape());
    Array db(Shape{out});
    for (std::size_t r = 0; r < rows; ++r) {
      const double* gr = g.data().data() + r * out;
      const double* xr = x.data().data() + r * in;
      double* dxr = dx.data().data() + r * in;
      for (std::size_t o = 0; o < out; ++o) {
        const double go = gr[o];
        if (go == 0.0) continue;
        const double* wo = w.data().data() + o * in;
        double* dwo = dw.data().data() + o * in;
        for (std::size_t i = 0; i < in; ++i) {
          dxr[i] += go * wo[i];
          dwo[i] += go * xr[i];
        }
        db[o] += go;
      }
    }
    accumulate(grads, node.inputs[0], dx);
    accumulate(grads, node.inputs[1], dw);
    accumulate(grads, node.inputs[2], db);
  }

  std::vector<Node> nodes_;
};

}  // namespace hebm
