#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "hebm/neighbors.hpp"
#include "hebm/numcore/array.hpp"

namespace hebm {

// ---------------------------------------------------------------------------
// Molecules
// ---------------------------------------------------------------------------

/**
 * Fixed-size molecular graph.
 *
 * `types[i]` indexes the valence table. Generators reserve type 0 with
 * valence 0 for empty slots, so a padded slot that carries any bond counts as
 * a valency violation. `bonds` is a symmetric n x n bond-order matrix with a
 * zero diagonal; entries may be continuous while modeling.
 */
struct MolGraph {
  std::vector<int> types;
  Array bonds;
  std::vector<int> valences;

  std::size_t size() const noexcept { return types.size(); }

  static MolGraph empty(std::size_t n, std::vector<int> valences) {
    return {std::vector<int>(n, 0), Array({n, n}), std::move(valences)};
  }

  void set_bond(std::size_t i, std::size_t j, double order) {
    bonds(i, j) = order;
    bonds(j, i) = order;
  }

  double degree(std::size_t i) const {
    double d = 0.0;
    for (std::size_t j = 0; j < size(); ++j) d += bonds(i, j);
    return d;
  }

  void validate() const {
    const std::size_t n = size();
    if (bonds.shape() != Shape{n, n}) throw ShapeError("molecule bond matrix must be n x n");
    for (std::size_t i = 0; i < n; ++i) {
      if (types[i] < 0 || static_cast<std::size_t>(types[i]) >= valences.size()) {
        throw ConfigError("atom " + std::to_string(i) + " has type " + std::to_string(types[i]) +
                          " outside the valence table");
      }
      if (bonds(i, i) != 0.0) throw ArgumentError("molecule bond matrix must have a zero diagonal");
      for (std::size_t j = 0; j < n; ++j) {
        if (bonds(i, j) != bonds(j, i)) throw ArgumentError("molecule bond matrix must be symmetric");
      }
    }
  }
};

/// Flattened molecule: relaxed one-hot types (n x k) then the strict upper triangle of A.
struct MoleculeLayout {
  std::size_t n_atoms = 0;
  std::vector<int> valences;

  std::size_t k_types() const noexcept { return valences.size(); }
  std::size_t pair_count() const noexcept { return n_atoms * (n_atoms - 1) / 2; }
  std::size_t flat_dim() const noexcept { return n_atoms * k_types() + pair_count(); }
  std::size_t type_slot(std::size_t atom, std::size_t type) const noexcept { return atom * k_types() + type; }

  /// Position of bond (i, j), i != j, in the flat vector.
  std::size_t bond_slot(std::size_t i, std::size_t j) const noexcept {
    if (i > j) std::swap(i, j);
    // rows 0..i-1 of the upper triangle hold sum_{r<i} (n-1-r) entries
    return n_atoms * k_types() + i * (2 * n_atoms - i - 1) / 2 + (j - i - 1);
  }
};

inline std::vector<double> flatten(const MolGraph& g, const MoleculeLayout& layout) {
  g.validate();
  if (g.size() != layout.n_atoms || g.valences != layout.valences) {
    throw ShapeError("molecule does not match the flat layout");
  }
  std::vector<double> x(layout.flat_dim(), 0.0);
  for (std::size_t i = 0; i < g.size(); ++i) x[layout.type_slot(i, g.types[i])] = 1.0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    for (std::size_t j = i + 1; j < g.size(); ++j) x[layout.bond_slot(i, j)] = g.bonds(i, j);
  }
  return x;
}

namespace detail {

/// Per-atom excess degree - valence on a relaxed flat molecule.
inline std::vector<double> valency_excess(const MoleculeLayout& layout, std::span<const double> x) {
  if (x.size() != layout.flat_dim()) throw ShapeError("valency: flat molecule has wrong length");
  const std::size_t n = layout.n_atoms;
  std::vector<double> excess(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double valence = 0.0;
    for (std::size_t t = 0; t < layout.k_types(); ++t) valence += x[layout.type_slot(i, t)] * layout.valences[t];
    double degree = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) degree += x[layout.bond_slot(i, j)];
    }
    excess[i] = degree - valence;
  }
  return excess;
}

}  // namespace detail

/// sum_i max(0, deg_i - valence_i); zero exactly when every atom respects its valence.
inline double valency_statistic(const MolGraph& g) {
  g.validate();
  double total = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    total += std::max(0.0, g.degree(i) - g.valences[static_cast<std::size_t>(g.types[i])]);
  }
  return total;
}

/// Subgradient of the valency statistic w.r.t. a relaxed flat molecule.
inline std::vector<double> valency_gradient(const MoleculeLayout& layout, std::span<const double> x) {
  const auto excess = detail::valency_excess(layout, x);
  const std::size_t n = layout.n_atoms;
  std::vector<double> grad(x.size(), 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (excess[i] <= 0.0) continue;
    for (std::size_t t = 0; t < layout.k_types(); ++t) grad[layout.type_slot(i, t)] -= layout.valences[t];
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) grad[layout.bond_slot(i, j)] += 1.0;
    }
  }
  return grad;
}

struct ValencyGradient {
  Array bonds;  // d T / d A_ij with A_ij = A_ji treated as one variable
  Array types;  // d T / d onehot(b)_it
};

inline ValencyGradient valency_gradient(const MolGraph& g) {
  const MoleculeLayout layout{g.size(), g.valences};
  const auto flat = flatten(g, layout);
  const auto grad = valency_gradient(layout, flat);
  ValencyGradient out{Array({g.size(), g.size()}), Array({g.size(), layout.k_types()})};
  for (std::size_t i = 0; i < g.size(); ++i) {
    for (std::size_t t = 0; t < layout.k_types(); ++t) out.types(i, t) = grad[layout.type_slot(i, t)];
    for (std::size_t j = 0; j < g.size(); ++j) {
      if (i != j) out.bonds(i, j) = grad[layout.bond_slot(i, j)];
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Image margins
// ---------------------------------------------------------------------------

/// An h x w image whose margin S is the complement of an interior rectangle.
struct MarginGeometry {
  std::size_t h = 0;
  std::size_t w = 0;
  std::size_t top = 0;
  std::size_t left = 0;
  std::size_t inner_h = 0;
  std::size_t inner_w = 0;

  static MarginGeometry centered(std::size_t h, std::size_t w, std::size_t inner_h, std::size_t inner_w) {
    if (inner_h > h || inner_w > w) throw ConfigError("margin interior is larger than the image");
    MarginGeometry g{h, w, (h - inner_h) / 2, (w - inner_w) / 2, inner_h, inner_w};
    g.validate();
    return g;
  }

  void validate() const {
    if (h == 0 || w == 0) throw ConfigError("margin image must be non-empty");
    if (top + inner_h > h || left + inner_w > w) throw ConfigError("margin interior is larger than the image");
    if (margin_count() == 0) throw ConfigError("margin interior covers the whole image");
  }

  std::size_t margin_count() const noexcept { return h * w - inner_h * inner_w; }

  bool in_margin(std::size_t i, std::size_t j) const noexcept {
    return i < top || i >= top + inner_h || j < left || j >= left + inner_w;
  }
};

inline double margin_statistic(std::span<const double> img, const MarginGeometry& g) {
  g.validate();
  if (img.size() != g.h * g.w) throw ShapeError("margin: image size does not match geometry");
  double total = 0.0;
  for (std::size_t i = 0; i < g.h; ++i) {
    for (std::size_t j = 0; j < g.w; ++j) {
      if (g.in_margin(i, j)) total += std::abs(img[i * g.w + j]);
    }
  }
  return total / static_cast<double>(g.margin_count());
}

inline std::vector<double> margin_gradient(std::span<const double> img, const MarginGeometry& g) {
  g.validate();
  if (img.size() != g.h * g.w) throw ShapeError("margin: image size does not match geometry");
  const double inv = 1.0 / static_cast<double>(g.margin_count());
  std::vector<double> grad(img.size(), 0.0);
  for (std::size_t i = 0; i < g.h; ++i) {
    for (std::size_t j = 0; j < g.w; ++j) {
      const double v = img[i * g.w + j];
      if (g.in_margin(i, j) && v != 0.0) grad[i * g.w + j] = v > 0 ? inv : -inv;
    }
  }
  return grad;
}

// ---------------------------------------------------------------------------
// Point-cloud smoothness, sine control, raw moments
// ---------------------------------------------------------------------------

/// tr(x^T L x) in edge-sum form: sum over graph edges of squared edge length.
inline double laplacian_statistic(std::span<const double> cloud, const SparseLaplacian& lap) {
  if (cloud.size() != 3 * lap.dim) throw ShapeError("laplacian statistic: cloud size does not match L");
  double total = 0.0;
  for (const auto& e : lap.entries) {
    if (e.row >= e.col) continue;
    double d2 = 0.0;
    for (std::size_t c = 0; c < 3; ++c) {
      const double d = cloud[3 * e.row + c] - cloud[3 * e.col + c];
      d2 += d * d;
    }
    total += -e.value * d2;
  }
  return total;
}

/// 2 L x with the graph held fixed.
inline std::vector<double> laplacian_gradient(std::span<const double> cloud, const SparseLaplacian& lap) {
  auto grad = lap.apply(cloud, 3);
  for (double& g : grad) g *= 2.0;
  return grad;
}

inline double sine_statistic(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v;
  return std::sin(s);
}

inline std::vector<double> sine_gradient(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v;
  return std::vector<double>(x.size(), std::cos(s));
}

inline std::vector<double> raw_moment_statistic(std::span<const double> x, int order) {
  if (order < 1) throw ConfigError("raw moment order must be >= 1");
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = std::pow(x[i], order);
  return out;
}

// ---------------------------------------------------------------------------
// Tagged statistic
// ---------------------------------------------------------------------------

enum class StatisticKind { none, valency, margin, laplacian_smoothness, sine, raw_moment };

inline std::string to_string(StatisticKind k) {
  switch (k) {
    case StatisticKind::none: return "none";
    case StatisticKind::valency: return "valency";
    case StatisticKind::margin: return "margin";
    case StatisticKind::laplacian_smoothness: return "laplacian";
    case StatisticKind::sine: return "sine";
    case StatisticKind::raw_moment: return "raw_moment";
  }
  return "?";
}

/**
 * A parameter-free statistic T: R^d -> R^m with its gradient.
 *
 * `none` is the constant-zero statistic (m = 1), used for plain neural models.
 */
class StatisticFn {
 public:
  static StatisticFn none(std::size_t dim) { return StatisticFn(StatisticKind::none, dim); }

  static StatisticFn valency(MoleculeLayout layout) {
    StatisticFn s(StatisticKind::valency, layout.flat_dim());
    s.molecule_ = std::move(layout);
    return s;
  }

  static StatisticFn margin(MarginGeometry g) {
    g.validate();
    StatisticFn s(StatisticKind::margin, g.h * g.w);
    s.margin_ = g;
    return s;
  }

  static StatisticFn laplacian(std::size_t n_points, std::size_t k) {
    if (n_points < 2 || k == 0 || k > n_points - 1) throw ConfigError("laplacian statistic needs 1 <= k <= N-1");
    StatisticFn s(StatisticKind::laplacian_smoothness, 3 * n_points);
    s.k_ = k;
    return s;
  }

  static StatisticFn sine(std::size_t dim) { return StatisticFn(StatisticKind::sine, dim); }

  static StatisticFn raw_moment(std::size_t dim, int order) {
    if (order < 1) throw ConfigError("raw moment order must be >= 1");
    StatisticFn s(StatisticKind::raw_moment, dim);
    s.order_ = order;
    return s;
  }

  StatisticKind kind() const noexcept { return kind_; }
  std::size_t input_dim() const noexcept { return dim_; }
  std::size_t output_dim() const noexcept { return kind_ == StatisticKind::raw_moment ? dim_ : 1; }
  const MarginGeometry& margin_geometry() const noexcept { return margin_; }
  const MoleculeLayout& molecule_layout() const noexcept { return molecule_; }
  std::size_t neighbor_count() const noexcept { return k_; }
  int order() const noexcept { return order_; }

  std::vector<double> value(std::span<const double> x) const {
    check(x);
    switch (kind_) {
      case StatisticKind::none: return {0.0};
      case StatisticKind::valency: {
        double total = 0.0;
        for (double e : detail::valency_excess(molecule_, x)) total += std::max(0.0, e);
        return {total};
      }
      case StatisticKind::margin: return {margin_statistic(x, margin_)};
      case StatisticKind::laplacian_smoothness: return {laplacian_statistic(x, knn_laplacian(x, k_))};
      case StatisticKind::sine: return {sine_statistic(x)};
      case StatisticKind::raw_moment: return raw_moment_statistic(x, order_);
    }
    return {};
  }

  /// Jacobian transposed, shape (d, m): entry (i, j) = d T_j / d x_i.
  Array gradient(std::span<const double> x) const {
    check(x);
    const std::size_t m = output_dim();
    Array out({dim_, m});
    if (kind_ == StatisticKind::raw_moment) {
      for (std::size_t i = 0; i < dim_; ++i) out(i, i) = order_ * std::pow(x[i], order_ - 1);
      return out;
    }
    const auto g = scalar_gradient(x);
    for (std::size_t i = 0; i < dim_; ++i) out(i, 0) = g[i];
    return out;
  }

  /// grad T(x) . eta, a length-d vector.
  std::vector<double> gradient_dot(std::span<const double> x, std::span<const double> eta) const {
    check(x);
    if (eta.size() != output_dim()) throw ShapeError("statistic weight has wrong length");
    if (kind_ == StatisticKind::raw_moment) {
      std::vector<double> out(dim_);
      for (std::size_t i = 0; i < dim_; ++i) out[i] = order_ * std::pow(x[i], order_ - 1) * eta[i];
      return out;
    }
    auto g = scalar_gradient(x);
    for (double& v : g) v *= eta[0];
    return g;
  }

  /// grad T(x)^T u, a length-m vector.
  std::vector<double> gradient_transpose_dot(std::span<const double> x, std::span<const double> u) const {
    check(x);
    if (u.size() != dim_) throw ShapeError("statistic upstream has wrong length");
    if (kind_ == StatisticKind::raw_moment) {
      std::vector<double> out(dim_);
      for (std::size_t i = 0; i < dim_; ++i) out[i] = order_ * std::pow(x[i], order_ - 1) * u[i];
      return out;
    }
    return {dot(scalar_gradient(x), u)};
  }

  /// Single-line `key=value` description, the inverse of parse().
  std::string describe() const {
    std::string s = to_string(kind_) + " dim=" + std::to_string(dim_);
    switch (kind_) {
      case StatisticKind::valency: {
        s += " atoms=" + std::to_string(molecule_.n_atoms) + " valences=";
        for (std::size_t t = 0; t < molecule_.valences.size(); ++t) {
          s += (t ? "," : "") + std::to_string(molecule_.valences[t]);
        }
        break;
      }
      case StatisticKind::margin:
        s += " h=" + std::to_string(margin_.h) + " w=" + std::to_string(margin_.w) +
             " top=" + std::to_string(margin_.top) + " left=" + std::to_string(margin_.left) +
             " inner_h=" + std::to_string(margin_.inner_h) + " inner_w=" + std::to_string(margin_.inner_w);
        break;
      case StatisticKind::laplacian_smoothness: s += " k=" + std::to_string(k_); break;
      case StatisticKind::raw_moment: s += " order=" + std::to_string(order_); break;
      default: break;
    }
    return s;
  }

  static StatisticFn parse(const std::vector<std::string>& tokens) {
    if (tokens.empty()) throw ConfigError("empty statistic description");
    std::map<std::string, std::string> kv;
    for (std::size_t i = 1; i < tokens.size(); ++i) {
      const auto eq = tokens[i].find('=');
      if (eq == std::string::npos) throw ConfigError("bad statistic field '" + tokens[i] + "'");
      kv[tokens[i].substr(0, eq)] = tokens[i].substr(eq + 1);
    }
    auto num = [&](const std::string& key) -> std::size_t {
      auto it = kv.find(key);
      if (it == kv.end()) throw ConfigError("statistic field '" + key + "' missing");
      std::size_t v = 0;
      auto [p, ec] = std::from_chars(it->second.data(), it->second.data() + it->second.size(), v);
      if (ec != std::errc() || p != it->second.data() + it->second.size()) {
        throw ConfigError("statistic field '" + key + "' is not an integer");
      }
      return v;
    };
    const std::string& kind = tokens[0];
    const std::size_t dim = num("dim");
    StatisticFn s = [&] {
      if (kind == "none") return none(dim);
      if (kind == "sine") return sine(dim);
      if (kind == "raw_moment") return raw_moment(dim, static_cast<int>(num("order")));
      if (kind == "laplacian") return laplacian(dim / 3, num("k"));
      if (kind == "margin") {
        return margin({num("h"), num("w"), num("top"), num("left"), num("inner_h"), num("inner_w")});
      }
      if (kind == "valency") {
        MoleculeLayout layout{num("atoms"), {}};
        auto it = kv.find("valences");
        if (it == kv.end()) throw ConfigError("statistic field 'valences' missing");
        std::string rest = it->second;
        std::size_t start = 0;
        while (start <= rest.size()) {
          const auto comma = rest.find(',', start);
          const std::string tok = rest.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
          layout.valences.push_back(std::stoi(tok));
          if (comma == std::string::npos) break;
          start = comma + 1;
        }
        return valency(std::move(layout));
      }
      throw ConfigError("unknown statistic kind '" + kind + "'");
    }();
    if (s.input_dim() != dim) throw ConfigError("statistic dim does not match its configuration");
    return s;
  }

 private:
  StatisticFn(StatisticKind kind, std::size_t dim) : kind_(kind), dim_(dim) {
    if (dim == 0) throw ConfigError("statistic input dimension must be positive");
  }

  void check(std::span<const double> x) const {
    if (x.size() != dim_) {
      throw ShapeError("statistic " + to_string(kind_) + " expects dimension " + std::to_string(dim_) + ", got " +
                       std::to_string(x.size()));
    }
  }

  std::vector<double> scalar_gradient(std::span<const double> x) const {
    switch (kind_) {
      case StatisticKind::none: return std::vector<double>(dim_, 0.0);
      case StatisticKind::valency: return valency_gradient(molecule_, x);
      case StatisticKind::margin: return margin_gradient(x, margin_);
      case StatisticKind::laplacian_smoothness: return laplacian_gradient(x, knn_laplacian(x, k_));
      case StatisticKind::sine: return sine_gradient(x);
      case StatisticKind::raw_moment: break;
    }
    throw StateError("scalar_gradient on a vector statistic");
  }

  StatisticKind kind_;
  std::size_t dim_;
  MoleculeLayout molecule_;
  MarginGeometry margin_;
  std::size_t k_ = 0;
  int order_ = 1;
};

}  // namespace hebm
