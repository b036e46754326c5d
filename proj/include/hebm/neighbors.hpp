#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <queue>
#include <span>
#include <utility>
#include <vector>

#include "hebm/numcore/array.hpp"

namespace hebm {

using Point3 = std::array<double, 3>;

inline double squared_distance(const Point3& a, const Point3& b) {
  const double dx = a[0] - b[0];
  const double dy = a[1] - b[1];
  const double dz = a[2] - b[2];
  return dx * dx + dy * dy + dz * dz;
}

/// Rows of an (N, 3) array, or a flat 3N vector, as points.
inline std::vector<Point3> to_points(std::span<const double> flat) {
  if (flat.size() % 3 != 0) throw ShapeError("point data length is not a multiple of 3");
  std::vector<Point3> pts(flat.size() / 3);
  for (std::size_t i = 0; i < pts.size(); ++i) pts[i] = {flat[3 * i], flat[3 * i + 1], flat[3 * i + 2]};
  return pts;
}

/// Counts distance evaluations of a query (for complexity checks).
struct QueryStats {
  std::size_t distance_evals = 0;
  std::size_t nodes_visited = 0;
};

/// A neighbor result: squared distance and point index.
struct Neighbor {
  double dist2;
  std::size_t index;

  friend bool operator<(const Neighbor& a, const Neighbor& b) {
    return a.dist2 < b.dist2 || (a.dist2 == b.dist2 && a.index < b.index);
  }
  friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

/**
 * Exact 3-d kd-tree with median splits.
 *
 * Each node stores one point; the split dimension is the axis of largest
 * spread among the node's points. Queries return the exact k nearest
 * neighbors under squared Euclidean distance, ordered by (distance, index).
 * The tree is immutable after construction, so concurrent queries are safe.
 */
class KdTree {
 public:
  explicit KdTree(std::vector<Point3> points) : points_(std::move(points)) {
    if (points_.empty()) throw ArgumentError("kd-tree needs at least one point");
    for (const auto& p : points_) {
      if (!std::isfinite(p[0]) || !std::isfinite(p[1]) || !std::isfinite(p[2])) {
        throw ArgumentError("kd-tree points must be finite");
      }
    }
    std::vector<std::size_t> idx(points_.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    nodes_.reserve(points_.size());
    root_ = build(idx, 0, idx.size(), 0);
  }

  explicit KdTree(const Array& points) : KdTree(to_points(points.data())) {}

  std::size_t size() const noexcept { return points_.size(); }
  const std::vector<Point3>& points() const noexcept { return points_; }
  std::size_t depth() const noexcept { return max_depth_; }

  /// k nearest points to `query`, ascending by (distance, index).
  std::vector<Neighbor> knn(const Point3& query, std::size_t k, QueryStats* stats = nullptr) const {
    return search(query, k, npos, stats);
  }

  /// k nearest neighbors of tree point `i`, excluding `i` itself.
  std::vector<Neighbor> knn_of(std::size_t i, std::size_t k, QueryStats* stats = nullptr) const {
    if (i >= points_.size()) throw ArgumentError("knn_of: point index out of range");
    return search(points_[i], k, i, stats);
  }

  Neighbor nearest(const Point3& query, QueryStats* stats = nullptr) const { return knn(query, 1, stats)[0]; }

 private:
  static constexpr std::size_t npos = std::numeric_limits<std::size_t>::max();

  struct Node {
    std::size_t point;
    std::size_t left = npos;
    std::size_t right = npos;
    int dim = 0;
  };

  std::size_t build(std::vector<std::size_t>& idx, std::size_t lo, std::size_t hi, std::size_t depth) {
    if (lo >= hi) return npos;
    max_depth_ = std::max(max_depth_, depth + 1);
    Point3 mn = points_[idx[lo]];
    Point3 mx = mn;
    for (std::size_t i = lo; i < hi; ++i) {
      for (int d = 0; d < 3; ++d) {
        mn[d] = std::min(mn[d], points_[idx[i]][d]);
        mx[d] = std::max(mx[d], points_[idx[i]][d]);
      }
    }
    int dim = 0;
    for (int d = 1; d < 3; ++d) {
      if (mx[d] - mn[d] > mx[dim] - mn[dim]) dim = d;
    }
    const std::size_t mid = lo + (hi - lo) / 2;
    std::nth_element(idx.begin() + lo, idx.begin() + mid, idx.begin() + hi, [&](std::size_t a, std::size_t b) {
      return points_[a][dim] < points_[b][dim] || (points_[a][dim] == points_[b][dim] && a < b);
    });
    const std::size_t id = nodes_.size();
    nodes_.push_back({idx[mid], npos, npos, dim});
    const std::size_t left = build(idx, lo, mid, depth + 1);
    const std::size_t right = build(idx, mid + 1, hi, depth + 1);
    nodes_[id].left = left;
    nodes_[id].right = right;
    return id;
  }

  std::vector<Neighbor> search(const Point3& query, std::size_t k, std::size_t exclude, QueryStats* stats) const {
    const std::size_t available = points_.size() - (exclude == npos ? 0 : 1);
    if (k == 0 || k > available) {
      throw ArgumentError("knn: k=" + std::to_string(k) + " but only " + std::to_string(available) +
                          " candidate points");
    }
    std::priority_queue<Neighbor> heap;  // max-heap on (dist2, index)
    visit(root_, query, k, exclude, heap, stats);
    std::vector<Neighbor> out(heap.size());
    for (std::size_t i = out.size(); i-- > 0;) {
      out[i] = heap.top();
      heap.pop();
    }
    return out;
  }

  void visit(std::size_t id, const Point3& q, std::size_t k, std::size_t exclude, std::priority_queue<Neighbor>& heap,
             QueryStats* stats) const {
    if (id == npos) return;
    const Node& node = nodes_[id];
    if (stats) ++stats->nodes_visited;
    if (node.point != exclude) {
      if (stats) ++stats->distance_evals;
      Neighbor cand{squared_distance(q, points_[node.point]), node.point};
      if (heap.size() < k) {
        heap.push(cand);
      } else if (cand < heap.top()) {
        heap.pop();
        heap.push(cand);
      }
    }
    const double diff = q[node.dim] - points_[node.point][node.dim];
    const std::size_t near = diff < 0 ? node.left : node.right;
    const std::size_t far = diff < 0 ? node.right : node.left;
    visit(near, q, k, exclude, heap, stats);
    // Equal distances must still be explored so index tie-breaking stays exact.
    if (heap.size() < k || diff * diff <= heap.top().dist2) visit(far, q, k, exclude, heap, stats);
  }

  std::vector<Point3> points_;
  std::vector<Node> nodes_;
  std::size_t root_ = npos;
  std::size_t max_depth_ = 0;
};

/**
 * Graph Laplacian L = D - W in coordinate format.
 *
 * Off-diagonal entries are -1 for every edge; diagonal entries hold degrees.
 * Entries are sorted by (row, col).
 */
struct SparseLaplacian {
  struct Entry {
    std::size_t row;
    std::size_t col;
    double value;
  };

  std::size_t dim = 0;
  std::vector<Entry> entries;

  /// Undirected edge list (i < j), derived from the off-diagonal entries.
  std::vector<std::pair<std::size_t, std::size_t>> edges() const {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    for (const auto& e : entries) {
      if (e.row < e.col && e.value != 0.0) out.emplace_back(e.row, e.col);
    }
    return out;
  }

  /// Dense copy, for tests and small problems.
  Array dense() const {
    Array out({dim, dim});
    for (const auto& e : entries) out(e.row, e.col) += e.value;
    return out;
  }

  /// L x for x of shape (dim, c) stored row-major.
  std::vector<double> apply(std::span<const double> x, std::size_t cols = 3) const {
    if (x.size() != dim * cols) throw ShapeError("laplacian apply: dimension mismatch");
    std::vector<double> out(x.size(), 0.0);
    for (const auto& e : entries) {
      for (std::size_t c = 0; c < cols; ++c) out[e.row * cols + c] += e.value * x[e.col * cols + c];
    }
    return out;
  }
};

/// Laplacian of the symmetrized (union) k-NN graph of a point set.
inline SparseLaplacian knn_laplacian(const std::vector<Point3>& points, std::size_t k) {
  const std::size_t n = points.size();
  if (n < 2 || k == 0 || k > n - 1) {
    throw ArgumentError("knn_laplacian: need 1 <= k <= N-1 (N=" + std::to_string(n) + ", k=" + std::to_string(k) + ")");
  }
  KdTree tree(points);
  std::vector<std::vector<std::size_t>> adj(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (const auto& nb : tree.knn_of(i, k)) {
      adj[i].push_back(nb.index);
      adj[nb.index].push_back(i);
    }
  }
  SparseLaplacian lap;
  lap.dim = n;
  for (std::size_t i = 0; i < n; ++i) {
    auto& row = adj[i];
    std::sort(row.begin(), row.end());
    row.erase(std::unique(row.begin(), row.end()), row.end());
    bool diag_done = false;
    for (std::size_t j : row) {
      if (!diag_done && j > i) {
        lap.entries.push_back({i, i, static_cast<double>(row.size())});
        diag_done = true;
      }
      lap.entries.push_back({i, j, -1.0});
    }
    if (!diag_done) lap.entries.push_back({i, i, static_cast<double>(row.size())});
  }
  return lap;
}

inline SparseLaplacian knn_laplacian(std::span<const double> flat_points, std::size_t k) {
  return knn_laplacian(to_points(flat_points), k);
}

}  // namespace hebm
