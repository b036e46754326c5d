#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "hebm/neighbors.hpp"
#include "hebm/numcore/array.hpp"
#include "hebm/statistics.hpp"

namespace hebm {

struct MetricEntry {
  std::string name;
  double value = 0.0;
  double stderr_ = 0.0;
  std::size_t count = 0;
};

/// Named scalar results; every entry records the sample count used.
struct MetricReport {
  std::vector<MetricEntry> entries;
  std::uint64_t seed = 0;

  void add(std::string name, double value, double se, std::size_t count) {
    entries.push_back({std::move(name), value, se, count});
  }

  const MetricEntry& at(const std::string& name) const {
    for (const auto& e : entries) {
      if (e.name == name) return e;
    }
    throw ArgumentError("no metric named '" + name + "'");
  }
};

struct DeltaT {
  std::vector<double> signed_diff;  // mean T(model) - mean T(data)
  std::vector<double> abs_diff;
  std::vector<double> stderr_;      // Monte-Carlo standard error of the difference
};

using StatisticEval = std::function<std::vector<double>(std::span<const double>)>;

/// |mean T over model samples - mean T over data samples|, componentwise.
inline DeltaT delta_t(const Array& model_samples, const Array& data_samples, const StatisticEval& stat) {
  if (model_samples.rows() == 0 || data_samples.rows() == 0 || model_samples.rank() != 2 || data_samples.rank() != 2) {
    throw ArgumentError("delta_t: both sample sets must be non-empty (n, d) arrays");
  }
  auto summarize = [&](const Array& s, std::vector<double>& mean, std::vector<double>& var) {
    std::vector<std::vector<double>> vals;
    vals.reserve(s.rows());
    for (std::size_t r = 0; r < s.rows(); ++r) vals.push_back(stat(s.row(r)));
    const std::size_t m = vals.front().size();
    mean.assign(m, 0.0);
    var.assign(m, 0.0);
    for (const auto& v : vals) {
      for (std::size_t j = 0; j < m; ++j) mean[j] += v[j];
    }
    for (double& v : mean) v /= static_cast<double>(vals.size());
    if (vals.size() > 1) {
      for (const auto& v : vals) {
        for (std::size_t j = 0; j < m; ++j) var[j] += (v[j] - mean[j]) * (v[j] - mean[j]);
      }
      for (double& v : var) v /= static_cast<double>(vals.size() - 1);
    }
  };
  std::vector<double> mm, vm, md, vd;
  summarize(model_samples, mm, vm);
  summarize(data_samples, md, vd);
  DeltaT out;
  for (std::size_t j = 0; j < mm.size(); ++j) {
    out.signed_diff.push_back(mm[j] - md[j]);
    out.abs_diff.push_back(std::abs(mm[j] - md[j]));
    out.stderr_.push_back(std::sqrt(vm[j] / static_cast<double>(model_samples.rows()) +
                                    vd[j] / static_cast<double>(data_samples.rows())));
  }
  return out;
}

inline DeltaT delta_t(const Array& model_samples, const Array& data_samples, const StatisticFn& stat) {
  return delta_t(model_samples, data_samples, [&stat](std::span<const double> x) { return stat.value(x); });
}

/// Fraction of molecules with zero valency violation.
inline double validity_ratio(const std::vector<MolGraph>& molecules) {
  if (molecules.empty()) throw ArgumentError("validity_ratio: no molecules");
  std::size_t valid = 0;
  for (const auto& g : molecules) valid += valency_statistic(g) == 0.0 ? 1 : 0;
  return static_cast<double>(valid) / static_cast<double>(molecules.size());
}

/// Squared-distance Chamfer: mean_x min_y |x-y|^2 + mean_y min_x |y-x|^2.
inline double chamfer(const std::vector<Point3>& x, const std::vector<Point3>& y) {
  if (x.empty() || y.empty()) throw ArgumentError("chamfer: empty point cloud");
  const KdTree tx(x);
  const KdTree ty(y);
  double a = 0.0;
  for (const auto& p : x) a += ty.nearest(p).dist2;
  double b = 0.0;
  for (const auto& p : y) b += tx.nearest(p).dist2;
  return a / static_cast<double>(x.size()) + b / static_cast<double>(y.size());
}

inline double chamfer(std::span<const double> x, std::span<const double> y) {
  return chamfer(to_points(x), to_points(y));
}

struct SetMetrics {
  double mmd = 0.0;
  double cov = 0.0;
  double nna = 0.0;
};

/**
 * Minimum matching distance, coverage, and 1-NN accuracy between a set of
 * generated clouds (rows of `samples`) and reference clouds (rows of `refs`),
 * all under the Chamfer distance.
 *
 * 1-NNA labels the merged set, classifies each member by its nearest other
 * member (ties to the lower merged index: samples first, then refs), and
 * reports the fraction classified correctly.
 */
inline SetMetrics mmd_cov_1nna(const Array& samples, const Array& refs) {
  if (samples.rows() == 0 || refs.rows() == 0 || samples.rank() != 2 || refs.rank() != 2) {
    throw ArgumentError("mmd_cov_1nna: sample and reference sets must be non-empty");
  }
  if (samples.cols() != refs.cols()) throw ShapeError("mmd_cov_1nna: cloud sizes differ");
  const std::size_t ns = samples.rows();
  const std::size_t nr = refs.rows();
  const std::size_t n = ns + nr;
  std::vector<std::vector<Point3>> clouds;
  clouds.reserve(n);
  for (std::size_t i = 0; i < ns; ++i) clouds.push_back(to_points(samples.row(i)));
  for (std::size_t i = 0; i < nr; ++i) clouds.push_back(to_points(refs.row(i)));

  Array dist({n, n});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      dist(i, j) = dist(j, i) = chamfer(clouds[i], clouds[j]);
    }
  }

  SetMetrics out;
  for (std::size_t r = 0; r < nr; ++r) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t s = 0; s < ns; ++s) best = std::min(best, dist(ns + r, s));
    out.mmd += best;
  }
  out.mmd /= static_cast<double>(nr);

  std::vector<char> covered(nr, 0);
  for (std::size_t s = 0; s < ns; ++s) {
    std::size_t best = 0;
    for (std::size_t r = 1; r < nr; ++r) {
      if (dist(s, ns + r) < dist(s, ns + best)) best = r;
    }
    covered[best] = 1;
  }
  std::size_t n_cov = 0;
  for (char c : covered) n_cov += c;
  out.cov = static_cast<double>(n_cov) / static_cast<double>(nr);

  std::size_t correct = 0;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t best = i == 0 ? 1 : 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i && dist(i, j) < dist(i, best)) best = j;
    }
    correct += (i < ns) == (best < ns) ? 1 : 0;
  }
  out.nna = static_cast<double>(correct) / static_cast<double>(n);
  return out;
}

}  // namespace hebm
