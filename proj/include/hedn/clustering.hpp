#ifndef HEDN_CLUSTERING_HPP
#define HEDN_CLUSTERING_HPP

#include <cmath>
#include <deque>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "hedn/matrix.hpp"

namespace hedn {

inline constexpr int kNoise = -1;

struct DbscanParams {
  double eps = 1.0;
  std::size_t min_samples = 4;

  void validate() const {
    if (!(eps > 0.0)) throw ConfigError("dbscan: eps must be positive");
    if (min_samples < 1) throw ConfigError("dbscan: min_samples must be >= 1");
  }
};

/// Per-sample cluster ids (kNoise for outliers); non-noise ids are 0..n_clusters-1.
struct ClusterAssignment {
  std::vector<int> labels;
  std::size_t n_clusters = 0;

  std::size_t noise_count() const {
    std::size_t n = 0;
    for (int l : labels)
      if (l == kNoise) ++n;
    return n;
  }
  double noise_fraction() const {
    return labels.empty() ? 0.0 : static_cast<double>(noise_count()) / static_cast<double>(labels.size());
  }
};

/// Symmetric N x N matrix of Euclidean distances between rows.
inline Matrix pairwise_distances(const Matrix& points) {
  const std::size_t n = points.rows();
  Matrix dist(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto a = points.row(i);
    for (std::size_t j = i + 1; j < n; ++j) {
      const auto b = points.row(j);
      double s = 0.0;
      for (std::size_t k = 0; k < a.size(); ++k) {
        const double d = a[k] - b[k];
        s += d * d;
      }
      dist(i, j) = dist(j, i) = std::sqrt(s);
    }
  }
  return dist;
}

/**
 * DBSCAN over a precomputed distance matrix.
 *
 * A point is core when at least min_samples points (itself included) lie
 * within eps, inclusive. Points are scanned in index order; each unvisited
 * core point seeds a new cluster that is expanded breadth-first. Border
 * points join the first cluster that reaches them.
 */
inline ClusterAssignment dbscan_distances(const Matrix& dist, const DbscanParams& params) {
  params.validate();
  const std::size_t n = dist.rows();
  constexpr int kUnvisited = -2;
  ClusterAssignment out;
  out.labels.assign(n, kUnvisited);

  auto neighbors = [&](std::size_t i) {
    std::vector<std::size_t> nb;
    const auto r = dist.row(i);
    for (std::size_t j = 0; j < n; ++j)
      if (r[j] <= params.eps) nb.push_back(j);
    return nb;
  };

  int cluster = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (out.labels[i] != kUnvisited) continue;
    auto nb = neighbors(i);
    if (nb.size() < params.min_samples) {
      out.labels[i] = kNoise;
      continue;
    }
    out.labels[i] = cluster;
    std::deque<std::size_t> queue(nb.begin(), nb.end());
    while (!queue.empty()) {
      const std::size_t q = queue.front();
      queue.pop_front();
      if (out.labels[q] == kNoise) out.labels[q] = cluster;
      if (out.labels[q] != kUnvisited) continue;
      out.labels[q] = cluster;
      auto qn = neighbors(q);
      if (qn.size() >= params.min_samples) queue.insert(queue.end(), qn.begin(), qn.end());
    }
    ++cluster;
  }
  out.n_clusters = static_cast<std::size_t>(cluster);
  return out;
}

/// DBSCAN with the Euclidean metric on the rows of `points`.
inline ClusterAssignment dbscan(const Matrix& points, const DbscanParams& params) {
  return dbscan_distances(pairwise_distances(points), params);
}

namespace detail {

inline double entropy_of(const std::map<int, std::size_t>& counts, double n) {
  double h = 0.0;
  for (const auto& [_, c] : counts) {
    const double p = static_cast<double>(c) / n;
    h -= p * std::log(p);
  }
  return h;
}

}  // namespace detail

/// Normalized mutual information I(a;b)/sqrt(H(a)H(b)); noise is a regular category.
inline double nmi(std::span<const int> a, std::span<const int> b) {
  if (a.size() != b.size()) throw ShapeError("nmi: partitions differ in length");
  if (a.empty()) return 1.0;
  const double n = static_cast<double>(a.size());
  std::map<int, std::size_t> ca, cb;
  std::map<std::pair<int, int>, std::size_t> joint;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ++ca[a[i]];
    ++cb[b[i]];
    ++joint[{a[i], b[i]}];
  }
  const double ha = detail::entropy_of(ca, n);
  const double hb = detail::entropy_of(cb, n);
  if (ca.size() == 1 && cb.size() == 1) return 1.0;
  if (ha <= 0.0 || hb <= 0.0) return 0.0;
  double mi = 0.0;
  for (const auto& [key, c] : joint) {
    const double pxy = static_cast<double>(c) / n;
    const double px = static_cast<double>(ca[key.first]) / n;
    const double py = static_cast<double>(cb[key.second]) / n;
    mi += pxy * std::log(pxy / (px * py));
  }
  return std::clamp(mi / std::sqrt(ha * hb), 0.0, 1.0);
}

/// Mean silhouette over non-noise samples; nullopt when fewer than two
/// non-noise clusters exist. Singleton clusters contribute 0.
inline std::optional<double> silhouette_distances(const Matrix& dist, std::span<const int> labels) {
  const std::size_t n = labels.size();
  if (dist.rows() != n) throw ShapeError("silhouette: distance matrix does not match labels");
  std::map<int, std::size_t> sizes;
  for (int l : labels)
    if (l != kNoise) ++sizes[l];
  if (sizes.size() < 2) return std::nullopt;

  std::map<int, std::size_t> slot;
  for (const auto& [l, _] : sizes) slot.emplace(l, slot.size());
  std::vector<double> sums(sizes.size());
  double total = 0.0;
  std::size_t counted = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] == kNoise) continue;
    ++counted;
    const std::size_t own_size = sizes[labels[i]];
    if (own_size == 1) continue;
    std::fill(sums.begin(), sums.end(), 0.0);
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i || labels[j] == kNoise) continue;
      sums[slot[labels[j]]] += dist(i, j);
    }
    const double a = sums[slot[labels[i]]] / static_cast<double>(own_size - 1);
    double b = std::numeric_limits<double>::infinity();
    for (const auto& [l, s] : slot) {
      if (l == labels[i]) continue;
      b = std::min(b, sums[s] / static_cast<double>(sizes[l]));
    }
    const double denom = std::max(a, b);
    if (denom > 0.0) total += (b - a) / denom;
  }
  return total / static_cast<double>(counted);
}

inline std::optional<double> silhouette(const Matrix& points, std::span<const int> labels) {
  if (points.rows() != labels.size()) throw ShapeError("silhouette: point/label count mismatch");
  return silhouette_distances(pairwise_distances(points), labels);
}

/// One evaluated grid cell of the DBSCAN tuner.
struct TuneRecord {
  double eps = 0.0;
  std::size_t min_samples = 0;
  std::size_t n_clusters = 0;
  double noise_fraction = 0.0;
  double score = std::numeric_limits<double>::quiet_NaN();  // NaN when the cell was rejected
  bool accepted = false;
};

struct TuneResult {
  DbscanParams params;
  ClusterAssignment assignment;
  double score = std::numeric_limits<double>::quiet_NaN();  // NaN on the fallback path
  bool fallback = false;
  std::vector<TuneRecord> grid;
};

struct TuneGrid {
  std::vector<double> eps{1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0, 4.5, 5.0};
  std::vector<std::size_t> min_samples{3, 4, 5, 6};
  double max_noise_fraction = 0.5;
};

/// Relabels arbitrary ids to 0..k-1 in order of first appearance.
inline ClusterAssignment contiguous_assignment(std::span<const int> ids) {
  ClusterAssignment out;
  std::map<int, int> remap;
  out.labels.reserve(ids.size());
  for (int id : ids) {
    auto [it, inserted] = remap.emplace(id, static_cast<int>(remap.size()));
    out.labels.push_back(it->second);
  }
  out.n_clusters = remap.size();
  return out;
}

/**
 * Grid search over (eps, min_samples). Scores by NMI against `trial_ids`
 * when given, otherwise by silhouette. Cells with fewer than two clusters
 * or more than half the points as noise are rejected. The first cell with
 * the highest score wins (eps ascending, then min_samples ascending). If
 * every cell is rejected the assignment falls back to one cluster per class
 * label, or a single global cluster when no labels are available.
 */
inline TuneResult tune_dbscan(const Matrix& points, std::optional<std::span<const int>> trial_ids,
                              std::optional<std::span<const int>> class_labels = std::nullopt,
                              const TuneGrid& grid = {}) {
  const std::size_t n = points.rows();
  if (trial_ids && trial_ids->size() != n) throw ShapeError("tune_dbscan: trial id count mismatch");
  const Matrix dist = pairwise_distances(points);
  TuneResult best;
  bool found = false;
  for (double eps : grid.eps) {
    for (std::size_t ms : grid.min_samples) {
      const DbscanParams params{eps, ms};
      ClusterAssignment a = dbscan_distances(dist, params);
      TuneRecord rec{eps, ms, a.n_clusters, a.noise_fraction()};
      if (a.n_clusters >= 2 && rec.noise_fraction <= grid.max_noise_fraction) {
        double score;
        if (trial_ids) {
          score = nmi(a.labels, *trial_ids);
        } else {
          score = silhouette_distances(dist, a.labels).value_or(std::numeric_limits<double>::quiet_NaN());
        }
        if (std::isfinite(score)) {
          rec.score = score;
          rec.accepted = true;
          if (!found || score > best.score) {
            best.params = params;
            best.assignment = std::move(a);
            best.score = score;
            found = true;
          }
        }
      }
      best.grid.push_back(rec);
    }
  }
  if (!found) {
    best.fallback = true;
    best.score = std::numeric_limits<double>::quiet_NaN();
    if (class_labels && class_labels->size() == n) {
      best.assignment = contiguous_assignment(*class_labels);
    } else {
      best.assignment.labels.assign(n, 0);
      best.assignment.n_clusters = n > 0 ? 1 : 0;
    }
  }
  return best;
}

}  // namespace hedn

#endif  // HEDN_CLUSTERING_HPP
