#pragma once

// Density peaks clustering with k-nearest-neighbour densities (DPC-KNN).
//
//   rho_i   = exp(-mean squared distance to the k nearest neighbours of i)
//   delta_i = distance to the nearest point denser than i; for the densest
//             point, the largest pairwise distance
//   centers = the n points with largest rho_i * delta_i
//   labels  = index of the nearest center (centers keep their own label)
//
// Every tie resolves to the lower point index. "Denser than" is the strict
// order (rho_j > rho_i) or (rho_j == rho_i and j < i), so exactly one point
// is the density maximum even when points coincide.

#include "prunevid/core.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <vector>

namespace prunevid {

struct ClusterResult {
  std::vector<std::size_t> labels;   // per point, in [0, centers.size())
  std::vector<std::size_t> centers;  // point index of each cluster, by descending score
  std::vector<double> densities;     // rho
  std::vector<double> deltas;        // delta

  [[nodiscard]] std::size_t n_clusters() const noexcept { return centers.size(); }
};

/// Squared Euclidean distances, accumulated in double. Symmetric P x P.
inline std::vector<double> pairwise_sq_distances(const Matrix& points) {
  const auto n = points.rows();
  std::vector<double> d(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto a = points.row(i);
    for (std::size_t j = i + 1; j < n; ++j) {
      const auto b = points.row(j);
      double acc = 0.0;
      for (std::size_t c = 0; c < a.size(); ++c) {
        const double diff = static_cast<double>(a[c]) - static_cast<double>(b[c]);
        acc += diff * diff;
      }
      d[i * n + j] = acc;
      d[j * n + i] = acc;
    }
  }
  return d;
}

inline ClusterResult dpc_knn(const Matrix& points, std::size_t k_knn, std::size_t n_clusters) {
  const std::size_t n = points.rows();
  if (n == 0) throw InvalidArgument("dpc_knn: empty input");
  if (n_clusters < 1 || n_clusters > n) throw InvalidArgument("dpc_knn: n_clusters must be in [1, P]");
  if (k_knn < 1) throw InvalidArgument("dpc_knn: k_knn must be >= 1");
  const std::size_t k = std::min(k_knn, n - 1);

  const auto dist2 = pairwise_sq_distances(points);

  // Mean squared kNN distance. Density comparisons use it directly, since
  // exp(-x) underflows long before the ordering stops being meaningful.
  std::vector<double> knn_mean(n, 0.0);
  std::vector<double> scratch;
  scratch.reserve(n);
  for (std::size_t i = 0; i < n && k > 0; ++i) {
    scratch.clear();
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) scratch.push_back(dist2[i * n + j]);
    }
    std::partial_sort(scratch.begin(), scratch.begin() + static_cast<std::ptrdiff_t>(k), scratch.end());
    double acc = 0.0;
    for (std::size_t q = 0; q < k; ++q) acc += scratch[q];
    knn_mean[i] = acc / static_cast<double>(k);
  }

  ClusterResult result;
  result.densities.resize(n);
  for (std::size_t i = 0; i < n; ++i) result.densities[i] = std::exp(-knn_mean[i]);

  std::vector<std::size_t> by_density(n);
  std::iota(by_density.begin(), by_density.end(), std::size_t{0});
  std::stable_sort(by_density.begin(), by_density.end(),
                   [&](std::size_t a, std::size_t b) { return knn_mean[a] < knn_mean[b]; });

  double max_pair = 0.0;
  for (double v : dist2) max_pair = std::max(max_pair, v);

  result.deltas.assign(n, 0.0);
  result.deltas[by_density[0]] = std::sqrt(max_pair);
  for (std::size_t r = 1; r < n; ++r) {
    const auto i = by_density[r];
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t q = 0; q < r; ++q) best = std::min(best, dist2[i * n + by_density[q]]);
    result.deltas[i] = std::sqrt(best);
  }

  // rho * delta, with rho rescaled by exp(min knn_mean). A common positive
  // factor leaves the ranking unchanged and keeps the scores representable.
  const double shift = knn_mean[by_density[0]];
  std::vector<double> score(n);
  for (std::size_t i = 0; i < n; ++i) score[i] = std::exp(-(knn_mean[i] - shift)) * result.deltas[i];

  std::vector<std::size_t> by_score(n);
  std::iota(by_score.begin(), by_score.end(), std::size_t{0});
  std::stable_sort(by_score.begin(), by_score.end(),
                   [&](std::size_t a, std::size_t b) { return score[a] > score[b]; });
  result.centers.assign(by_score.begin(), by_score.begin() + static_cast<std::ptrdiff_t>(n_clusters));

  constexpr auto unassigned = std::numeric_limits<std::size_t>::max();
  result.labels.assign(n, unassigned);
  for (std::size_t c = 0; c < n_clusters; ++c) result.labels[result.centers[c]] = c;
  for (std::size_t i = 0; i < n; ++i) {
    if (result.labels[i] != unassigned) continue;
    std::size_t best_label = 0;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < n_clusters; ++c) {
      const double d = dist2[i * n + result.centers[c]];
      if (d < best || (d == best && result.centers[c] < result.centers[best_label])) {
        best = d;
        best_label = c;
      }
    }
    result.labels[i] = best_label;
  }
  return result;
}

}  // namespace prunevid
