#include "prunevid/clustering.hpp"
#include "prunevid/rng.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <vector>

using namespace prunevid;

namespace {

Matrix from_rows(const std::vector<std::vector<float>>& rows) {
  Matrix m(0, rows.front().size());
  for (const auto& r : rows) m.append_row(r);
  return m;
}

double sq_dist(std::span<const float> a, std::span<const float> b) {
  double acc = 0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += (double(a[i]) - b[i]) * (double(a[i]) - b[i]);
  return acc;
}

// Independent check: every non-center sits with its nearest center.
void expect_nearest_center_assignment(const Matrix& pts, const ClusterResult& res) {
  for (std::size_t i = 0; i < pts.rows(); ++i) {
    if (std::find(res.centers.begin(), res.centers.end(), i) != res.centers.end()) {
      EXPECT_EQ(res.centers[res.labels[i]], i);
      continue;
    }
    double best = INFINITY;
    for (auto c : res.centers) best = std::min(best, sq_dist(pts.row(i), pts.row(c)));
    EXPECT_EQ(sq_dist(pts.row(i), pts.row(res.centers[res.labels[i]])), best) << "point " << i;
  }
}

// Blob instance: `blobs` centres on a 10-unit lattice, jitter in [-0.5, 0.5].
struct BlobInstance {
  Matrix points;
  std::vector<std::size_t> truth;
};

BlobInstance make_blobs(Rng& rng, std::size_t blobs) {
  BlobInstance inst{Matrix(0, 2), {}};
  for (std::size_t b = 0; b < blobs; ++b) {
    const float cx = 10.0f * static_cast<float>(b % 2), cy = 10.0f * static_cast<float>(b / 2);
    const auto count = 5 + rng.below(4);
    for (std::size_t p = 0; p < count; ++p) {
      const std::vector<float> pt{cx + static_cast<float>(rng.uniform(-0.5, 0.5)),
                                  cy + static_cast<float>(rng.uniform(-0.5, 0.5))};
      inst.points.append_row(pt);
      inst.truth.push_back(b);
    }
  }
  return inst;
}

bool same_partition(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) {
  std::set<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t i = 0; i < a.size(); ++i) pairs.insert({a[i], b[i]});
  std::set<std::size_t> la(a.begin(), a.end()), lb(b.begin(), b.end());
  return pairs.size() == la.size() && la.size() == lb.size();
}

}  // namespace

TEST(DpcKnn, TwoBlobsMatchMembership) {
  const auto pts = from_rows({{0.0f, 0.0f}, {0.3f, 0.1f}, {-0.2f, 0.4f}, {0.1f, -0.3f}, {-0.4f, -0.1f},
                              {10.0f, 10.0f}, {10.2f, 9.7f}, {9.8f, 10.3f}, {10.4f, 10.1f}, {9.6f, 9.9f}});
  const auto res = dpc_knn(pts, 5, 2);
  ASSERT_EQ(res.n_clusters(), 2u);
  expect_nearest_center_assignment(pts, res);
  for (std::size_t i = 1; i < 5; ++i) EXPECT_EQ(res.labels[i], res.labels[0]);
  for (std::size_t i = 6; i < 10; ++i) EXPECT_EQ(res.labels[i], res.labels[5]);
  EXPECT_NE(res.labels[0], res.labels[5]);
}

TEST(DpcKnn, IdenticalPointsSingleCluster) {
  const auto pts = from_rows(std::vector<std::vector<float>>(6, {1.5f, -2.0f, 3.0f}));
  const auto res = dpc_knn(pts, 3, 1);
  ASSERT_EQ(res.centers, std::vector<std::size_t>{0});
  for (auto l : res.labels) EXPECT_EQ(l, 0u);
}

TEST(DpcKnn, IdenticalPointsKeepRequestedCenters) {
  // Coinciding points: centers are the lowest indices and keep their labels.
  const auto pts = from_rows(std::vector<std::vector<float>>(5, {2.0f}));
  const auto res = dpc_knn(pts, 2, 3);
  EXPECT_EQ(res.centers, (std::vector<std::size_t>{0, 1, 2}));
  EXPECT_EQ(res.labels, (std::vector<std::size_t>{0, 1, 2, 0, 0}));
}

TEST(DpcKnn, FarPointIsLowDensityOutlier) {
  // 1-D {0, 1, 100}, k=1. Mean sq kNN distances are {1, 1, 99^2}, so
  // rho = {e^-1, e^-1, e^-9801}; point 0 wins the density tie by index.
  // delta = {100 (max pair), 1, 99}; rho*delta ranks 0 then 1, and the far
  // point joins its nearest center, point 1.
  const auto pts = from_rows({{0.0f}, {1.0f}, {100.0f}});
  const auto res = dpc_knn(pts, 1, 2);
  EXPECT_NEAR(res.densities[0], std::exp(-1.0), 1e-15);
  EXPECT_NEAR(res.densities[1], std::exp(-1.0), 1e-15);
  EXPECT_EQ(res.densities[2], 0.0);  // e^-9801 underflows; ordering uses the exponent
  EXPECT_DOUBLE_EQ(res.deltas[0], 100.0);
  EXPECT_DOUBLE_EQ(res.deltas[1], 1.0);
  EXPECT_DOUBLE_EQ(res.deltas[2], 99.0);
  EXPECT_EQ(res.centers, (std::vector<std::size_t>{0, 1}));
  EXPECT_EQ(res.labels, (std::vector<std::size_t>{0, 1, 1}));
}

TEST(DpcKnn, DensityMatchesBruteForce) {
  Rng rng(17);
  Matrix pts(0, 3);
  for (int i = 0; i < 25; ++i) {
    pts.append_row(std::vector<float>{float(rng.normal()), float(rng.normal()), float(rng.normal())});
  }
  const std::size_t k = 4;
  const auto res = dpc_knn(pts, k, 3);
  for (std::size_t i = 0; i < pts.rows(); ++i) {
    std::vector<double> d;
    for (std::size_t j = 0; j < pts.rows(); ++j) {
      if (j != i) d.push_back(sq_dist(pts.row(i), pts.row(j)));
    }
    std::sort(d.begin(), d.end());
    const double mean = std::accumulate(d.begin(), d.begin() + k, 0.0) / k;
    EXPECT_NEAR(res.densities[i], std::exp(-mean), 1e-12);

    double delta = INFINITY;
    for (std::size_t j = 0; j < pts.rows(); ++j) {
      if (res.densities[j] > res.densities[i]) delta = std::min(delta, std::sqrt(sq_dist(pts.row(i), pts.row(j))));
    }
    if (std::isinf(delta)) {
      double max_pair = 0;
      for (std::size_t a = 0; a < pts.rows(); ++a)
        for (std::size_t b = 0; b < pts.rows(); ++b) max_pair = std::max(max_pair, sq_dist(pts.row(a), pts.row(b)));
      delta = std::sqrt(max_pair);
    }
    EXPECT_NEAR(res.deltas[i], delta, 1e-12) << "point " << i;
  }
}

TEST(DpcKnn, KnnClampedToPointCount) {
  const auto pts = from_rows({{0.0f}, {1.0f}, {5.0f}});
  EXPECT_EQ(dpc_knn(pts, 100, 2).labels, dpc_knn(pts, 2, 2).labels);
  const auto single = dpc_knn(from_rows({{3.0f}}), 5, 1);
  EXPECT_EQ(single.labels, std::vector<std::size_t>{0});
}

TEST(DpcKnn, Errors) {
  EXPECT_THROW(dpc_knn(Matrix(0, 2), 3, 1), InvalidArgument);
  const auto pts = from_rows({{0.0f}, {1.0f}});
  EXPECT_THROW(dpc_knn(pts, 1, 3), InvalidArgument);
  EXPECT_THROW(dpc_knn(pts, 1, 0), InvalidArgument);
  EXPECT_THROW(dpc_knn(pts, 0, 1), InvalidArgument);
}

TEST(DpcKnn, LabelInvariantsOnRandomInputs) {
  Rng rng(31);
  for (int it = 0; it < 100; ++it) {
    const auto n = 2 + rng.below(30);
    Matrix pts(0, 2);
    for (std::size_t i = 0; i < n; ++i) pts.append_row(std::vector<float>{float(rng.normal()), float(rng.normal())});
    const auto nc = 1 + rng.below(n);
    const auto res = dpc_knn(pts, 1 + rng.below(6), nc);
    ASSERT_EQ(res.centers.size(), nc);
    ASSERT_EQ(std::set<std::size_t>(res.centers.begin(), res.centers.end()).size(), nc);
    std::set<std::size_t> used(res.labels.begin(), res.labels.end());
    ASSERT_EQ(used.size(), nc) << "labels must be surjective";
    for (std::size_t c = 0; c < nc; ++c) ASSERT_EQ(res.labels[res.centers[c]], c);
    expect_nearest_center_assignment(pts, res);
  }
}

TEST(DpcKnn, PermutationEquivariance) {
  Rng rng(47);
  for (int it = 0; it < 50; ++it) {
    const auto n = 6 + rng.below(20);
    Matrix pts(0, 3);
    for (std::size_t i = 0; i < n; ++i) {
      pts.append_row(std::vector<float>{float(rng.normal()), float(rng.normal()), float(rng.normal())});
    }
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    for (std::size_t i = n - 1; i > 0; --i) std::swap(perm[i], perm[rng.below(i + 1)]);
    const auto permuted = pts.select_rows(perm);
    const auto nc = 1 + rng.below(4);
    const auto a = dpc_knn(pts, 3, nc);
    const auto b = dpc_knn(permuted, 3, nc);
    for (std::size_t j = 0; j < n; ++j) ASSERT_EQ(b.labels[j], a.labels[perm[j]]);
  }
}

TEST(DpcKnn, Deterministic) {
  Rng rng(5);
  Matrix pts(0, 4);
  for (int i = 0; i < 40; ++i) {
    pts.append_row(std::vector<float>{float(rng.normal()), float(rng.normal()), float(rng.normal()), float(rng.normal())});
  }
  const auto a = dpc_knn(pts, 5, 6), b = dpc_knn(pts, 5, 6);
  EXPECT_EQ(a.labels, b.labels);
  EXPECT_EQ(a.centers, b.centers);
  EXPECT_EQ(a.densities, b.densities);
  EXPECT_EQ(a.deltas, b.deltas);
}

TEST(DpcKnn, BlobRecoverySample) {
  Rng rng(8);
  for (int it = 0; it < 20; ++it) {
    for (std::size_t blobs : {2u, 4u}) {
      const auto inst = make_blobs(rng, blobs);
      const auto res = dpc_knn(inst.points, 4, blobs);
      expect_nearest_center_assignment(inst.points, res);
      ASSERT_TRUE(same_partition(res.labels, inst.truth)) << "iteration " << it << ", " << blobs << " blobs";
    }
  }
}
