#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "hedn/clustering.hpp"
#include "oracles.hpp"

using namespace hedn;

namespace {

Matrix blobs(std::mt19937_64& rng, const std::vector<std::vector<double>>& centers, std::size_t per,
             double sigma, std::vector<int>* ids = nullptr) {
  const std::size_t d = centers.front().size();
  Matrix pts(centers.size() * per, d);
  std::normal_distribution<double> n(0.0, sigma);
  for (std::size_t c = 0; c < centers.size(); ++c)
    for (std::size_t i = 0; i < per; ++i) {
      for (std::size_t k = 0; k < d; ++k) pts(c * per + i, k) = centers[c][k] + n(rng);
      if (ids) ids->push_back(static_cast<int>(c));
    }
  return pts;
}

}  // namespace

TEST(Dbscan, TwoSeparatedBlobs) {
  std::mt19937_64 rng(1);
  const Matrix pts = blobs(rng, {{0, 0}, {20, 0}}, 100, 0.5);
  const auto a = dbscan(pts, {2.0, 4});
  EXPECT_EQ(a.n_clusters, 2u);
  EXPECT_EQ(a.noise_count(), 0u);
  EXPECT_EQ(oracle::canonical(a.labels), oracle::canonical(oracle::brute_dbscan(pts, 2.0, 4)));
}

TEST(Dbscan, SinglePointIsNoise) {
  const auto a = dbscan(Matrix{{1, 2}}, {1.0, 2});
  EXPECT_EQ(a.labels, std::vector<int>{kNoise});
  EXPECT_EQ(a.n_clusters, 0u);
}

TEST(Dbscan, IdenticalPointsFormOneCluster) {
  const auto a = dbscan(Matrix(7, 3, 0.5), {0.1, 7});
  EXPECT_EQ(a.n_clusters, 1u);
  EXPECT_EQ(a.noise_count(), 0u);
}

TEST(Dbscan, EpsIsInclusive) {
  const auto a = dbscan(Matrix{{0.0}, {1.0}}, {1.0, 2});
  EXPECT_EQ(a.n_clusters, 1u);
}

TEST(Dbscan, RejectsInvalidParameters) {
  EXPECT_THROW(dbscan(Matrix(2, 2), {0.0, 2}), ConfigError);
  EXPECT_THROW(dbscan(Matrix(2, 2), {1.0, 0}), ConfigError);
}

TEST(Dbscan, MatchesBruteForceOnRandomInstances) {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t n = std::uniform_int_distribution<std::size_t>(1, 120)(rng);
    const std::size_t d = std::uniform_int_distribution<std::size_t>(1, 10)(rng);
    const Matrix pts = oracle::random_matrix(n, d, rng);
    const double eps = std::uniform_real_distribution<double>(0.3, 1.2)(rng) * std::sqrt(double(d));
    const std::size_t ms = std::uniform_int_distribution<std::size_t>(1, 8)(rng);
    ASSERT_EQ(oracle::canonical(dbscan(pts, {eps, ms}).labels),
              oracle::canonical(oracle::brute_dbscan(pts, eps, ms)))
        << "trial " << trial;
  }
}

TEST(Nmi, IdenticalPartitions) {
  const std::vector<int> a{0, 0, 1, 1, 2};
  EXPECT_DOUBLE_EQ(nmi(a, a), 1.0);
}

TEST(Nmi, SingleClusterAgainstTwoIsZero) {
  EXPECT_EQ(nmi(std::vector<int>{0, 0, 0, 0}, std::vector<int>{0, 0, 1, 1}), 0.0);
}

TEST(Nmi, TwelveSampleContingencyTable) {
  const std::vector<int> a{0, 0, 0, 0, 1, 1, 1, 1, 2, 2, 2, 2};
  const std::vector<int> b{0, 0, 0, 1, 1, 1, 1, 2, 2, 2, 0, 2};
  EXPECT_NEAR(nmi(a, b), oracle::nmi(a, b), 1e-12);
}

TEST(Nmi, SymmetricAndRelabelInvariant) {
  std::mt19937_64 rng(7);
  for (int t = 0; t < 50; ++t) {
    std::vector<int> a(40), b(40);
    for (int& v : a) v = std::uniform_int_distribution<int>(-1, 4)(rng);
    for (int& v : b) v = std::uniform_int_distribution<int>(0, 3)(rng);
    std::vector<int> relabeled = a;
    for (int& v : relabeled) v = 100 - 7 * v;
    EXPECT_NEAR(nmi(a, b), nmi(b, a), 1e-12);
    EXPECT_NEAR(nmi(a, b), nmi(relabeled, b), 1e-12);
    EXPECT_NEAR(nmi(a, b), oracle::nmi(a, b), 1e-12);
  }
}

TEST(Silhouette, SeparatedBlobsScoreHigh) {
  std::mt19937_64 rng(3);
  std::vector<int> ids;
  const Matrix pts = blobs(rng, {{0, 0}, {30, 30}}, 40, 0.3, &ids);
  const double s = *silhouette(pts, ids);
  EXPECT_GT(s, 0.9);
  EXPECT_NEAR(s, oracle::silhouette(pts, ids), 1e-12);
}

TEST(Silhouette, InterleavedBlobsScoreNearZero) {
  std::mt19937_64 rng(4);
  const Matrix pts = blobs(rng, {{0, 0}}, 200, 1.0);
  std::vector<int> ids(200);
  for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<int>(i % 2);
  const double s = *silhouette(pts, ids);
  EXPECT_LT(std::abs(s), 0.1);
  EXPECT_NEAR(s, oracle::silhouette(pts, ids), 1e-12);
}

TEST(Silhouette, SingletonClusterContributesZero) {
  const Matrix pts{{0, 0}, {0, 1}, {10, 0}};
  const std::vector<int> ids{0, 0, 1};
  // points 0 and 1: a = 1, b = 10 and sqrt(101); singleton scores 0
  const double expected = ((10.0 - 1.0) / 10.0 + (std::sqrt(101.0) - 1.0) / std::sqrt(101.0)) / 3.0;
  EXPECT_NEAR(*silhouette(pts, ids), expected, 1e-12);
}

TEST(Silhouette, UndefinedBelowTwoClusters) {
  EXPECT_FALSE(silhouette(Matrix(3, 2), std::vector<int>{0, 0, kNoise}).has_value());
}

TEST(TuneDbscan, TrialGroupedBlobsReachPerfectNmi) {
  std::mt19937_64 rng(5);
  std::vector<int> ids;
  const Matrix pts = blobs(rng, {{0, 0, 0}, {15, 0, 0}, {0, 15, 0}, {0, 0, 15}}, 25, 0.3, &ids);
  const auto r = tune_dbscan(pts, std::span<const int>(ids));
  EXPECT_FALSE(r.fallback);
  EXPECT_DOUBLE_EQ(r.score, 1.0);
  EXPECT_EQ(oracle::canonical(r.assignment.labels),
            oracle::canonical(oracle::brute_dbscan(pts, r.params.eps, r.params.min_samples)));
  EXPECT_EQ(r.grid.size(), 9u * 4u);
}

TEST(TuneDbscan, WithoutTrialIdsMaximisesSilhouette) {
  std::mt19937_64 rng(6);
  const Matrix pts = blobs(rng, {{0, 0}, {4, 0}, {30, 30}}, 30, 0.4);
  const auto r = tune_dbscan(pts, std::nullopt);
  ASSERT_FALSE(r.fallback);
  double best = -2.0;
  for (const auto& rec : r.grid)
    if (rec.accepted) best = std::max(best, rec.score);
  EXPECT_EQ(r.score, best);
  EXPECT_NEAR(r.score, oracle::silhouette(pts, r.assignment.labels), 1e-12);
}

TEST(TuneDbscan, AllRejectedFallsBackToOneCluster) {
  std::mt19937_64 rng(7);
  const Matrix pts = oracle::random_matrix(10, 2, rng, 100.0);
  const auto r = tune_dbscan(pts, std::nullopt);
  EXPECT_TRUE(r.fallback);
  EXPECT_TRUE(std::isnan(r.score));
  EXPECT_EQ(r.assignment.n_clusters, 1u);
  EXPECT_EQ(r.assignment.noise_count(), 0u);
}

TEST(TuneDbscan, FallbackUsesClassLabelsWhenGiven) {
  std::mt19937_64 rng(8);
  const Matrix pts = oracle::random_matrix(6, 2, rng, 100.0);
  const std::vector<int> labels{2, 2, 0, 1, 0, 1};
  const auto r = tune_dbscan(pts, std::nullopt, std::span<const int>(labels));
  EXPECT_TRUE(r.fallback);
  EXPECT_EQ(r.assignment.labels, (std::vector<int>{0, 0, 1, 2, 1, 2}));
}

TEST(TuneDbscan, Deterministic) {
  std::mt19937_64 rng(9);
  std::vector<int> ids;
  const Matrix pts = blobs(rng, {{0, 0}, {5, 5}, {10, 0}}, 20, 0.8, &ids);
  const auto a = tune_dbscan(pts, std::span<const int>(ids));
  const auto b = tune_dbscan(pts, std::span<const int>(ids));
  EXPECT_EQ(a.params.eps, b.params.eps);
  EXPECT_EQ(a.params.min_samples, b.params.min_samples);
  EXPECT_EQ(a.assignment.labels, b.assignment.labels);
}
