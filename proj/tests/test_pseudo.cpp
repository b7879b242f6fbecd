#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "pah/errors.hpp"
#include "pah/pseudo_labeler.hpp"
#include "support.hpp"

using namespace pah;
using Points = std::vector<std::vector<double>>;

namespace {

double sq_dist(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

Points random_points(std::mt19937_64& rng, std::size_t n, std::size_t dim) {
  std::normal_distribution<double> g(0.0, 1.0);
  Points p(n, std::vector<double>(dim));
  for (auto& x : p)
    for (double& v : x) v = g(rng);
  return p;
}

// h = 12 rows, bands of two rows each carry e_0 .. e_5; the outer columns are zero.
Tensor band_map() {
  Tensor t({12, 4, 6});
  for (std::size_t i = 0; i < 12; ++i)
    for (std::size_t j = 1; j < 3; ++j) t.at({i, j, i / 2}) = 1.0;
  return t;
}

}  // namespace

TEST(KMeans, SingleClusterIsTheMean) {
  std::mt19937_64 rng(1);
  Points p = random_points(rng, 9, 3);
  KMeansResult r = kmeans(p, 1, 5);
  for (std::size_t c = 0; c < 3; ++c) {
    double m = 0.0;
    for (const auto& x : p) m += x[c];
    EXPECT_NEAR(r.centroids[0][c], m / 9.0, 1e-12);
  }
}

TEST(KMeans, SeparatedBlobsAreRecovered) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> g(0.0, 0.1);
  const Points centres{{0, 0}, {10, 0}, {0, 10}};
  Points p;
  std::vector<std::size_t> truth;
  for (std::size_t c = 0; c < 3; ++c)
    for (int i = 0; i < 20; ++i) {
      p.push_back({centres[c][0] + g(rng), centres[c][1] + g(rng)});
      truth.push_back(c);
    }
  KMeansResult r = kmeans(p, 3, 11);
  for (std::size_t i = 0; i < p.size(); ++i)
    for (std::size_t j = 0; j < p.size(); ++j)
      EXPECT_EQ(truth[i] == truth[j], r.assignment[i] == r.assignment[j]);
}

TEST(KMeans, SameSeedSameResult) {
  std::mt19937_64 rng(3);
  Points p = random_points(rng, 40, 4);
  EXPECT_EQ(kmeans(p, 5, 9).assignment, kmeans(p, 5, 9).assignment);
}

TEST(KMeans, BadArguments) {
  Points p{{1.0}, {2.0}};
  EXPECT_THROW(kmeans(p, 0, 1), ContractError);
  EXPECT_THROW(kmeans(p, 3, 1), InsufficientPointsError);
}

class KMeansProperties : public ::testing::TestWithParam<int> {};

TEST_P(KMeansProperties, MonotoneInertiaAndNearestCentroidFixpoint) {
  std::mt19937_64 rng(1000 + GetParam());
  const std::size_t n = 20 + rng() % 60, dim = 1 + rng() % 5, k = 2 + rng() % 5;
  Points p = random_points(rng, n, dim);
  KMeansResult r = kmeans(p, k, rng());
  for (std::size_t i = 1; i < r.inertia_history.size(); ++i)
    EXPECT_LE(r.inertia_history[i], r.inertia_history[i - 1] + 1e-12);
  double inertia = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < k; ++c)
      if (sq_dist(p[i], r.centroids[c]) < sq_dist(p[i], r.centroids[best])) best = c;
    EXPECT_EQ(r.assignment[i], best);
    inertia += sq_dist(p[i], r.centroids[r.assignment[i]]);
  }
  EXPECT_NEAR(r.inertia, inertia, 1e-9 * std::max(1.0, inertia));
}

INSTANTIATE_TEST_SUITE_P(Random, KMeansProperties, ::testing::Range(0, 25));

TEST(ForegroundSplit, StrongPixelsAreForeground) {
  Tensor t({2, 3, 2});
  const std::vector<int> strong{1, 0, 1, 0, 0, 1};
  for (std::size_t p = 0; p < 6; ++p) t.mutable_data()[p * 2] = strong[p] ? 2.0 : 0.1;
  ForegroundSplit s = foreground_split(t, 4);
  for (std::size_t p = 0; p < 6; ++p) EXPECT_EQ(s.mask[p], strong[p]);
  EXPECT_DOUBLE_EQ(s.activation[0], 1.0);
  EXPECT_DOUBLE_EQ(s.activation[1], 0.05);
}

TEST(ForegroundSplit, AllZeroMapIsDegenerate) {
  EXPECT_THROW(foreground_split(Tensor({3, 3, 2}), 1), DegenerateFeaturesError);
  EXPECT_THROW(generate_pseudo_labels(Tensor({3, 3, 2}), 4, 1), DegenerateFeaturesError);
}

TEST(PseudoLabels, OrthogonalBandsAreNumberedTopToBottom) {
  PseudoLabelMap m = generate_pseudo_labels(band_map(), 7, 3);
  EXPECT_FALSE(m.fallback);
  for (std::size_t i = 0; i < 12; ++i)
    for (std::size_t j = 0; j < 4; ++j) {
      const int expect = (j == 1 || j == 2) ? static_cast<int>(i / 2 + 1) : 0;
      EXPECT_EQ(m.labels[i * 4 + j], expect) << i << "," << j;
    }
}

TEST(PseudoLabels, BandsSurviveAnySeed) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    PseudoLabelMap m = generate_pseudo_labels(band_map(), 7, seed);
    for (std::size_t i = 0; i < 12; ++i) EXPECT_EQ(m.labels[i * 4 + 1], i / 2 + 1);
  }
}

TEST(PseudoLabels, TooFewDistinctFeaturesFallBack) {
  Tensor t({4, 2, 3});
  for (std::size_t p = 0; p < 8; ++p) t.mutable_data()[p * 3] = p < 4 ? 1.0 : 2.0;  // one direction
  PseudoLabelMap m = generate_pseudo_labels(t, 4, 1);
  EXPECT_TRUE(m.fallback);
  for (auto l : m.labels) EXPECT_LE(l, 1);
}

TEST(PseudoLabels, LabelsStayInRangeOnRandomMaps) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    Tensor t = pah::test::random_tensor({8, 4, 5}, rng, 0, 1);
    PseudoLabelMap m = generate_pseudo_labels(t, 7, trial, 3);
    EXPECT_EQ(m.epoch_generated, 3u);
    for (auto l : m.labels) EXPECT_LT(l, 7);
    EXPECT_EQ(m.labels, generate_pseudo_labels(t, 7, trial, 3).labels);
  }
}

TEST(PseudoLabels, OneHotAndFlip) {
  PseudoLabelMap m = generate_pseudo_labels(band_map(), 7, 3);
  const Tensor oh = m.one_hot();
  for (std::size_t p = 0; p < 48; ++p) {
    double s = 0.0;
    for (std::size_t k = 0; k < 7; ++k) s += oh.data()[p * 7 + k];
    EXPECT_EQ(s, 1.0);
    EXPECT_EQ(oh.data()[p * 7 + m.labels[p]], 1.0);
  }
  PseudoLabelMap f = m.flipped();
  EXPECT_EQ(f.labels[0 * 4 + 2], m.labels[0 * 4 + 1]);
  EXPECT_EQ(f.flipped().labels, m.labels);
}

TEST(RefreshPolicy, EveryEpoch) {
  EXPECT_TRUE(refresh_policy(0));
  EXPECT_TRUE(refresh_policy(37));
  EXPECT_THROW(refresh_policy(-1), ContractError);
}
