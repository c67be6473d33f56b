#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>
#include <set>

#include "equigrid/core.hpp"
#include "support.hpp"

using namespace equigrid;

TEST(DistanceAdjacency, CoincidentPair) {
  const std::vector<Point> pts{{0, 0}, {0, 0}};
  Matrix want(2, 2);
  want << 0, 1, 1, 0;
  EXPECT_EQ(build_distance_adjacency(pts, 1.0, 0.0), want);
}

TEST(DistanceAdjacency, ThresholdCutsWeakPair) {
  const std::vector<Point> pts{{0, 0}, {2, 0}};
  // exp(-4) ~ 0.0183
  EXPECT_EQ(build_distance_adjacency(pts, 1.0, 0.02), Matrix::Zero(2, 2));
  EXPECT_EQ(build_distance_adjacency(pts, 1.0, std::exp(-4.0)), Matrix::Zero(2, 2));
}

TEST(DistanceAdjacency, CollinearTriple) {
  const std::vector<Point> pts{{0, 0}, {1, 0}, {2, 0}};
  const Matrix a = build_distance_adjacency(pts, 1.0, 0.0);
  EXPECT_DOUBLE_EQ(a(0, 1), std::exp(-1.0));
  EXPECT_DOUBLE_EQ(a(1, 2), std::exp(-1.0));
  EXPECT_DOUBLE_EQ(a(0, 2), std::exp(-4.0));
  EXPECT_EQ(a, a.transpose());
}

TEST(DistanceAdjacency, RejectsBadInput) {
  const std::vector<Point> one{{0, 0}};
  EXPECT_THROW(build_distance_adjacency(one, 1.0, 0.0), std::invalid_argument);
  const std::vector<Point> two{{0, 0}, {1, 1}};
  EXPECT_THROW(build_distance_adjacency(two, 0.0, 0.0), std::invalid_argument);
  EXPECT_THROW(build_distance_adjacency(two, 1.0, 1.0), std::invalid_argument);
  const std::vector<Point> bad{{0, 0}, {std::numeric_limits<double>::infinity(), 0}};
  EXPECT_THROW(build_distance_adjacency(bad, 1.0, 0.0), std::invalid_argument);
}

TEST(DistanceAdjacency, SymmetricBoundedZeroDiagonal) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> coord(-5, 5), sig(0.1, 3), thr(0, 0.9);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<Point> pts(12);
    for (auto& p : pts) p = {coord(rng), coord(rng)};
    const Matrix a = build_distance_adjacency(pts, sig(rng), thr(rng));
    EXPECT_EQ(a, a.transpose());
    EXPECT_EQ(a.diagonal(), Vector::Zero(12));
    EXPECT_GE(a.minCoeff(), 0.0);
    EXPECT_LE(a.maxCoeff(), 1.0);
  }
}

TEST(RowNormalize, Examples) {
  Matrix a(2, 2);
  a << 0, 2, 4, 0;
  Matrix want(2, 2);
  want << 0, 1, 1, 0;
  EXPECT_EQ(row_normalize(a), want);
  EXPECT_EQ(row_normalize(Matrix::Zero(3, 3)), Matrix::Zero(3, 3));
  Matrix b(2, 2);
  b << 1, 1, 0, 0;
  Matrix want_b(2, 2);
  want_b << 0.5, 0.5, 0, 0;
  EXPECT_EQ(row_normalize(b), want_b);
}

TEST(RowNormalize, RowsSumToOneOrZero) {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 50; ++trial) {
    Matrix a = support::random_adjacency(9, rng, 0.2);
    a.row(trial % 9).setZero();
    const Matrix p = row_normalize(a);
    for (Eigen::Index i = 0; i < 9; ++i) {
      const double s = p.row(i).sum();
      EXPECT_TRUE(std::abs(s - 1.0) < 1e-12 || s == 0.0);
    }
  }
}

TEST(RegionGraph, Validation) {
  EXPECT_NO_THROW(RegionGraph({"a", "b"}, Matrix::Zero(2, 2)));
  EXPECT_THROW(RegionGraph({"a", "b"}, Matrix::Zero(3, 3)), std::invalid_argument);
  EXPECT_THROW(RegionGraph({"a", "a"}, Matrix::Zero(2, 2)), std::invalid_argument);
  Matrix neg = Matrix::Zero(2, 2);
  neg(0, 1) = -1;
  EXPECT_THROW(RegionGraph({"a", "b"}, neg), std::invalid_argument);
  Matrix nan = Matrix::Zero(2, 2);
  nan(1, 0) = std::nan("");
  EXPECT_THROW(RegionGraph({"a", "b"}, nan), std::invalid_argument);
  EXPECT_THROW(RegionGraph({"a", "b"}, Matrix::Zero(2, 2), std::vector<Point>{{0, 0}}),
               std::invalid_argument);
}

TEST(RegionGraph, AsymmetricEdgesAccepted) {
  Matrix a = Matrix::Zero(2, 2);
  a(0, 1) = 1.0;
  const RegionGraph g({"x", "y"}, a);
  EXPECT_EQ(g.adjacency(), a);
  EXPECT_EQ(g.index_of("y"), 1u);
  EXPECT_FALSE(g.index_of("z"));
}

TEST(Types, Invariants) {
  EXPECT_THROW(DemandTensor(Matrix::Zero(2, 2), 0), std::invalid_argument);
  Matrix bad = Matrix::Zero(2, 2);
  bad(0, 0) = std::numeric_limits<double>::infinity();
  EXPECT_THROW(DemandTensor(bad, 15), std::invalid_argument);
  EXPECT_THROW((ForecastWindow{0, 1}.validate()), std::invalid_argument);
  EXPECT_THROW((ForecastWindow{1, 0}.validate()), std::invalid_argument);
  EXPECT_NO_THROW((ForecastWindow{1, 1}.validate()));
  Vector frac(2);
  frac << 0.5, 1.5;
  EXPECT_THROW(DemographicTable({"a", "b"}, frac, Vector::Zero(2)), std::invalid_argument);
  EXPECT_THROW(DemographicTable({"a", "b"}, Vector::Zero(3), Vector::Zero(2)),
               std::invalid_argument);
}

TEST(Types, DemographicAlignment) {
  const RegionGraph g({"a", "b"}, Matrix::Zero(2, 2));
  EXPECT_NO_THROW(DemographicTable({"a", "b"}, Vector::Zero(2), Vector::Zero(2)).check_aligned(g));
  EXPECT_THROW(DemographicTable({"b", "a"}, Vector::Zero(2), Vector::Zero(2)).check_aligned(g),
               std::invalid_argument);
}

TEST(Seeds, StreamsDifferAndRepeat) {
  std::set<std::uint64_t> seen;
  for (std::uint64_t seed : {0ull, 1ull, 2ull}) {
    for (auto s : {streams::kSyntheticData, streams::kModelInit, streams::kBatchShuffle,
                   streams::kAttentionInit}) {
      EXPECT_EQ(stream_seed(seed, s), stream_seed(seed, s));
      seen.insert(stream_seed(seed, s));
    }
  }
  EXPECT_EQ(seen.size(), 12u);
}
