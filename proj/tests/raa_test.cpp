#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "equigrid/raa.hpp"
#include "support.hpp"

using namespace equigrid;
using namespace equigrid::raa;

namespace {

// Straight-line recomputation of H for one pair of weight rows.
Matrix reference_weights(const Vector& r, const AttentionWeights& w) {
  const Eigen::Index n = r.size();
  const int d = w.d_k();
  Matrix s(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int c = 0; c < d; ++c) {
        acc += std::tanh(r[i] * w.query(0, c)) * std::tanh(r[j] * w.key(0, c));
      }
      s(i, j) = acc / std::sqrt(static_cast<double>(d));
    }
  }
  Matrix h(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double z = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) z += std::exp(s(i, j));
    for (Eigen::Index j = 0; j < n; ++j) h(i, j) = std::exp(s(i, j)) / z;
  }
  return h;
}

}  // namespace

TEST(Attention, ZeroResidualGivesUniformWeights) {
  const auto w = init_attention_weights(16, 1);
  const auto out = attention_scores(ResidualVector(Vector::Zero(9)), w);
  EXPECT_LT((out.scores).cwiseAbs().maxCoeff(), 1e-300);
  EXPECT_LT((out.weights.array() - 1.0 / 9.0).abs().maxCoeff(), 1e-12);
}

TEST(Attention, SaturatedTwoNodeExample) {
  Vector r(2);
  r << 10, -10;
  const auto out = attention_scores(ResidualVector(r), constant_attention_weights(1, 1.0));
  EXPECT_NEAR(out.q(0, 0), 1.0, 1e-8);
  EXPECT_NEAR(out.q(1, 0), -1.0, 1e-8);
  EXPECT_NEAR(out.scores(0, 1), -1.0, 1e-8);
  EXPECT_NEAR(out.weights(0, 0), 0.8808, 1e-4);
  EXPECT_NEAR(out.weights(0, 1), 0.1192, 1e-4);
  EXPECT_NEAR(out.weights(1, 1), 0.8808, 1e-4);
}

TEST(Attention, MatchesStraightLineRecomputation) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const Vector r = support::random_vector(11, rng, 3.0);
    const auto w = init_attention_weights(5, 100 + trial);
    const auto out = attention_scores(ResidualVector(r), w);
    EXPECT_LT((out.weights - reference_weights(r, w)).cwiseAbs().maxCoeff(), 1e-13);
  }
}

TEST(Attention, RowsAreStochasticAndScoresBounded) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const Vector r = support::random_vector(20, rng, 50.0);
    const auto w = init_attention_weights(16, trial);
    const auto out = attention_scores(ResidualVector(r), w);
    for (Eigen::Index i = 0; i < 20; ++i) EXPECT_NEAR(out.weights.row(i).sum(), 1.0, 1e-12);
    EXPECT_GT(out.weights.minCoeff(), 0.0);
    EXPECT_LT(out.weights.maxCoeff(), 1.0);
    EXPECT_LE(out.scores.cwiseAbs().maxCoeff(), 4.0 + 1e-12);
  }
}

TEST(Attention, LargeScoresDoNotOverflow) {
  Vector r(3);
  r << 1e6, -1e6, 1e6;
  const auto out = attention_scores(ResidualVector(r), constant_attention_weights(400, 1.0));
  EXPECT_TRUE(out.weights.allFinite());
  for (Eigen::Index i = 0; i < 3; ++i) EXPECT_NEAR(out.weights.row(i).sum(), 1.0, 1e-12);
}

TEST(Attention, NonFiniteResidualRejected) {
  Vector r = Vector::Zero(3);
  r[1] = std::nan("");
  // ResidualVector already refuses non-finite input.
  EXPECT_THROW(ResidualVector{r}, std::invalid_argument);
}

TEST(Attention, PermutationEquivariance) {
  std::mt19937_64 rng(4);
  const Eigen::Index n = 10;
  const Vector r = support::random_vector(n, rng, 2.0);
  const Matrix a = support::random_adjacency(n, rng);
  const auto w = init_attention_weights(8, 9);
  Eigen::PermutationMatrix<Eigen::Dynamic> p(n);
  p.setIdentity();
  std::shuffle(p.indices().data(), p.indices().data() + n, rng);

  const auto base = epoch_update(ResidualVector(r), AttentionState(w, a), a);
  const Matrix pa = p * a * p.transpose();
  const auto moved = epoch_update(ResidualVector(p * r), AttentionState(w, pa), pa);
  EXPECT_LT((p * *base.last_weights() * p.transpose() - *moved.last_weights()).cwiseAbs().maxCoeff(),
            1e-14);
  EXPECT_LT((p * base.adapted_adjacency() * p.transpose() - moved.adapted_adjacency())
                .cwiseAbs()
                .maxCoeff(),
            1e-14);
}

TEST(Adaptation, HadamardExamples) {
  const Matrix a = Matrix::Random(5, 5).cwiseAbs();
  EXPECT_EQ(adapt_adjacency(a, Matrix::Constant(5, 5, 0.2)), a * 0.2);
  Vector r(2);
  r << 10, -10;
  const auto out = attention_scores(ResidualVector(r), constant_attention_weights(1, 1.0));
  EXPECT_EQ(adapt_adjacency(Matrix::Ones(2, 2), out.weights), out.weights);
  EXPECT_THROW(adapt_adjacency(a, Matrix::Ones(4, 4)), std::invalid_argument);
}

TEST(Adaptation, StateStartsAtOriginalAndKeepsZeroPattern) {
  std::mt19937_64 rng(5);
  const Matrix a = support::random_adjacency(12, rng, 0.2);
  AttentionState state(init_attention_weights(16, 3), a);
  EXPECT_EQ(state.adapted_adjacency(), a);
  EXPECT_FALSE(state.last_weights());
  for (int trial = 0; trial < 100; ++trial) {
    state = epoch_update(ResidualVector(support::random_vector(12, rng, 5.0)), std::move(state), a);
    const Matrix& ad = state.adapted_adjacency();
    for (Eigen::Index i = 0; i < 12; ++i) {
      EXPECT_NEAR(state.last_weights()->row(i).sum(), 1.0, 1e-6);
      for (Eigen::Index j = 0; j < 12; ++j) {
        if (a(i, j) == 0.0) EXPECT_EQ(ad(i, j), 0.0);
        EXPECT_GE(ad(i, j), 0.0);
        EXPECT_LE(ad(i, j), a.maxCoeff());
      }
    }
  }
}

TEST(Adaptation, RepeatedUpdatesDoNotCompound) {
  std::mt19937_64 rng(6);
  const Matrix a = support::random_adjacency(8, rng);
  const ResidualVector r(support::random_vector(8, rng));
  const AttentionState start(init_attention_weights(16, 11), a);
  const auto once = epoch_update(r, start, a);
  auto many = start;
  for (int i = 0; i < 7; ++i) many = epoch_update(r, std::move(many), a);
  EXPECT_EQ(once.adapted_adjacency(), many.adapted_adjacency());
  EXPECT_EQ(*once.last_weights(), *many.last_weights());
}

TEST(Weights, SeededInitWithinBounds) {
  const auto a = init_attention_weights(16, 42);
  const auto b = init_attention_weights(16, 42);
  const auto c = init_attention_weights(16, 43);
  EXPECT_EQ(a.query, b.query);
  EXPECT_EQ(a.value, b.value);
  EXPECT_NE(a.key, c.key);
  EXPECT_EQ(a.parameter_count(), 48u);
  for (const Matrix* m : {&a.query, &a.key, &a.value}) {
    EXPECT_LE(m->cwiseAbs().maxCoeff(), 0.25);
  }
  EXPECT_THROW(init_attention_weights(0, 1), std::invalid_argument);
}

TEST(Backward, MatchesFiniteDifferences) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    const Eigen::Index n = 6;
    const ResidualVector r(support::random_vector(n, rng, 1.5));
    AttentionWeights w = init_attention_weights(4, 50 + trial);
    // Scalar probe L = sum(G .* H) with a random G.
    const Matrix g = Matrix::Random(n, n);
    auto loss = [&](const AttentionWeights& ww) {
      return attention_scores(r, ww).weights.cwiseProduct(g).sum();
    };
    const auto fwd = attention_scores(r, w);
    const auto grads = attention_backward(r, w, fwd, g);
    const double h = 1e-6;
    for (Matrix AttentionWeights::*member : {&AttentionWeights::query, &AttentionWeights::key}) {
      const Matrix& analytic = member == &AttentionWeights::query ? grads.query : grads.key;
      for (int c = 0; c < w.d_k(); ++c) {
        AttentionWeights up = w, down = w;
        (up.*member)(0, c) += h;
        (down.*member)(0, c) -= h;
        const double numeric = (loss(up) - loss(down)) / (2 * h);
        EXPECT_NEAR(analytic(0, c), numeric, 1e-7 * std::max(1.0, std::abs(numeric)));
      }
    }
    EXPECT_EQ(grads.value.cwiseAbs().maxCoeff(), 0.0);
  }
}

TEST(Backward, ConstantProbeGivesZeroGradient) {
  // d/dW of sum(H) vanishes because every row of H sums to one.
  std::mt19937_64 rng(8);
  const ResidualVector r(support::random_vector(7, rng, 2.0));
  const auto w = init_attention_weights(16, 5);
  const auto grads = attention_backward(r, w, attention_scores(r, w), Matrix::Ones(7, 7));
  EXPECT_LT(grads.query.cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_LT(grads.key.cwiseAbs().maxCoeff(), 1e-15);
}
