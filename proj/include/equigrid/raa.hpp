#pragma once

#include <cstdint>
#include <optional>

#include "equigrid/core.hpp"

namespace equigrid::raa {

/// Bias-free 1 -> d_k projections of the per-region residual, stored as
/// 1 x d_k row vectors.
struct AttentionWeights {
  Matrix query;
  Matrix key;
  Matrix value;

  int d_k() const { return static_cast<int>(query.cols()); }
  std::size_t parameter_count() const {
    return static_cast<std::size_t>(query.size() + key.size() + value.size());
  }
};

inline constexpr int kDefaultAttentionWidth = 16;

/// Uniform in [-1/sqrt(d_k), 1/sqrt(d_k)].
AttentionWeights init_attention_weights(int d_k, std::uint64_t seed);

/// Every weight set to `value`.
AttentionWeights constant_attention_weights(int d_k, double value);

struct AttentionOutput {
  Matrix q;        // |V| x d_k, tanh(r w_q)
  Matrix k;        // |V| x d_k
  Matrix v;        // |V| x d_k, kept for export only
  Matrix scores;   // S = Q K^T / sqrt(d_k)
  Matrix weights;  // H = row-wise softmax(S)
};

AttentionOutput attention_scores(const ResidualVector& r, const AttentionWeights& w);

/// Hadamard product A (.) H.
Matrix adapt_adjacency(const Matrix& a, const Matrix& h);

struct AttentionGradients {
  Matrix query;
  Matrix key;
  Matrix value;
};

/// Gradient of a scalar L with respect to the projection weights, given
/// dL/dH. V does not feed H, so its gradient is zero.
AttentionGradients attention_backward(const ResidualVector& r,
                                      const AttentionWeights& w,
                                      const AttentionOutput& forward,
                                      const Matrix& grad_weights);

class AttentionState {
 public:
  AttentionState(AttentionWeights weights, const Matrix& original_adjacency);

  const AttentionWeights& weights() const { return weights_; }
  AttentionWeights& weights() { return weights_; }
  int d_k() const { return weights_.d_k(); }

  /// H from the most recent update; empty before the first one.
  const std::optional<Matrix>& last_weights() const { return h_last_; }
  /// Pre-softmax scores S from the most recent update.
  const std::optional<Matrix>& last_scores() const { return s_last_; }
  /// Adjacency consumed by the forecaster until the next update.
  const Matrix& adapted_adjacency() const { return adapted_; }

 private:
  friend AttentionState epoch_update(const ResidualVector&, AttentionState,
                                     const Matrix&);

  AttentionWeights weights_;
  std::optional<Matrix> h_last_;
  std::optional<Matrix> s_last_;
  Matrix adapted_;
};

/// Recomputes attention from the epoch-mean residual and sets the adapted
/// adjacency to A_original (.) H. Always starts from the original matrix, so
/// repeated updates with the same inputs do not compound.
AttentionState epoch_update(const ResidualVector& r_epoch, AttentionState state,
                            const Matrix& a_original);

}  // namespace equigrid::raa
