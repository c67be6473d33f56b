#include "equigrid/raa.hpp"

#include <cmath>
#include <random>

namespace equigrid::raa {

AttentionWeights init_attention_weights(int d_k, std::uint64_t seed) {
  if (d_k < 1) throw std::invalid_argument("d_k must be >= 1");
  const double bound = 1.0 / std::sqrt(static_cast<double>(d_k));
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-bound, bound);
  auto draw = [&] {
    Matrix m(1, d_k);
    for (int j = 0; j < d_k; ++j) m(0, j) = dist(rng);
    return m;
  };
  AttentionWeights w;
  w.query = draw();
  w.key = draw();
  w.value = draw();
  return w;
}

AttentionWeights constant_attention_weights(int d_k, double value) {
  if (d_k < 1) throw std::invalid_argument("d_k must be >= 1");
  const Matrix m = Matrix::Constant(1, d_k, value);
  return {m, m, m};
}

AttentionOutput attention_scores(const ResidualVector& r, const AttentionWeights& w) {
  const int d_k = w.d_k();
  if (d_k < 1) throw std::invalid_argument("d_k must be >= 1");
  if (!r.values().allFinite()) throw std::invalid_argument("non-finite residuals");
  const Matrix& x = r.values();  // |V| x 1
  AttentionOutput out;
  out.q = (x * w.query).array().tanh();
  out.k = (x * w.key).array().tanh();
  out.v = (x * w.value).array().tanh();
  out.scores = out.q * out.k.transpose() / std::sqrt(static_cast<double>(d_k));
  out.weights.resize(out.scores.rows(), out.scores.cols());
  for (Eigen::Index i = 0; i < out.scores.rows(); ++i) {
    const double m = out.scores.row(i).maxCoeff();
    const Eigen::RowVectorXd e = (out.scores.row(i).array() - m).exp();
    out.weights.row(i) = e / e.sum();
  }
  return out;
}

Matrix adapt_adjacency(const Matrix& a, const Matrix& h) {
  if (a.rows() != h.rows() || a.cols() != h.cols()) {
    throw std::invalid_argument("adjacency and attention shapes differ");
  }
  return a.cwiseProduct(h);
}

AttentionGradients attention_backward(const ResidualVector& r,
                                      const AttentionWeights& w,
                                      const AttentionOutput& fwd,
                                      const Matrix& grad_weights) {
  const double scale = 1.0 / std::sqrt(static_cast<double>(w.d_k()));
  const Matrix& h = fwd.weights;
  // softmax backward per row: dS = H * (dH - rowsum(dH * H))
  const Eigen::VectorXd dots = (grad_weights.cwiseProduct(h)).rowwise().sum();
  const Matrix grad_scores =
      h.cwiseProduct(grad_weights - dots.replicate(1, h.cols()));
  const Matrix grad_q = grad_scores * fwd.k * scale;
  const Matrix grad_k = grad_scores.transpose() * fwd.q * scale;
  const Matrix pre_q = grad_q.cwiseProduct((1.0 - fwd.q.array().square()).matrix());
  const Matrix pre_k = grad_k.cwiseProduct((1.0 - fwd.k.array().square()).matrix());
  const Matrix& x = r.values();
  return {x.transpose() * pre_q, x.transpose() * pre_k,
          Matrix::Zero(1, w.d_k())};
}

AttentionState::AttentionState(AttentionWeights weights,
                               const Matrix& original_adjacency)
    : weights_(std::move(weights)), adapted_(original_adjacency) {
  if (weights_.query.rows() != 1 || weights_.key.cols() != weights_.query.cols() ||
      weights_.value.cols() != weights_.query.cols()) {
    throw std::invalid_argument("attention weights must be 1 x d_k");
  }
  if (original_adjacency.rows() != original_adjacency.cols()) {
    throw std::invalid_argument("adjacency must be square");
  }
}

AttentionState epoch_update(const ResidualVector& r_epoch, AttentionState state,
                            const Matrix& a_original) {
  if (r_epoch.size() != a_original.rows()) {
    throw std::invalid_argument("residual length does not match adjacency");
  }
  AttentionOutput out = attention_scores(r_epoch, state.weights_);
  state.adapted_ = adapt_adjacency(a_original, out.weights);
  state.h_last_ = std::move(out.weights);
  state.s_last_ = std::move(out.scores);
  return state;
}

}  // namespace equigrid::raa
