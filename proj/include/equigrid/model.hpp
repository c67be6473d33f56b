#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "equigrid/core.hpp"
#include "equigrid/raa.hpp"

namespace equigrid::model {

struct ForecasterConfig {
  int hidden_channels = 16;
  int temporal_kernel = 3;
  int lookback = 12;
  int horizon = 3;
  std::uint64_t seed = 0;

  /// Steps left after both temporal convolutions.
  int output_steps() const { return lookback - 2 * (temporal_kernel - 1); }
  void validate() const;
};

/// A trainable tensor and its gradient accumulator.
struct ParameterRef {
  std::string name;
  Matrix* value = nullptr;
  Matrix* grad = nullptr;
};

/// row_normalize(A + I): the propagation matrix of the graph convolution.
Matrix propagation_matrix(const Matrix& a_effective);

/// Minimal STGCN-style forecaster:
///   gated temporal conv (1 -> C) -> graph conv + ReLU (C -> C)
///   -> gated temporal conv (C -> C) -> linear head over the remaining steps.
/// Each region has a single input feature. Batches stack windows row-wise:
/// row b * |V| + i holds region i of window b.
class Forecaster {
 public:
  explicit Forecaster(ForecasterConfig config);

  const ForecasterConfig& config() const { return config_; }

  /// Prediction for one |V| x lookback window; returns |V| x horizon.
  Matrix forward(const Matrix& window, const Matrix& a_effective) const;

  /// Activations cached by forward_batch for backward.
  struct Tape {
    Eigen::Index regions = 0;
    Eigen::Index batch = 0;
    Matrix input;
    std::vector<Matrix> gate1_lin, gate1_sig, hidden1;
    std::vector<Matrix> mixed, pre_relu, graph_out;
    std::vector<Matrix> gate2_lin, gate2_sig, stacked2;
    Matrix head_in;
    Matrix propagation;
  };

  /// `inputs` is (B |V|) x lookback; `propagation` is |V| x |V|. Returns
  /// (B |V|) x horizon. Fills `tape` when non-null.
  Matrix forward_batch(const Matrix& inputs, const Matrix& propagation,
                       Tape* tape) const;

  /// Accumulates parameter gradients of a scalar whose gradient with respect
  /// to the forward_batch output is `grad_out`.
  void backward(const Tape& tape, const Matrix& grad_out);

  void zero_grad();

  /// Adds the residual-aware attention projections to the trainable set.
  void attach_attention(raa::AttentionState state);
  bool has_attention() const { return attention_.has_value(); }
  raa::AttentionState& attention() { return *attention_; }
  const raa::AttentionState& attention() const { return *attention_; }
  raa::AttentionGradients& attention_grad() { return attention_grad_; }

  std::vector<ParameterRef> trainable_parameters();
  std::size_t parameter_count() const;

  /// Text checkpoint: config header followed by every parameter.
  void save(std::ostream& out) const;
  static Forecaster load(std::istream& in);

 private:
  struct Params {
    Matrix t1_w, t1_b;  // taps x 2C, 1 x 2C
    Matrix g_w, g_b;    // C x C, 1 x C
    Matrix t2_w, t2_b;  // (taps C) x 2C, 1 x 2C
    Matrix out_w, out_b;  // (steps C) x horizon, 1 x horizon
  };

  static std::vector<std::pair<std::string, Matrix Params::*>> members();

  ForecasterConfig config_;
  Params params_;
  Params grads_;
  std::optional<raa::AttentionState> attention_;
  raa::AttentionGradients attention_grad_;
};

}  // namespace equigrid::model
