#include "equigrid/model.hpp"

#include <cmath>
#include <istream>
#include <ostream>
#include <random>
#include <sstream>

#include "text.hpp"

namespace equigrid::model {

namespace {

Matrix sigmoid(const Matrix& x) {
  return (1.0 / (1.0 + (-x.array()).exp())).matrix();
}

Matrix xavier(Eigen::Index rows, Eigen::Index cols, double fan_in, double fan_out,
              std::mt19937_64& rng) {
  const double bound = std::sqrt(6.0 / (fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Matrix m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = dist(rng);
  }
  return m;
}

// Applies `p` to each |V|-row block of `x`. With rows ordered window-major, the
// column-major storage of x is exactly a |V| x (batch * channels) matrix, so
// one product covers every block.
Matrix apply_blockwise(const Matrix& p, const Matrix& x, Eigen::Index regions) {
  Matrix out(x.rows(), x.cols());
  const Eigen::Index wide = x.size() / regions;
  Eigen::Map<Matrix>(out.data(), regions, wide).noalias() =
      p * Eigen::Map<const Matrix>(x.data(), regions, wide);
  return out;
}

}  // namespace

void ForecasterConfig::validate() const {
  if (hidden_channels < 1) throw std::invalid_argument("hidden_channels must be >= 1");
  if (temporal_kernel < 1) throw std::invalid_argument("temporal_kernel must be >= 1");
  if (horizon < 1) throw std::invalid_argument("horizon must be >= 1");
  if (lookback <= 2 * (temporal_kernel - 1)) {
    throw std::invalid_argument(
        "lookback must exceed 2 * (temporal_kernel - 1) so both temporal "
        "convolutions leave at least one step");
  }
}

Matrix propagation_matrix(const Matrix& a_effective) {
  if (a_effective.rows() != a_effective.cols()) {
    throw std::invalid_argument("adjacency must be square");
  }
  if ((a_effective.array() < 0.0).any() || !a_effective.allFinite()) {
    throw std::invalid_argument("adjacency must be finite and nonnegative");
  }
  return row_normalize(a_effective +
                       Matrix::Identity(a_effective.rows(), a_effective.cols()));
}

std::vector<std::pair<std::string, Matrix Forecaster::Params::*>> Forecaster::members() {
  return {{"temporal1.weight", &Params::t1_w}, {"temporal1.bias", &Params::t1_b},
          {"graph.weight", &Params::g_w},      {"graph.bias", &Params::g_b},
          {"temporal2.weight", &Params::t2_w}, {"temporal2.bias", &Params::t2_b},
          {"head.weight", &Params::out_w},     {"head.bias", &Params::out_b}};
}

Forecaster::Forecaster(ForecasterConfig config) : config_(config) {
  config_.validate();
  const int c = config_.hidden_channels;
  const int taps = config_.temporal_kernel;
  const int steps = config_.output_steps();
  const int k = config_.horizon;
  std::mt19937_64 rng(stream_seed(config_.seed, streams::kModelInit));
  params_.t1_w = xavier(taps, 2 * c, taps, c, rng);
  params_.t1_b = Matrix::Zero(1, 2 * c);
  params_.g_w = xavier(c, c, c, c, rng);
  params_.g_b = Matrix::Zero(1, c);
  params_.t2_w = xavier(taps * c, 2 * c, taps * c, c, rng);
  params_.t2_b = Matrix::Zero(1, 2 * c);
  params_.out_w = xavier(steps * c, k, steps * c, k, rng);
  params_.out_b = Matrix::Zero(1, k);
  zero_grad();
}

Matrix Forecaster::forward(const Matrix& window, const Matrix& a_effective) const {
  if (window.cols() != config_.lookback) {
    throw std::invalid_argument("window has " + std::to_string(window.cols()) +
                                " steps, expected " + std::to_string(config_.lookback));
  }
  if (a_effective.rows() != window.rows()) {
    throw std::invalid_argument("adjacency side does not match region count");
  }
  return forward_batch(window, propagation_matrix(a_effective), nullptr);
}

Matrix Forecaster::forward_batch(const Matrix& inputs, const Matrix& propagation,
                                 Tape* tape) const {
  const Eigen::Index n = propagation.rows();
  if (propagation.cols() != n || n == 0 || inputs.rows() % n != 0) {
    throw std::invalid_argument("batch rows must be a multiple of the region count");
  }
  if (inputs.cols() != config_.lookback) {
    throw std::invalid_argument("batch input has the wrong number of steps");
  }
  const int c = config_.hidden_channels;
  const int taps = config_.temporal_kernel;
  const int t1 = config_.lookback - taps + 1;
  const int t2 = t1 - taps + 1;
  const Eigen::Index rows = inputs.rows();

  Tape local;
  Tape& tp = tape ? *tape : local;
  tp.regions = n;
  tp.batch = rows / n;
  tp.input = inputs;
  tp.propagation = propagation;
  tp.gate1_lin.assign(t1, {});
  tp.gate1_sig.assign(t1, {});
  tp.hidden1.assign(t1, {});
  tp.mixed.assign(t1, {});
  tp.pre_relu.assign(t1, {});
  tp.graph_out.assign(t1, {});
  tp.gate2_lin.assign(t2, {});
  tp.gate2_sig.assign(t2, {});
  tp.stacked2.assign(t2, {});

  for (int t = 0; t < t1; ++t) {
    Matrix pre = inputs.middleCols(t, taps) * params_.t1_w;
    pre.rowwise() += params_.t1_b.row(0);
    tp.gate1_lin[t] = pre.leftCols(c);
    tp.gate1_sig[t] = sigmoid(pre.rightCols(c));
    tp.hidden1[t] = tp.gate1_lin[t].cwiseProduct(tp.gate1_sig[t]);

    tp.mixed[t] = apply_blockwise(propagation, tp.hidden1[t], n);
    Matrix u = tp.mixed[t] * params_.g_w;
    u.rowwise() += params_.g_b.row(0);
    tp.pre_relu[t] = u;
    tp.graph_out[t] = u.cwiseMax(0.0);
  }

  tp.head_in.resize(rows, static_cast<Eigen::Index>(t2) * c);
  for (int t = 0; t < t2; ++t) {
    Matrix stacked(rows, static_cast<Eigen::Index>(taps) * c);
    for (int tau = 0; tau < taps; ++tau) {
      stacked.middleCols(static_cast<Eigen::Index>(tau) * c, c) = tp.graph_out[t + tau];
    }
    Matrix pre = stacked * params_.t2_w;
    pre.rowwise() += params_.t2_b.row(0);
    tp.gate2_lin[t] = pre.leftCols(c);
    tp.gate2_sig[t] = sigmoid(pre.rightCols(c));
    tp.head_in.middleCols(static_cast<Eigen::Index>(t) * c, c) =
        tp.gate2_lin[t].cwiseProduct(tp.gate2_sig[t]);
    tp.stacked2[t] = std::move(stacked);
  }

  Matrix out = tp.head_in * params_.out_w;
  out.rowwise() += params_.out_b.row(0);
  return out;
}

void Forecaster::backward(const Tape& tp, const Matrix& grad_out) {
  const int c = config_.hidden_channels;
  const int taps = config_.temporal_kernel;
  const int t1 = config_.lookback - taps + 1;
  const int t2 = t1 - taps + 1;
  if (grad_out.rows() != tp.head_in.rows() || grad_out.cols() != config_.horizon) {
    throw std::invalid_argument("gradient shape does not match forward output");
  }

  grads_.out_w.noalias() += tp.head_in.transpose() * grad_out;
  grads_.out_b += grad_out.colwise().sum();
  const Matrix grad_head = grad_out * params_.out_w.transpose();

  std::vector<Matrix> grad_graph(t1, Matrix::Zero(grad_out.rows(), c));
  for (int t = 0; t < t2; ++t) {
    const Matrix g = grad_head.middleCols(static_cast<Eigen::Index>(t) * c, c);
    const Matrix& sig = tp.gate2_sig[t];
    Matrix grad_pre(g.rows(), 2 * c);
    grad_pre.leftCols(c) = g.cwiseProduct(sig);
    grad_pre.rightCols(c) = g.cwiseProduct(tp.gate2_lin[t])
                                .cwiseProduct(sig)
                                .cwiseProduct((1.0 - sig.array()).matrix());
    grads_.t2_w.noalias() += tp.stacked2[t].transpose() * grad_pre;
    grads_.t2_b += grad_pre.colwise().sum();
    const Matrix grad_stacked = grad_pre * params_.t2_w.transpose();
    for (int tau = 0; tau < taps; ++tau) {
      grad_graph[t + tau] += grad_stacked.middleCols(static_cast<Eigen::Index>(tau) * c, c);
    }
  }

  const Matrix prop_t = tp.propagation.transpose();
  for (int t = 0; t < t1; ++t) {
    const Matrix grad_u =
        grad_graph[t].cwiseProduct((tp.pre_relu[t].array() > 0.0).cast<double>().matrix());
    grads_.g_w.noalias() += tp.mixed[t].transpose() * grad_u;
    grads_.g_b += grad_u.colwise().sum();
    const Matrix grad_mixed = grad_u * params_.g_w.transpose();
    const Matrix grad_hidden = apply_blockwise(prop_t, grad_mixed, tp.regions);
    const Matrix& sig = tp.gate1_sig[t];
    Matrix grad_pre(grad_hidden.rows(), 2 * c);
    grad_pre.leftCols(c) = grad_hidden.cwiseProduct(sig);
    grad_pre.rightCols(c) = grad_hidden.cwiseProduct(tp.gate1_lin[t])
                                .cwiseProduct(sig)
                                .cwiseProduct((1.0 - sig.array()).matrix());
    grads_.t1_w.noalias() += tp.input.middleCols(t, taps).transpose() * grad_pre;
    grads_.t1_b += grad_pre.colwise().sum();
  }
}

void Forecaster::zero_grad() {
  for (const auto& [name, member] : members()) {
    grads_.*member = Matrix::Zero((params_.*member).rows(), (params_.*member).cols());
  }
  if (attention_) {
    const int d_k = attention_->d_k();
    attention_grad_ = {Matrix::Zero(1, d_k), Matrix::Zero(1, d_k), Matrix::Zero(1, d_k)};
  }
}

void Forecaster::attach_attention(raa::AttentionState state) {
  attention_ = std::move(state);
  zero_grad();
}

std::vector<ParameterRef> Forecaster::trainable_parameters() {
  std::vector<ParameterRef> out;
  for (const auto& [name, member] : members()) {
    out.push_back({name, &(params_.*member), &(grads_.*member)});
  }
  if (attention_) {
    auto& w = attention_->weights();
    out.push_back({"attention.query", &w.query, &attention_grad_.query});
    out.push_back({"attention.key", &w.key, &attention_grad_.key});
    out.push_back({"attention.value", &w.value, &attention_grad_.value});
  }
  return out;
}

std::size_t Forecaster::parameter_count() const {
  std::size_t total = 0;
  for (const auto& [name, member] : members()) {
    total += static_cast<std::size_t>((params_.*member).size());
  }
  if (attention_) total += attention_->weights().parameter_count();
  return total;
}

namespace {

void write_matrix(std::ostream& out, const std::string& name, const Matrix& m) {
  out << "param " << name << ' ' << m.rows() << ' ' << m.cols() << '\n';
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j) out << ' ';
      out << text::exact(m(i, j));
    }
    out << '\n';
  }
}

Matrix read_matrix(std::istream& in, const std::string& expected_name) {
  std::string tag, name;
  Eigen::Index rows = 0, cols = 0;
  if (!(in >> tag >> name >> rows >> cols) || tag != "param" || name != expected_name) {
    throw std::runtime_error("checkpoint: expected parameter " + expected_name);
  }
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) {
      std::string token;
      if (!(in >> token)) throw std::runtime_error("checkpoint: truncated " + name);
      const auto v = text::parse_double(token);
      if (!v) throw std::runtime_error("checkpoint: bad value in " + name);
      m(i, j) = *v;
    }
  }
  return m;
}

}  // namespace

void Forecaster::save(std::ostream& out) const {
  out << "equigrid-checkpoint 1\n";
  out << "hidden_channels " << config_.hidden_channels << '\n';
  out << "temporal_kernel " << config_.temporal_kernel << '\n';
  out << "lookback " << config_.lookback << '\n';
  out << "horizon " << config_.horizon << '\n';
  out << "seed " << config_.seed << '\n';
  out << "attention_d_k " << (attention_ ? attention_->d_k() : 0) << '\n';
  for (const auto& [name, member] : members()) write_matrix(out, name, params_.*member);
  if (attention_) {
    const auto& w = attention_->weights();
    write_matrix(out, "attention.query", w.query);
    write_matrix(out, "attention.key", w.key);
    write_matrix(out, "attention.value", w.value);
  }
}

Forecaster Forecaster::load(std::istream& in) {
  std::string magic;
  int version = 0;
  if (!(in >> magic >> version) || magic != "equigrid-checkpoint" || version != 1) {
    throw std::runtime_error("checkpoint: unrecognized header");
  }
  auto read_field = [&](const char* key) {
    std::string k;
    long long v = 0;
    if (!(in >> k >> v) || k != key) {
      throw std::runtime_error(std::string("checkpoint: expected ") + key);
    }
    return v;
  };
  ForecasterConfig cfg;
  cfg.hidden_channels = static_cast<int>(read_field("hidden_channels"));
  cfg.temporal_kernel = static_cast<int>(read_field("temporal_kernel"));
  cfg.lookback = static_cast<int>(read_field("lookback"));
  cfg.horizon = static_cast<int>(read_field("horizon"));
  cfg.seed = static_cast<std::uint64_t>(read_field("seed"));
  const auto d_k = read_field("attention_d_k");
  Forecaster f(cfg);
  for (const auto& [name, member] : members()) {
    Matrix m = read_matrix(in, name);
    if (m.rows() != (f.params_.*member).rows() || m.cols() != (f.params_.*member).cols()) {
      throw std::runtime_error("checkpoint: shape mismatch for " + name);
    }
    f.params_.*member = std::move(m);
  }
  if (d_k > 0) {
    raa::AttentionWeights w;
    w.query = read_matrix(in, "attention.query");
    w.key = read_matrix(in, "attention.key");
    w.value = read_matrix(in, "attention.value");
    // adjacency is not part of the checkpoint; callers re-attach with theirs
    f.attention_.emplace(std::move(w), Matrix::Zero(0, 0));
    f.zero_grad();
  }
  return f;
}

}  // namespace equigrid::model
