#include "equigrid/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <map>
#include <mutex>
#include <sstream>
#include <random>
#include <thread>

#include "equigrid/data.hpp"

namespace equigrid::trainer {

std::string_view to_string(OptimizerKind kind) {
  return kind == OptimizerKind::kAdam ? "adam" : "sgd";
}

OptimizerKind optimizer_from_string(std::string_view name) {
  if (name == "sgd") return OptimizerKind::kSgd;
  if (name == "adam") return OptimizerKind::kAdam;
  throw std::invalid_argument("unknown optimizer '" + std::string(name) +
                              "' (valid: sgd, adam)");
}

void TrainConfig::validate() const {
  if (epochs < 1) throw std::invalid_argument("epochs must be positive");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be positive");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw std::invalid_argument("learning_rate must be positive");
  }
  if (early_stop_patience < 0) {
    throw std::invalid_argument("early_stop_patience must be >= 0");
  }
  if (attention_width < 1) throw std::invalid_argument("attention_width must be >= 1");
}

Normalizer Normalizer::fit(const Matrix& values, Eigen::Index end_step) {
  if (end_step < 1 || end_step > values.cols()) {
    throw std::invalid_argument("normalizer range out of bounds");
  }
  const Matrix span = values.leftCols(end_step);
  Normalizer out;
  out.mean = span.rowwise().mean();
  out.sd.resize(values.rows());
  for (Eigen::Index i = 0; i < values.rows(); ++i) {
    const double var = (span.row(i).array() - out.mean[i]).square().mean();
    const double sd = std::sqrt(var);
    out.sd[i] = sd < 1e-8 ? 1.0 : sd;
  }
  return out;
}

Matrix Normalizer::normalize(const Matrix& x) const {
  return ((x.colwise() - mean).array().colwise() / sd.array()).matrix();
}

namespace {

class Optimizer {
 public:
  Optimizer(OptimizerKind kind, double lr) : kind_(kind), lr_(lr) {}

  void step(const std::vector<model::ParameterRef>& params) {
    if (kind_ == OptimizerKind::kSgd) {
      for (const auto& p : params) *p.value -= lr_ * *p.grad;
      return;
    }
    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    ++t_;
    const double c1 = 1.0 - std::pow(b1, t_);
    const double c2 = 1.0 - std::pow(b2, t_);
    for (const auto& p : params) {
      auto [it, fresh] = moments_.try_emplace(p.value);
      if (fresh) {
        it->second.m = Matrix::Zero(p.value->rows(), p.value->cols());
        it->second.v = it->second.m;
      }
      auto& mo = it->second;
      mo.m = b1 * mo.m + (1.0 - b1) * *p.grad;
      mo.v = b2 * mo.v + (1.0 - b2) * p.grad->cwiseAbs2();
      *p.value -= (lr_ * (mo.m / c1).array() / ((mo.v / c2).array().sqrt() + eps)).matrix();
    }
  }

 private:
  struct Moments {
    Matrix m, v;
  };
  OptimizerKind kind_;
  double lr_;
  int t_ = 0;
  std::map<const Matrix*, Moments> moments_;
};

struct Prepared {
  std::vector<data::Window> windows;
  data::Split split;
  Normalizer norm;
  std::vector<Matrix> inputs;  // normalized window inputs
};

Prepared prepare(const DemandTensor& demand, const ForecastWindow& window) {
  Prepared p;
  p.windows = data::make_windows(demand, window);
  p.split = data::chronological_split(p.windows.size());
  const auto& last_train = p.windows[p.split.train_end - 1];
  p.norm = Normalizer::fit(demand.values(),
                           last_train.start + window.lookback + window.horizon);
  p.inputs.reserve(p.windows.size());
  for (const auto& w : p.windows) p.inputs.push_back(p.norm.normalize(w.input));
  return p;
}

// Runs the forecaster over `indices` and returns predictions and targets in
// original units, regions as rows and (window, step) as columns.
struct BatchOutput {
  Matrix y_hat;
  Matrix y;
};

Matrix stack_inputs(const Prepared& p, const std::vector<std::size_t>& idx,
                    Eigen::Index n) {
  const Eigen::Index lookback = p.inputs.front().cols();
  Matrix x(static_cast<Eigen::Index>(idx.size()) * n, lookback);
  for (std::size_t b = 0; b < idx.size(); ++b) {
    x.middleRows(static_cast<Eigen::Index>(b) * n, n) = p.inputs[idx[b]];
  }
  return x;
}

BatchOutput unstack(const Prepared& p, const std::vector<std::size_t>& idx,
                    const Matrix& out, Eigen::Index n) {
  const Eigen::Index k = out.cols();
  BatchOutput r;
  r.y_hat.resize(n, static_cast<Eigen::Index>(idx.size()) * k);
  r.y.resize(n, r.y_hat.cols());
  for (std::size_t b = 0; b < idx.size(); ++b) {
    const auto col = static_cast<Eigen::Index>(b) * k;
    Matrix block = out.middleRows(static_cast<Eigen::Index>(b) * n, n);
    block = (block.array().colwise() * p.norm.sd.array()).colwise() + p.norm.mean.array();
    r.y_hat.middleCols(col, k) = block;
    r.y.middleCols(col, k) = p.windows[idx[b]].target;
  }
  return r;
}

BatchOutput predict(const model::Forecaster& f, const Prepared& p,
                    const std::vector<std::size_t>& idx, const Matrix& propagation,
                    int batch_size) {
  const Eigen::Index n = propagation.rows();
  const Eigen::Index k = f.config().horizon;
  BatchOutput all;
  all.y_hat.resize(n, static_cast<Eigen::Index>(idx.size()) * k);
  all.y.resize(n, all.y_hat.cols());
  for (std::size_t s = 0; s < idx.size(); s += static_cast<std::size_t>(batch_size)) {
    const std::vector<std::size_t> chunk(
        idx.begin() + static_cast<std::ptrdiff_t>(s),
        idx.begin() + static_cast<std::ptrdiff_t>(
                          std::min(idx.size(), s + static_cast<std::size_t>(batch_size))));
    const Matrix out = f.forward_batch(stack_inputs(p, chunk, n), propagation, nullptr);
    auto part = unstack(p, chunk, out, n);
    const auto col = static_cast<Eigen::Index>(s) * k;
    all.y_hat.middleCols(col, part.y_hat.cols()) = part.y_hat;
    all.y.middleCols(col, part.y.cols()) = part.y;
  }
  return all;
}

std::vector<std::size_t> range(std::size_t begin, std::size_t end) {
  std::vector<std::size_t> v(end - begin);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = begin + i;
  return v;
}

void check_finite(const loss::LossTerms& t, int epoch) {
  auto fail = [&](const char* term) {
    throw TrainingDiverged("training diverged at epoch " + std::to_string(epoch) +
                           ": non-finite " + term + " term");
  };
  if (!std::isfinite(t.prediction)) fail("prediction (MSE)");
  if (!std::isfinite(t.spatial)) fail("spatial disparity");
  if (!std::isfinite(t.regularizer)) fail("regularizer");
  if (!std::isfinite(t.total)) fail("total");
}

}  // namespace

RunRecord train(const RegionGraph& graph, const DemandTensor& demand,
                const DemographicTable* demographics, const ForecastWindow& window,
                const TrainConfig& config, const loss::LossConfig& loss_config,
                const TrainObserver* observer) {
  const auto t_start = std::chrono::steady_clock::now();
  config.validate();
  loss_config.validate();
  window.validate();
  if (demand.regions() != static_cast<Eigen::Index>(graph.size())) {
    throw std::invalid_argument("demand rows do not match the region graph");
  }
  if (demographics) demographics->check_aligned(graph);
  if (loss_config.dd_kind == loss::RegularizerKind::kDemographic && !demographics) {
    throw std::invalid_argument("dd_kind=demographic requires demographics");
  }

  const bool raa_on = loss::variant_config(config.variant).raa_enabled;
  const Matrix& a_original = graph.adjacency();
  const Eigen::Index n = static_cast<Eigen::Index>(graph.size());
  const Prepared prep = prepare(demand, window);

  model::ForecasterConfig fc;
  fc.hidden_channels = config.hidden_channels;
  fc.temporal_kernel = config.temporal_kernel;
  fc.lookback = window.lookback;
  fc.horizon = window.horizon;
  fc.seed = config.seed;
  model::Forecaster forecaster(fc);
  if (raa_on) {
    forecaster.attach_attention(raa::AttentionState(
        raa::init_attention_weights(config.attention_width,
                                    stream_seed(config.seed, streams::kAttentionInit)),
        a_original));
  }

  Optimizer optimizer(config.optimizer, config.learning_rate);
  std::mt19937_64 shuffle_rng(stream_seed(config.seed, streams::kBatchShuffle));
  const auto val_idx = range(prep.split.train_end, prep.split.val_end);
  const auto test_idx = range(prep.split.val_end, prep.split.total);
  std::vector<std::size_t> order = range(0, prep.split.train_end);

  RunRecord record;
  record.variant = config.variant;
  record.seed = config.seed;

  double best_val = std::numeric_limits<double>::infinity();
  std::vector<Matrix> best_params;
  Matrix best_adjacency = a_original;
  int since_best = 0;

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const Matrix a_current =
        raa_on ? forecaster.attention().adapted_adjacency() : a_original;
    const Matrix propagation = model::propagation_matrix(a_current);
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    Vector residual_sum = Vector::Zero(n);
    double residual_count = 0.0;
    loss::LossTerms epoch_terms;
    double window_count = 0.0;

    for (std::size_t s = 0; s < order.size(); s += static_cast<std::size_t>(config.batch_size)) {
      const std::vector<std::size_t> batch(
          order.begin() + static_cast<std::ptrdiff_t>(s),
          order.begin() + static_cast<std::ptrdiff_t>(std::min(
                              order.size(), s + static_cast<std::size_t>(config.batch_size))));
      if (observer && observer->on_batch) observer->on_batch(epoch, batch, a_current);

      model::Forecaster::Tape tape;
      const Matrix out =
          forecaster.forward_batch(stack_inputs(prep, batch, n), propagation, &tape);
      const BatchOutput bo = unstack(prep, batch, out, n);
      const loss::LossResult lr =
          loss::joint_loss(bo.y_hat, bo.y, a_original, loss_config, demographics);
      check_finite(lr.terms, epoch);

      const double w = static_cast<double>(batch.size());
      epoch_terms.prediction += w * lr.terms.prediction;
      epoch_terms.spatial += w * lr.terms.spatial;
      epoch_terms.regularizer += w * lr.terms.regularizer;
      epoch_terms.total += w * lr.terms.total;
      window_count += w;
      residual_sum += (bo.y - bo.y_hat).rowwise().sum();
      residual_count += static_cast<double>(bo.y.cols());

      // back to the normalized output layout: row b*n+i, column h
      const Eigen::Index k = window.horizon;
      Matrix grad_out(out.rows(), out.cols());
      for (std::size_t b = 0; b < batch.size(); ++b) {
        grad_out.middleRows(static_cast<Eigen::Index>(b) * n, n) =
            (lr.grad.middleCols(static_cast<Eigen::Index>(b) * k, k).array().colwise() *
             prep.norm.sd.array())
                .matrix();
      }
      forecaster.zero_grad();
      forecaster.backward(tape, grad_out);
      auto params = forecaster.trainable_parameters();
      optimizer.step(params);
      for (const auto& p : params) {
        if (!p.value->allFinite()) {
          throw TrainingDiverged("training diverged at epoch " + std::to_string(epoch) +
                                 ": non-finite parameter " + p.name);
        }
      }
    }

    EpochLog log;
    log.epoch = epoch;
    log.train.prediction = epoch_terms.prediction / window_count;
    log.train.spatial = epoch_terms.spatial / window_count;
    log.train.regularizer = epoch_terms.regularizer / window_count;
    log.train.total = log.train.prediction + log.train.spatial + log.train.regularizer;
    log.val_mse = std::numeric_limits<double>::quiet_NaN();
    if (!val_idx.empty()) {
      const auto vo = predict(forecaster, prep, val_idx, propagation, config.batch_size);
      log.val_mse = (vo.y_hat - vo.y).squaredNorm() / static_cast<double>(vo.y.size());
      if (!std::isfinite(log.val_mse)) {
        throw TrainingDiverged("training diverged at epoch " + std::to_string(epoch) +
                               ": non-finite validation MSE");
      }
    }
    record.epochs.push_back(log);

    const ResidualVector r_epoch(residual_sum / residual_count);
    if (raa_on) {
      auto& state = forecaster.attention();
      state = raa::epoch_update(r_epoch, std::move(state), a_original);
      // The projections join the graph of this step's loss only through a
      // zero-weighted consistency term on H, so their gradient is exactly 0.
      constexpr double kConsistencyWeight = 0.0;
      const auto fwd = raa::attention_scores(r_epoch, state.weights());
      const Matrix grad_h = Matrix::Constant(n, n, kConsistencyWeight);
      forecaster.attention_grad() =
          raa::attention_backward(r_epoch, state.weights(), fwd, grad_h);
      auto all = forecaster.trainable_parameters();
      std::vector<model::ParameterRef> attention_params(all.end() - 3, all.end());
      optimizer.step(attention_params);
    }
    if (observer && observer->on_epoch_end) observer->on_epoch_end(epoch, r_epoch);

    const double score = val_idx.empty() ? log.train.prediction : log.val_mse;
    if (score < best_val) {
      best_val = score;
      record.best_epoch = epoch;
      best_params.clear();
      for (const auto& p : forecaster.trainable_parameters()) best_params.push_back(*p.value);
      best_adjacency = a_current;
      since_best = 0;
    } else if (config.early_stop_patience > 0 &&
               ++since_best >= config.early_stop_patience) {
      break;
    }
  }

  {
    auto params = forecaster.trainable_parameters();
    for (std::size_t i = 0; i < params.size(); ++i) *params[i].value = best_params[i];
  }
  record.adjacency_evaluated = best_adjacency;
  const auto to = predict(forecaster, prep, test_idx, model::propagation_matrix(best_adjacency),
                          config.batch_size);
  record.test_metrics = metrics::evaluate_all(to.y_hat, to.y, a_original, demographics);
  record.test_residual = metrics::mean_residual(to.y_hat, to.y);
  if (raa_on) {
    const auto& state = forecaster.attention();
    record.attention_weights = state.last_weights();
    record.attention_scores = state.last_scores();
    record.adjacency_adapted = state.adapted_adjacency();
  }
  std::ostringstream ckpt;
  forecaster.save(ckpt);
  record.checkpoint = ckpt.str();
  record.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return record;
}

RunRecord train(const RegionGraph& graph, const DemandTensor& demand,
                const DemographicTable* demographics, const ForecastWindow& window,
                const TrainConfig& config) {
  return train(graph, demand, demographics, window, config,
               loss::variant_config(config.variant).loss);
}

std::optional<double> median(std::vector<double> values) {
  if (values.empty()) return std::nullopt;
  std::sort(values.begin(), values.end());
  const std::size_t mid = values.size() / 2;
  if (values.size() % 2 == 1) return values[mid];
  return 0.5 * (values[mid - 1] + values[mid]);
}

std::vector<AblationRow> summarize(const std::vector<AblationCell>& cells) {
  std::vector<AblationRow> rows;
  for (auto v : loss::kAllVariants) {
    AblationRow row;
    row.variant = v;
    std::vector<double> mae, smape, gei, sdi, moran;
    bool any = false;
    for (const auto& c : cells) {
      if (c.variant != v) continue;
      any = true;
      if (!c.record) {
        ++row.runs_failed;
        continue;
      }
      ++row.runs_ok;
      const auto& m = c.record->test_metrics;
      mae.push_back(m.mae);
      smape.push_back(m.smape);
      gei.push_back(m.gei);
      if (m.sdi) sdi.push_back(*m.sdi);
      if (m.morans_i) moran.push_back(*m.morans_i);
    }
    if (!any) continue;
    row.mae = median(mae);
    row.smape = median(smape);
    row.gei = median(gei);
    row.sdi = median(sdi);
    row.morans_i = median(moran);
    rows.push_back(row);
  }
  return rows;
}

AblationResult run_ablation(const RegionGraph& graph, const DemandTensor& demand,
                            const DemographicTable* demographics,
                            const ForecastWindow& window, const TrainConfig& config,
                            const std::vector<std::uint64_t>& seeds, int jobs,
                            RunFunction run) {
  if (seeds.empty()) throw std::invalid_argument("ablation needs at least one seed");
  if (!run) {
    run = [&](const TrainConfig& c) {
      return train(graph, demand, demographics, window, c);
    };
  }
  AblationResult result;
  for (auto v : loss::kAllVariants) {
    for (auto s : seeds) {
      auto& cell = result.cells.emplace_back();
      cell.variant = v;
      cell.seed = s;
    }
  }

  auto run_cell = [&](AblationCell& cell) {
    TrainConfig c = config;
    c.variant = cell.variant;
    c.seed = cell.seed;
    try {
      cell.record = run(c);
    } catch (const std::exception& e) {
      cell.error = e.what();
    }
  };

  const int workers = std::max(1, std::min<int>(jobs, static_cast<int>(result.cells.size())));
  if (workers == 1) {
    for (auto& cell : result.cells) run_cell(cell);
  } else {
    std::mutex mu;
    std::size_t next = 0;
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        while (true) {
          std::size_t i = 0;
          {
            std::lock_guard lock(mu);
            if (next >= result.cells.size()) return;
            i = next++;
          }
          run_cell(result.cells[i]);
        }
      });
    }
    for (auto& t : pool) t.join();
  }
  result.rows = summarize(result.cells);
  return result;
}

}  // namespace equigrid::trainer
