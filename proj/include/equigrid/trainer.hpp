#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "equigrid/core.hpp"
#include "equigrid/loss.hpp"
#include "equigrid/metrics.hpp"
#include "equigrid/model.hpp"

namespace equigrid::trainer {

enum class OptimizerKind { kSgd, kAdam };

std::string_view to_string(OptimizerKind kind);
OptimizerKind optimizer_from_string(std::string_view name);

struct TrainConfig {
  int epochs = 50;
  int batch_size = 32;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
  loss::Variant variant = loss::Variant::kOriginal;
  /// Epochs without validation-MSE improvement before stopping; 0 disables.
  int early_stop_patience = 10;
  OptimizerKind optimizer = OptimizerKind::kSgd;
  int attention_width = raa::kDefaultAttentionWidth;
  int hidden_channels = 16;
  int temporal_kernel = 3;

  void validate() const;
};

struct EpochLog {
  int epoch = 0;
  loss::LossTerms train;  // window-weighted mean over the epoch's batches
  double val_mse = 0.0;   // NaN when there is no validation split
};

struct RunRecord {
  loss::Variant variant = loss::Variant::kOriginal;
  std::uint64_t seed = 0;
  std::vector<EpochLog> epochs;
  metrics::MetricsReport test_metrics;
  /// Per-region mean test residual in original units.
  ResidualVector test_residual;
  /// Attention from the last epoch update; empty for the control arm.
  std::optional<Matrix> attention_weights;
  std::optional<Matrix> attention_scores;
  std::optional<Matrix> adjacency_adapted;
  /// Adjacency used by the restored best-validation model at test time.
  Matrix adjacency_evaluated;
  int best_epoch = 0;
  /// Text checkpoint of the restored model (see Forecaster::save).
  std::string checkpoint;
  double wall_seconds = 0.0;
};

class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Hooks for audits in tests; every member may be empty.
struct TrainObserver {
  /// Called once per training batch with the window indices it contains and
  /// the adjacency the forecaster consumed.
  std::function<void(int epoch, const std::vector<std::size_t>& windows,
                     const Matrix& adjacency)>
      on_batch;
  /// Called after each epoch's attention update with the epoch-mean
  /// training residual.
  std::function<void(int epoch, const ResidualVector& residual)> on_epoch_end;
};

/// Per-region z-score statistics.
struct Normalizer {
  Vector mean;
  Vector sd;

  /// Statistics over columns [0, end_step); sd below 1e-8 becomes 1.
  static Normalizer fit(const Matrix& values, Eigen::Index end_step);
  Matrix normalize(const Matrix& x) const;
};

/// Trains the host forecaster, adapting its adjacency once per epoch when the
/// variant enables the attention block, and evaluates on the test split.
/// `demographics` may be null unless the loss needs it; when given it is
/// also used for the test-set fairness metrics. Deterministic given the seed.
RunRecord train(const RegionGraph& graph, const DemandTensor& demand,
                const DemographicTable* demographics, const ForecastWindow& window,
                const TrainConfig& config, const loss::LossConfig& loss_config,
                const TrainObserver* observer = nullptr);

/// Same, with the loss settings implied by config.variant.
RunRecord train(const RegionGraph& graph, const DemandTensor& demand,
                const DemographicTable* demographics, const ForecastWindow& window,
                const TrainConfig& config);

struct AblationCell {
  loss::Variant variant = loss::Variant::kOriginal;
  std::uint64_t seed = 0;
  std::optional<RunRecord> record;
  std::string error;  // set when the run failed
};

struct AblationRow {
  loss::Variant variant = loss::Variant::kOriginal;
  int runs_ok = 0;
  int runs_failed = 0;
  std::optional<double> mae;
  std::optional<double> smape;
  std::optional<double> gei;
  std::optional<double> sdi;
  std::optional<double> morans_i;
};

struct AblationResult {
  std::vector<AblationCell> cells;  // variant-major, seeds in given order
  std::vector<AblationRow> rows;    // one per variant, canonical order
};

using RunFunction = std::function<RunRecord(const TrainConfig&)>;

/// Median of the present values; empty when none are present.
std::optional<double> median(std::vector<double> values);

/// Summarizes cells into per-variant median rows.
std::vector<AblationRow> summarize(const std::vector<AblationCell>& cells);

/// Runs every variant for every seed. A failing cell is recorded and does not
/// stop the matrix. `jobs` > 1 runs cells on worker threads; results do not
/// depend on it. `run` overrides the per-cell runner (defaults to train()).
AblationResult run_ablation(const RegionGraph& graph, const DemandTensor& demand,
                            const DemographicTable* demographics,
                            const ForecastWindow& window, const TrainConfig& config,
                            const std::vector<std::uint64_t>& seeds, int jobs = 1,
                            RunFunction run = {});

}  // namespace equigrid::trainer
