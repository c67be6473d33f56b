#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "equigrid/core.hpp"
#include "equigrid/loss.hpp"
#include "equigrid/metrics.hpp"
#include "equigrid/trainer.hpp"

namespace equigrid::run_io {

namespace fs = std::filesystem;

/// Everything a training run is configured with.
struct RunSettings {
  trainer::TrainConfig train;
  loss::LossConfig loss;
  ForecastWindow window;
};

/// Defaults with the loss implied by the default variant.
RunSettings default_settings();

/// Applies a JSON run-config object on top of `settings`. Recognized keys:
/// epochs, batch_size, learning_rate, seed, variant, early_stop_patience,
/// optimizer, attention_width, hidden_channels, temporal_kernel, lookback,
/// horizon, lambda_s, lambda_d, dd_kind, use_ds. A `variant` key resets the
/// loss to that variant's settings before explicit loss keys apply. Unknown
/// keys are rejected.
void apply_config(const std::string& json_text, RunSettings& settings);

/// Writes metrics.json, loss_curve.csv, residuals.csv, timing.json and, for
/// attention variants, attention.csv and adjacency_adapted.csv.
void write_run_record(const fs::path& dir, const trainer::RunRecord& record,
                      const std::vector<std::string>& region_ids);

struct StoredMetrics {
  std::string variant;
  std::uint64_t seed = 0;
  metrics::MetricsReport metrics;
};

/// Throws std::runtime_error naming the directory when metrics.json is
/// missing or malformed.
StoredMetrics read_metrics(const fs::path& dir);

std::string metrics_json(const trainer::RunRecord& record);

/// A dataset directory as written by the generate command.
struct Dataset {
  RegionGraph graph;
  DemandTensor demand;
  DemographicTable demographics;
};

/// Reads trips.csv, demographics.csv and adjacency.csv. Region order and bin
/// width come from manifest.json when present, otherwise from the order of
/// demographics.csv and 15-minute bins.
Dataset load_dataset(const fs::path& dir);

/// Throws unless `dir` is absent or empty; with `force` an existing
/// directory's contents are removed first. Creates the directory.
void prepare_out_dir(const fs::path& dir, bool force);

}  // namespace equigrid::run_io
