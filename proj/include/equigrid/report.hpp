#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "equigrid/core.hpp"
#include "equigrid/metrics.hpp"
#include "equigrid/raa.hpp"
#include "equigrid/trainer.hpp"

namespace equigrid::report {

// Matrix and residual exports write doubles in shortest round-trip form so a
// re-parse reproduces the in-memory values exactly. Metric tables use nine
// significant digits.

/// `region_id,mean_residual`, preceded by a '#' line stating the sign
/// convention.
void export_residual_map(std::ostream& out, const ResidualVector& r,
                         const std::vector<std::string>& region_ids);

struct RegionValues {
  std::vector<std::string> region_ids;
  Vector values;
};

RegionValues parse_residual_map(std::istream& in);

/// Adds a `mean_residual` property to each feature of a GeoJSON
/// FeatureCollection whose features carry a string `region_id` property.
/// Throws std::runtime_error listing ids missing on either side.
std::string enrich_geometry(std::istream& geojson, const ResidualVector& r,
                            const std::vector<std::string>& region_ids);

/// Full |V| x |V| matrix with a `region_id,<ids...>` header.
void write_region_matrix(std::ostream& out, const Matrix& m,
                         const std::vector<std::string>& region_ids);

struct RegionMatrix {
  std::vector<std::string> region_ids;
  Matrix values;
};

RegionMatrix parse_region_matrix(std::istream& in);

struct AttentionExport {
  std::string weights_csv;                // full H
  std::optional<std::string> focus_csv;   // region_id,attention_score,attention_weight
};

/// Throws std::invalid_argument when no attention has been computed yet or
/// the focus region is unknown.
AttentionExport export_attention(const std::optional<Matrix>& weights,
                                 const std::optional<Matrix>& scores,
                                 const std::vector<std::string>& region_ids,
                                 const std::optional<std::string>& focus_region);

AttentionExport export_attention(const raa::AttentionState& state,
                                 const std::vector<std::string>& region_ids,
                                 const std::optional<std::string>& focus_region);

struct LabeledMetrics {
  std::string label;
  std::string variant;
  metrics::MetricsReport metrics;
};

struct MetricsTable {
  std::string csv;
  std::string json;
};

/// (variant - original) / |original| * 100, or empty when either side is
/// absent or the original is zero.
std::optional<double> percent_delta(std::optional<double> variant,
                                    std::optional<double> original);

/// MAE, SMAPE, GEI, SDI and Moran's I per record plus percentage deltas
/// against the first record whose variant is "original". Throws when no
/// such record exists.
MetricsTable export_metrics_table(const std::vector<LabeledMetrics>& records);

/// Per-variant medians in canonical variant order; absent values print as NA.
std::string ablation_table_csv(const trainer::AblationResult& result);
/// One line per (variant, seed) cell with its status.
std::string ablation_cells_csv(const trainer::AblationResult& result);

}  // namespace equigrid::report
