#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "equigrid/core.hpp"

namespace equigrid::data {

/// Pivots a `region_id,t_index,count` CSV into a |V| x T matrix. Duplicate
/// (region, bin) rows are summed and absent cells are zero.
DemandTensor load_trips(std::istream& csv, const RegionGraph& graph,
                        int bin_minutes);

/// Accepts `region_id,minority_frac,majority_frac` or
/// `region_id,total,minority,majority` (fractions derived from counts).
DemographicTable load_demographics(std::istream& csv, const RegionGraph& graph);

/// Reads a `src,dst,weight` edge list into a dense matrix ordered by
/// `region_ids`. Edges are taken as given (no symmetrization).
Matrix load_adjacency_edges(std::istream& csv,
                            const std::vector<std::string>& region_ids);

/// Counts are rounded to the nearest integer and clamped at zero; the trips
/// format only carries nonnegative integers.
void write_trips(std::ostream& out, const RegionGraph& graph,
                 const DemandTensor& demand);
void write_demographics(std::ostream& out, const DemographicTable& table);
/// Writes every positive entry as one edge.
void write_adjacency_edges(std::ostream& out, const RegionGraph& graph);

struct SyntheticCityConfig {
  int n_regions = 64;
  int n_steps = 2000;
  double segregation_strength = 0.8;
  double base_demand = 20.0;
  double noise_scale = 2.0;
  std::uint64_t seed = 0;
  int bin_minutes = 15;
  /// Steps per demand cycle; 96 fifteen-minute bins make one day.
  int period_steps = 96;
  double kernel_sigma = 1.0;
  double kernel_threshold = 0.1;

  void validate() const;
};

struct SyntheticCity {
  RegionGraph graph;
  DemandTensor demand;
  DemographicTable demographics;
  /// Multiplicative demand level per region.
  Vector region_factors;
  /// 1 for regions in the southern (high-minority) block, else 0.
  Vector south;
};

/// Grid city split into a northern and a southern block. The southern block
/// carries the higher minority share, more dispersed region factors, and
/// noisier demand. Bit-reproducible for a given config.
SyntheticCity generate_synthetic_city(const SyntheticCityConfig& config);

/// Spread of the uniform region-factor draw for a block.
double region_factor_spread(double segregation_strength, bool south);
/// Noise standard deviation for a block.
double noise_sd(double noise_scale, double segregation_strength, bool south);
/// Noise-free demand for a region with factor `factor` at step `t`.
double deterministic_demand(double base_demand, double factor, int t,
                            int period_steps);

struct Window {
  Eigen::Index start = 0;
  Matrix input;   // |V| x lookback
  Matrix target;  // |V| x horizon
};

/// Stride-1 sliding windows in chronological order.
std::vector<Window> make_windows(const DemandTensor& demand,
                                 const ForecastWindow& window);

/// Chronological split of window indices: train = [0, train_end),
/// validation = [train_end, val_end), test = [val_end, total).
struct Split {
  std::size_t train_end = 0;
  std::size_t val_end = 0;
  std::size_t total = 0;

  std::size_t train_size() const { return train_end; }
  std::size_t val_size() const { return val_end - train_end; }
  std::size_t test_size() const { return total - val_end; }
};

Split chronological_split(std::size_t n_windows, double train_frac = 0.7,
                          double val_frac = 0.1);

}  // namespace equigrid::data
