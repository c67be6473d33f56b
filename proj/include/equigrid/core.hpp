#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace equigrid {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Raised when a statistic is undefined for its input (zero variance,
/// constant residuals). Callers that can tolerate it report the value as
/// absent instead of aborting.
class DegenerateError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

struct Point {
  double x = 0.0;
  double y = 0.0;
};

/// Regions plus a dense nonnegative affinity matrix. Row/column i of the
/// adjacency corresponds to region_ids()[i].
class RegionGraph {
 public:
  RegionGraph(std::vector<std::string> region_ids, Matrix adjacency,
              std::optional<std::vector<Point>> coordinates = std::nullopt);

  std::size_t size() const { return region_ids_.size(); }
  const std::vector<std::string>& region_ids() const { return region_ids_; }
  const Matrix& adjacency() const { return adjacency_; }
  const std::optional<std::vector<Point>>& coordinates() const {
    return coordinates_;
  }

  /// Position of `id` in region_ids(), or nullopt.
  std::optional<std::size_t> index_of(const std::string& id) const;

 private:
  std::vector<std::string> region_ids_;
  Matrix adjacency_;
  std::optional<std::vector<Point>> coordinates_;
};

/// Observation matrix, one row per region and one column per time bin.
class DemandTensor {
 public:
  DemandTensor(Matrix values, int bin_minutes);

  const Matrix& values() const { return values_; }
  Eigen::Index regions() const { return values_.rows(); }
  Eigen::Index steps() const { return values_.cols(); }
  int bin_minutes() const { return bin_minutes_; }

 private:
  Matrix values_;
  int bin_minutes_;
};

struct ForecastWindow {
  int lookback = 12;
  int horizon = 3;

  void validate() const;
};

/// Per-region residual, observed minus predicted: positive values mean the
/// model under-predicted that region.
class ResidualVector {
 public:
  ResidualVector() = default;
  explicit ResidualVector(Vector values);

  const Vector& values() const { return values_; }
  Eigen::Index size() const { return values_.size(); }
  double operator[](Eigen::Index i) const { return values_[i]; }

 private:
  Vector values_;
};

class DemographicTable {
 public:
  DemographicTable(std::vector<std::string> region_ids, Vector minority_frac,
                   Vector majority_frac);

  const std::vector<std::string>& region_ids() const { return region_ids_; }
  const Vector& minority_frac() const { return minority_; }
  const Vector& majority_frac() const { return majority_; }
  std::size_t size() const { return region_ids_.size(); }

  /// Throws std::invalid_argument unless ordering and length match `graph`.
  void check_aligned(const RegionGraph& graph) const;

 private:
  std::vector<std::string> region_ids_;
  Vector minority_;
  Vector majority_;
};

/// Gaussian-kernel affinity exp(-d^2 / sigma^2), cut to zero at or below
/// `threshold`, with a zero diagonal.
Matrix build_distance_adjacency(std::span<const Point> coords, double sigma,
                                double threshold);

/// Divides each row with positive sum by that sum; all-zero rows stay zero.
Matrix row_normalize(const Matrix& a);

/// Keeps large matrix buffers in the heap rather than in fresh memory
/// mappings, which otherwise dominate training time. Process-wide; call once
/// from main. No-op outside glibc.
void tune_allocator();

/// Derives an independent 64-bit seed for a named stream from a master seed
/// (splitmix64 over seed ^ stream * golden-ratio constant).
std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t stream);

namespace streams {
inline constexpr std::uint64_t kSyntheticData = 1;
inline constexpr std::uint64_t kModelInit = 2;
inline constexpr std::uint64_t kBatchShuffle = 3;
inline constexpr std::uint64_t kAttentionInit = 4;
}  // namespace streams

}  // namespace equigrid
