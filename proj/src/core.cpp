#include "equigrid/core.hpp"

#include <cmath>
#include <unordered_set>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace equigrid {

namespace {

bool all_finite(const Matrix& m) { return m.allFinite(); }

}  // namespace

RegionGraph::RegionGraph(std::vector<std::string> region_ids, Matrix adjacency,
                         std::optional<std::vector<Point>> coordinates)
    : region_ids_(std::move(region_ids)),
      adjacency_(std::move(adjacency)),
      coordinates_(std::move(coordinates)) {
  const auto n = static_cast<Eigen::Index>(region_ids_.size());
  if (adjacency_.rows() != n || adjacency_.cols() != n) {
    throw std::invalid_argument("adjacency must be square with side " +
                                std::to_string(n));
  }
  if (!all_finite(adjacency_)) {
    throw std::invalid_argument("adjacency contains non-finite entries");
  }
  if ((adjacency_.array() < 0.0).any()) {
    throw std::invalid_argument("adjacency contains negative entries");
  }
  std::unordered_set<std::string> seen;
  for (const auto& id : region_ids_) {
    if (!seen.insert(id).second) {
      throw std::invalid_argument("duplicate region id: " + id);
    }
  }
  if (coordinates_ && coordinates_->size() != region_ids_.size()) {
    throw std::invalid_argument("coordinate count does not match regions");
  }
}

std::optional<std::size_t> RegionGraph::index_of(const std::string& id) const {
  for (std::size_t i = 0; i < region_ids_.size(); ++i) {
    if (region_ids_[i] == id) return i;
  }
  return std::nullopt;
}

DemandTensor::DemandTensor(Matrix values, int bin_minutes)
    : values_(std::move(values)), bin_minutes_(bin_minutes) {
  if (bin_minutes_ <= 0) {
    throw std::invalid_argument("bin_minutes must be positive");
  }
  if (!all_finite(values_)) {
    throw std::invalid_argument("demand contains non-finite entries");
  }
}

void ForecastWindow::validate() const {
  if (lookback < 1) throw std::invalid_argument("lookback must be >= 1");
  if (horizon < 1) throw std::invalid_argument("horizon must be >= 1");
}

ResidualVector::ResidualVector(Vector values) : values_(std::move(values)) {
  if (!values_.allFinite()) {
    throw std::invalid_argument("residual vector contains non-finite entries");
  }
}

DemographicTable::DemographicTable(std::vector<std::string> region_ids,
                                   Vector minority_frac, Vector majority_frac)
    : region_ids_(std::move(region_ids)),
      minority_(std::move(minority_frac)),
      majority_(std::move(majority_frac)) {
  const auto n = static_cast<Eigen::Index>(region_ids_.size());
  if (minority_.size() != n || majority_.size() != n) {
    throw std::invalid_argument("demographic vectors must match region count");
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    for (double f : {minority_[i], majority_[i]}) {
      if (!(f >= 0.0 && f <= 1.0)) {
        throw std::invalid_argument("population fraction outside [0,1] for " +
                                    region_ids_[static_cast<std::size_t>(i)]);
      }
    }
  }
}

void DemographicTable::check_aligned(const RegionGraph& graph) const {
  if (region_ids_ != graph.region_ids()) {
    throw std::invalid_argument(
        "demographic table is not aligned with the region graph");
  }
}

Matrix build_distance_adjacency(std::span<const Point> coords, double sigma,
                                double threshold) {
  if (coords.size() < 2) {
    throw std::invalid_argument("distance adjacency needs at least 2 regions");
  }
  if (!(sigma > 0.0) || !std::isfinite(sigma)) {
    throw std::invalid_argument("sigma must be positive");
  }
  if (!(threshold >= 0.0 && threshold < 1.0)) {
    throw std::invalid_argument("threshold must lie in [0,1)");
  }
  for (const auto& p : coords) {
    if (!std::isfinite(p.x) || !std::isfinite(p.y)) {
      throw std::invalid_argument("non-finite coordinate");
    }
  }
  const auto n = static_cast<Eigen::Index>(coords.size());
  Matrix a = Matrix::Zero(n, n);
  const double s2 = sigma * sigma;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double dx = coords[i].x - coords[j].x;
      const double dy = coords[i].y - coords[j].y;
      const double w = std::exp(-(dx * dx + dy * dy) / s2);
      if (w > threshold) {
        a(i, j) = w;
        a(j, i) = w;
      }
    }
  }
  return a;
}

Matrix row_normalize(const Matrix& a) {
  Matrix out = a;
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    const double s = out.row(i).sum();
    if (s > 0.0) out.row(i) /= s;
  }
  return out;
}

void tune_allocator() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 64 << 20);
  mallopt(M_TRIM_THRESHOLD, 256 << 20);
#endif
}

std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed ^ (stream * 0x9E3779B97F4A7C15ULL);
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace equigrid
