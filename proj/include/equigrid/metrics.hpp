#pragma once

#include <optional>

#include "equigrid/core.hpp"

namespace equigrid::metrics {

/// Sign-aware variance of neighbor-aggregated residuals:
///   s+ = A max(r,0), s- = A min(r,0),
///   Ds = (1/|V|) sum_i [(s+_i - mean s+)^2 + (s-_i - mean s-)^2].
double spatial_disparity(const ResidualVector& r, const Matrix& a);

/// Pearson correlation. Throws DegenerateError when either side has zero
/// variance.
double pearson(const Vector& x, const Vector& y);

/// |Corr(r, minority)| + |Corr(r, majority)|, in [0, 2].
double demographic_disparity(const ResidualVector& r, const DemographicTable& d);

inline constexpr double kGeiShiftEpsilon = 1e-9;

/// Shift that makes every residual nonnegative: max(0, -min r) + 1e-9.
double gei_shift(const ResidualVector& r);

/// Generalized entropy index of the shifted residuals b = r + gei_shift(r).
double gei(const ResidualVector& r, double alpha = 2.0);

/// Global Moran's I with weights A. Throws DegenerateError for constant r
/// and std::invalid_argument when A sums to zero.
double morans_i(const ResidualVector& r, const Matrix& a);

/// I + 1, the nonnegative form used as a training penalty.
double morans_i_shifted(const ResidualVector& r, const Matrix& a);

/// Scaled disparity index from the two group correlations.
double sdi_from_correlations(double corr_minor, double corr_major);

double sdi(const ResidualVector& r, const DemographicTable& d);

inline constexpr double kSmapeEpsilon = 1e-8;

double smape(const Matrix& y_hat, const Matrix& y, double epsilon = kSmapeEpsilon);

double mae(const Matrix& y_hat, const Matrix& y);

/// Error metrics over raw elements plus fairness metrics over the per-region
/// mean residual. Fairness entries that are undefined for the input are left
/// empty.
struct MetricsReport {
  double mae = 0.0;
  double smape = 0.0;
  double gei = 0.0;
  double spatial_disparity = 0.0;
  std::optional<double> sdi;
  std::optional<double> morans_i;
  std::optional<double> demographic_disparity;
};

/// Row-wise mean of (y - y_hat).
ResidualVector mean_residual(const Matrix& y_hat, const Matrix& y);

/// `y_hat` and `y` stack every test window's horizon block column-wise, so
/// each row is one region. `demographics` may be null.
MetricsReport evaluate_all(const Matrix& y_hat, const Matrix& y, const Matrix& a,
                           const DemographicTable* demographics);

}  // namespace equigrid::metrics
