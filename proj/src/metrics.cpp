#include "equigrid/metrics.hpp"

#include <cmath>

namespace equigrid::metrics {

namespace {

void require_same_length(const ResidualVector& r, const Matrix& a) {
  if (a.rows() != r.size() || a.cols() != r.size()) {
    throw std::invalid_argument("residual length " + std::to_string(r.size()) +
                                " does not match adjacency side");
  }
}

void require_same_length(const ResidualVector& r, const DemographicTable& d) {
  if (static_cast<std::size_t>(r.size()) != d.size()) {
    throw std::invalid_argument("residual length does not match demographics");
  }
}

void require_same_shape(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument("prediction and target shapes differ");
  }
}

double centered_variance_sum(const Vector& v) {
  return (v.array() - v.mean()).square().sum();
}

}  // namespace

double spatial_disparity(const ResidualVector& r, const Matrix& a) {
  require_same_length(r, a);
  const Vector pos = r.values().cwiseMax(0.0);
  const Vector neg = r.values().cwiseMin(0.0);
  const Vector s_pos = a * pos;
  const Vector s_neg = a * neg;
  const auto n = static_cast<double>(r.size());
  return (centered_variance_sum(s_pos) + centered_variance_sum(s_neg)) / n;
}

double pearson(const Vector& x, const Vector& y) {
  if (x.size() != y.size()) throw std::invalid_argument("length mismatch");
  const Vector xc = x.array() - x.mean();
  const Vector yc = y.array() - y.mean();
  const double sxx = xc.squaredNorm();
  const double syy = yc.squaredNorm();
  if (!(sxx > 0.0) || !(syy > 0.0)) {
    throw DegenerateError("degenerate correlation: zero variance");
  }
  return xc.dot(yc) / std::sqrt(sxx * syy);
}

double demographic_disparity(const ResidualVector& r, const DemographicTable& d) {
  require_same_length(r, d);
  return std::abs(pearson(r.values(), d.minority_frac())) +
         std::abs(pearson(r.values(), d.majority_frac()));
}

double gei_shift(const ResidualVector& r) {
  return std::max(0.0, -r.values().minCoeff()) + kGeiShiftEpsilon;
}

double gei(const ResidualVector& r, double alpha) {
  if (r.size() == 0) throw std::invalid_argument("gei of an empty vector");
  if (alpha == 0.0 || alpha == 1.0) {
    throw std::invalid_argument("gei alpha must differ from 0 and 1");
  }
  const Vector b = r.values().array() + gei_shift(r);
  const double mean = b.mean();
  if (mean < kGeiShiftEpsilon) return 0.0;
  const auto n = static_cast<double>(b.size());
  const double acc = ((b.array() / mean).pow(alpha) - 1.0).sum();
  return acc / (n * alpha * (alpha - 1.0));
}

double morans_i(const ResidualVector& r, const Matrix& a) {
  require_same_length(r, a);
  const double w = a.sum();
  if (!(w > 0.0)) throw std::invalid_argument("adjacency weights sum to zero");
  const Vector z = r.values().array() - r.values().mean();
  const double denom = z.squaredNorm();
  if (!(denom > 0.0)) throw DegenerateError("zero variance residuals");
  const auto n = static_cast<double>(r.size());
  return (n / w) * z.dot(a * z) / denom;
}

double morans_i_shifted(const ResidualVector& r, const Matrix& a) {
  return morans_i(r, a) + 1.0;
}

double sdi_from_correlations(double corr_minor, double corr_major) {
  const double scale = std::abs(corr_minor) + std::abs(corr_major);
  if (scale < 1e-12) return 0.0;
  return std::abs(corr_minor - corr_major) / scale *
         std::sqrt(std::abs(corr_minor * corr_major));
}

double sdi(const ResidualVector& r, const DemographicTable& d) {
  require_same_length(r, d);
  return sdi_from_correlations(pearson(r.values(), d.minority_frac()),
                               pearson(r.values(), d.majority_frac()));
}

double smape(const Matrix& y_hat, const Matrix& y, double epsilon) {
  require_same_shape(y_hat, y);
  if (y.size() == 0) throw std::invalid_argument("smape of empty input");
  const auto num = 2.0 * (y_hat - y).array().abs() + epsilon;
  const auto den = y_hat.array().abs() + y.array().abs() + epsilon;
  return (num / den).mean();
}

double mae(const Matrix& y_hat, const Matrix& y) {
  require_same_shape(y_hat, y);
  if (y.size() == 0) throw std::invalid_argument("mae of empty input");
  return (y_hat - y).array().abs().mean();
}

ResidualVector mean_residual(const Matrix& y_hat, const Matrix& y) {
  require_same_shape(y_hat, y);
  return ResidualVector((y - y_hat).rowwise().mean());
}

MetricsReport evaluate_all(const Matrix& y_hat, const Matrix& y, const Matrix& a,
                           const DemographicTable* demographics) {
  MetricsReport report;
  report.mae = mae(y_hat, y);
  report.smape = smape(y_hat, y);
  const ResidualVector r = mean_residual(y_hat, y);
  report.gei = gei(r);
  report.spatial_disparity = spatial_disparity(r, a);
  try {
    report.morans_i = morans_i(r, a);
  } catch (const DegenerateError&) {
  } catch (const std::invalid_argument&) {
    // zero adjacency: Moran's I is undefined, not an input error here
  }
  if (demographics != nullptr) {
    try {
      report.sdi = sdi(r, *demographics);
      report.demographic_disparity = demographic_disparity(r, *demographics);
    } catch (const DegenerateError&) {
    }
  }
  return report;
}

}  // namespace equigrid::metrics
