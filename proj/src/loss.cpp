#include "equigrid/loss.hpp"

#include <cmath>

namespace equigrid::loss {

std::string_view to_string(RegularizerKind kind) {
  switch (kind) {
    case RegularizerKind::kNone: return "none";
    case RegularizerKind::kMoransIShifted: return "morans_i_shifted";
    case RegularizerKind::kGei: return "gei";
    case RegularizerKind::kDemographic: return "demographic";
  }
  return "none";
}

RegularizerKind regularizer_from_string(std::string_view name) {
  for (auto k : {RegularizerKind::kNone, RegularizerKind::kMoransIShifted,
                 RegularizerKind::kGei, RegularizerKind::kDemographic}) {
    if (to_string(k) == name) return k;
  }
  throw std::invalid_argument(
      "unknown dd_kind '" + std::string(name) +
      "' (valid: none, morans_i_shifted, gei, demographic)");
}

void LossConfig::validate() const {
  if (!(lambda_s >= 0.0) || !std::isfinite(lambda_s)) {
    throw std::invalid_argument("lambda_s must be finite and >= 0");
  }
  if (!(lambda_d >= 0.0) || !std::isfinite(lambda_d)) {
    throw std::invalid_argument("lambda_d must be finite and >= 0");
  }
}

TermGradient spatial_disparity_term(const Vector& r, const Matrix& a) {
  const auto n = static_cast<double>(r.size());
  const Vector pos = r.cwiseMax(0.0);
  const Vector neg = r.cwiseMin(0.0);
  const Vector s_pos = a * pos;
  const Vector s_neg = a * neg;
  const Vector c_pos = s_pos.array() - s_pos.mean();
  const Vector c_neg = s_neg.array() - s_neg.mean();
  TermGradient out;
  out.value = (c_pos.squaredNorm() + c_neg.squaredNorm()) / n;
  const Vector g_pos = a.transpose() * ((2.0 / n) * c_pos);
  const Vector g_neg = a.transpose() * ((2.0 / n) * c_neg);
  out.grad.resize(r.size());
  for (Eigen::Index i = 0; i < r.size(); ++i) {
    out.grad[i] = r[i] > 0.0 ? g_pos[i] : (r[i] < 0.0 ? g_neg[i] : 0.0);
  }
  return out;
}

TermGradient morans_shifted_term(const Vector& r, const Matrix& a) {
  const double w = a.sum();
  if (!(w > 0.0)) throw std::invalid_argument("adjacency weights sum to zero");
  const auto n = static_cast<double>(r.size());
  const Vector z = r.array() - r.mean();
  const double raw_ss = z.squaredNorm();
  const bool floored = raw_ss < kVarianceFloor;
  const double ss = floored ? kVarianceFloor : raw_ss;
  const Vector az = a * z;
  const double cross = z.dot(az);
  TermGradient out;
  out.value = (n / w) * cross / ss + 1.0;
  Vector gz = (n / w) * (az + a.transpose() * z) / ss;
  if (!floored) gz -= (n / w) * (2.0 * cross / (ss * ss)) * z;
  out.grad = gz.array() - gz.mean();
  return out;
}

TermGradient gei_term(const Vector& r, double alpha) {
  constexpr double eps = 1e-9;
  const auto n = static_cast<double>(r.size());
  Eigen::Index argmin = 0;
  const double r_min = r.minCoeff(&argmin);
  const double m = std::max(0.0, -r_min) + eps;
  const Vector b = r.array() + m;
  const double mean = b.mean();
  TermGradient out;
  out.grad = Vector::Zero(r.size());
  if (mean < eps) return out;
  const Eigen::ArrayXd pow_a = b.array().pow(alpha);
  out.value = ((pow_a / std::pow(mean, alpha)) - 1.0).sum() / (n * alpha * (alpha - 1.0));
  const double sum_pow = pow_a.sum();
  const Vector gb = (b.array().pow(alpha - 1.0) / std::pow(mean, alpha) -
                     sum_pow / (n * std::pow(mean, alpha + 1.0))) /
                    (n * (alpha - 1.0));
  out.grad = gb;
  // m tracks -min(r) while the minimum is negative
  if (r_min < 0.0) out.grad[argmin] -= gb.sum();
  return out;
}

namespace {

struct FlooredCorrelation {
  double value = 0.0;
  Vector grad;  // d corr / d r
};

FlooredCorrelation floored_correlation(const Vector& r, const Vector& p) {
  const Vector z = r.array() - r.mean();
  const Vector q = p.array() - p.mean();
  const double raw_zz = z.squaredNorm();
  const bool floored = raw_zz < kVarianceFloor;
  const double zz = floored ? kVarianceFloor : raw_zz;
  const double qq = std::max(q.squaredNorm(), kVarianceFloor);
  const double denom = std::sqrt(zz * qq);
  FlooredCorrelation out;
  out.value = z.dot(q) / denom;
  Vector gz = q / denom;
  if (!floored) gz -= out.value * z / zz;
  out.grad = gz.array() - gz.mean();
  return out;
}

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

}  // namespace

TermGradient demographic_term(const Vector& r, const DemographicTable& d) {
  if (static_cast<std::size_t>(r.size()) != d.size()) {
    throw std::invalid_argument("residual length does not match demographics");
  }
  const auto minor = floored_correlation(r, d.minority_frac());
  const auto major = floored_correlation(r, d.majority_frac());
  TermGradient out;
  out.value = std::abs(minor.value) + std::abs(major.value);
  out.grad = sign(minor.value) * minor.grad + sign(major.value) * major.grad;
  return out;
}

LossTerms compose_terms(double mse, double ds, double td,
                        const LossConfig& config) {
  LossTerms t;
  t.prediction = mse;
  t.spatial = config.use_ds ? config.lambda_s * ds : 0.0;
  t.regularizer = config.dd_kind != RegularizerKind::kNone ? config.lambda_d * td : 0.0;
  t.total = t.prediction + t.spatial + t.regularizer;
  return t;
}

LossResult joint_loss(const Matrix& y_hat, const Matrix& y, const Matrix& a,
                      const LossConfig& config,
                      const DemographicTable* demographics) {
  config.validate();
  if (y_hat.rows() != y.rows() || y_hat.cols() != y.cols() || y.size() == 0) {
    throw std::invalid_argument("prediction and target shapes differ");
  }
  if (a.rows() != y.rows() || a.cols() != y.rows()) {
    throw std::invalid_argument("adjacency side does not match region count");
  }
  if (config.dd_kind == RegularizerKind::kDemographic && demographics == nullptr) {
    throw std::invalid_argument("dd_kind=demographic requires a demographic table");
  }

  const auto cols = static_cast<double>(y.cols());
  const Matrix diff = y_hat - y;
  LossResult out;
  const double mse = diff.squaredNorm() / static_cast<double>(diff.size());
  out.grad = (2.0 / static_cast<double>(diff.size())) * diff;

  const Vector r = (-diff).rowwise().mean();
  Vector grad_r = Vector::Zero(r.size());

  double ds = 0.0;
  double td = 0.0;
  if (config.use_ds && config.lambda_s != 0.0) {
    const auto t = spatial_disparity_term(r, a);
    ds = t.value;
    grad_r += config.lambda_s * t.grad;
  }
  if (config.dd_kind != RegularizerKind::kNone && config.lambda_d != 0.0) {
    TermGradient t;
    switch (config.dd_kind) {
      case RegularizerKind::kMoransIShifted: t = morans_shifted_term(r, a); break;
      case RegularizerKind::kGei: t = gei_term(r); break;
      case RegularizerKind::kDemographic: t = demographic_term(r, *demographics); break;
      case RegularizerKind::kNone: break;
    }
    td = t.value;
    grad_r += config.lambda_d * t.grad;
  }
  out.terms = compose_terms(mse, ds, td, config);

  // r_i = mean_m (y_im - y_hat_im)  =>  d r_i / d y_hat_im = -1 / cols
  out.grad.colwise() -= grad_r / cols;
  return out;
}

std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::kOriginal: return "original";
    case Variant::kRaa: return "raa";
    case Variant::kRaaDs: return "raa_ds";
    case Variant::kRaaMorans: return "raa_morans";
    case Variant::kRaaGei: return "raa_gei";
    case Variant::kRaaDsMorans: return "raa_ds_morans";
    case Variant::kRaaDsGei: return "raa_ds_gei";
  }
  return "original";
}

std::string valid_variant_names() {
  std::string s;
  for (auto v : kAllVariants) {
    if (!s.empty()) s += ", ";
    s += to_string(v);
  }
  return s;
}

Variant variant_from_string(std::string_view name) {
  for (auto v : kAllVariants) {
    if (to_string(v) == name) return v;
  }
  throw std::invalid_argument("unknown variant '" + std::string(name) +
                              "' (valid: " + valid_variant_names() + ")");
}

VariantConfig variant_config(Variant v) {
  VariantConfig c;
  c.raa_enabled = v != Variant::kOriginal;
  switch (v) {
    case Variant::kOriginal:
    case Variant::kRaa:
      break;
    case Variant::kRaaDs:
      c.loss.use_ds = true;
      break;
    case Variant::kRaaMorans:
      c.loss.dd_kind = RegularizerKind::kMoransIShifted;
      break;
    case Variant::kRaaGei:
      c.loss.dd_kind = RegularizerKind::kGei;
      break;
    case Variant::kRaaDsMorans:
      c.loss.use_ds = true;
      c.loss.dd_kind = RegularizerKind::kMoransIShifted;
      break;
    case Variant::kRaaDsGei:
      c.loss.use_ds = true;
      c.loss.dd_kind = RegularizerKind::kGei;
      break;
  }
  return c;
}

}  // namespace equigrid::loss
