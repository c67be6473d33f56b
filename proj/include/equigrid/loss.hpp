#pragma once

#include <array>
#include <string>
#include <string_view>

#include "equigrid/core.hpp"

namespace equigrid::loss {

/// Third loss term: none, Moran's I + 1, GEI (alpha = 2), or the demographic
/// correlation disparity.
enum class RegularizerKind { kNone, kMoransIShifted, kGei, kDemographic };

std::string_view to_string(RegularizerKind kind);
RegularizerKind regularizer_from_string(std::string_view name);

struct LossConfig {
  double lambda_s = 0.05;
  double lambda_d = 0.05;
  RegularizerKind dd_kind = RegularizerKind::kNone;
  bool use_ds = false;

  void validate() const;
};

struct LossTerms {
  double prediction = 0.0;  // MSE
  double spatial = 0.0;     // lambda_s * Ds (0 when disabled)
  double regularizer = 0.0; // lambda_d * T_d
  double total = 0.0;
};

struct LossResult {
  LossTerms terms;
  Matrix grad;  // dL/d y_hat, same shape as y_hat
};

/// Weights raw term values: lambda_s applies only when use_ds, lambda_d only
/// when dd_kind is set.
LossTerms compose_terms(double mse, double ds, double td, const LossConfig& config);

/// Floor applied to variance denominators inside the differentiable
/// Moran's I and correlation terms.
inline constexpr double kVarianceFloor = 1e-12;

/// MSE(y_hat, y) + lambda_s Ds(r, A) + lambda_d T_d(r), where r is the
/// per-region mean of (y - y_hat) over the columns. `a` is the geographic
/// adjacency. `demographics` may be null unless dd_kind is kDemographic.
LossResult joint_loss(const Matrix& y_hat, const Matrix& y, const Matrix& a,
                      const LossConfig& config,
                      const DemographicTable* demographics = nullptr);

/// Regularizer values and their gradients with respect to r.
struct TermGradient {
  double value = 0.0;
  Vector grad;
};

TermGradient spatial_disparity_term(const Vector& r, const Matrix& a);
TermGradient morans_shifted_term(const Vector& r, const Matrix& a);
TermGradient gei_term(const Vector& r, double alpha = 2.0);
TermGradient demographic_term(const Vector& r, const DemographicTable& d);

/// Ablation rows in their canonical order.
enum class Variant {
  kOriginal,
  kRaa,
  kRaaDs,
  kRaaMorans,
  kRaaGei,
  kRaaDsMorans,
  kRaaDsGei,
};

inline constexpr std::array<Variant, 7> kAllVariants = {
    Variant::kOriginal,  Variant::kRaa,         Variant::kRaaDs,
    Variant::kRaaMorans, Variant::kRaaGei,      Variant::kRaaDsMorans,
    Variant::kRaaDsGei};

std::string_view to_string(Variant v);
/// Throws std::invalid_argument listing the valid names.
Variant variant_from_string(std::string_view name);
std::string valid_variant_names();

struct VariantConfig {
  LossConfig loss;
  bool raa_enabled = false;
};

VariantConfig variant_config(Variant v);

}  // namespace equigrid::loss
