#pragma once

#include <limits>
#include <string>
#include <vector>

#include "difiv/image.hpp"

namespace difiv {

// Returned by psnr() when the estimate matches the reference exactly.
inline constexpr double kPsnrExact = std::numeric_limits<double>::infinity();

inline constexpr std::size_t kUiqiWindow = 8;

/// Bands, pixels or windows excluded from an average because the metric is
/// undefined there.
struct MetricWarnings {
  std::vector<std::string> messages;
};

double psnr(const HyperImage& est, const HyperImage& ref, MetricWarnings* warnings = nullptr);
// Mean spectral angle in radians.
double sam(const HyperImage& est, const HyperImage& ref, MetricWarnings* warnings = nullptr);

enum class ErgasVariant {
  // (M/N) sqrt(1e4/L sum_l ||est_l - ref_l||^2 / mean(est_l)^2)
  kEstimateNormalized,
  // 100 sqrt(N/M) sqrt(1/L sum_l (||est_l - ref_l||^2 / M) / mean(ref_l)^2)
  kConventional,
};

double ergas(const HyperImage& est, const HyperImage& ref, double hr_pixels, double lr_pixels,
             ErgasVariant variant = ErgasVariant::kEstimateNormalized, MetricWarnings* warnings = nullptr);

// Band-averaged universal image quality index over 8x8 windows, stride 1.
double uiqi(const HyperImage& est, const HyperImage& ref, MetricWarnings* warnings = nullptr);

struct MetricReport {
  double psnr_db = 0.0;
  double sam_rad = 0.0;
  double ergas = 0.0;
  double uiqi = 0.0;

  double sam_deg() const;
};

MetricReport evaluate(const HyperImage& est, const HyperImage& ref, double hr_pixels,
                      double lr_pixels, MetricWarnings* warnings = nullptr);

}  // namespace difiv
