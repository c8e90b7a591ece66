#include "difiv/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "difiv/errors.hpp"

namespace difiv {
namespace {

void warn(MetricWarnings* w, std::string msg) {
  if (w) w->messages.push_back(std::move(msg));
}

void check_pair(const HyperImage& est, const HyperImage& ref, const char* metric) {
  require_same_shape(est, ref, metric);
  if (est.empty()) throw DimensionError(std::string(metric) + ": empty images");
  require_finite(est, metric);
  require_finite(ref, metric);
}

double band_mean(std::span<const double> band) {
  double s = 0.0;
  for (double v : band) s += v;
  return s / static_cast<double>(band.size());
}

double band_error(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
  return s;
}

}  // namespace

double psnr(const HyperImage& est, const HyperImage& ref, MetricWarnings* warnings) {
  check_pair(est, ref, "psnr");
  const double m = static_cast<double>(ref.pixels());
  double total = 0.0;
  std::size_t used = 0;
  for (std::size_t b = 0; b < ref.bands(); ++b) {
    const auto r = ref.band(b);
    const double peak = *std::max_element(r.begin(), r.end());
    if (peak == 0.0) {
      warn(warnings, "psnr: band " + std::to_string(b) + " has zero maximum, skipped");
      continue;
    }
    const double err = band_error(est.band(b), r);
    if (err == 0.0) return kPsnrExact;
    total += 10.0 * std::log10(m * peak * peak / err);
    ++used;
  }
  if (used == 0) throw ValueError("psnr: no band with a nonzero reference maximum");
  return total / static_cast<double>(used);
}

double sam(const HyperImage& est, const HyperImage& ref, MetricWarnings* warnings) {
  check_pair(est, ref, "sam");
  const std::size_t n = ref.pixels();
  const std::size_t bands = ref.bands();
  const auto e = est.data();
  const auto r = ref.data();
  double total = 0.0;
  std::size_t used = 0;
  std::size_t skipped = 0;
  for (std::size_t p = 0; p < n; ++p) {
    double ee = 0.0, rr = 0.0;
    for (std::size_t b = 0; b < bands; ++b) {
      ee += e[b * n + p] * e[b * n + p];
      rr += r[b * n + p] * r[b * n + p];
    }
    if (ee == 0.0 || rr == 0.0) {
      ++skipped;
      continue;
    }
    // Kahan's form 2 atan2(|u - v|, |u + v|) on unit vectors: exact zero for
    // identical spectra and well conditioned near 0 and pi, unlike acos.
    const double ie = 1.0 / std::sqrt(ee);
    const double ir = 1.0 / std::sqrt(rr);
    double diff = 0.0, sum = 0.0;
    for (std::size_t b = 0; b < bands; ++b) {
      const double u = e[b * n + p] * ie;
      const double v = r[b * n + p] * ir;
      diff += (u - v) * (u - v);
      sum += (u + v) * (u + v);
    }
    total += 2.0 * std::atan2(std::sqrt(diff), std::sqrt(sum));
    ++used;
  }
  if (skipped > 0) warn(warnings, "sam: skipped " + std::to_string(skipped) + " zero-norm pixels");
  if (used == 0) throw ValueError("sam: every pixel vector has zero norm");
  return total / static_cast<double>(used);
}

double ergas(const HyperImage& est, const HyperImage& ref, double hr_pixels, double lr_pixels,
             ErgasVariant variant, MetricWarnings* warnings) {
  check_pair(est, ref, "ergas");
  if (!(hr_pixels > 0.0) || !(lr_pixels > 0.0)) {
    throw ValueError("ergas: pixel counts must be positive");
  }
  const double m = static_cast<double>(ref.pixels());
  double sum = 0.0;
  std::size_t used = 0;
  for (std::size_t b = 0; b < ref.bands(); ++b) {
    const double mu = band_mean(variant == ErgasVariant::kEstimateNormalized ? est.band(b) : ref.band(b));
    if (mu == 0.0) {
      warn(warnings, "ergas: band " + std::to_string(b) + " has zero mean, skipped");
      continue;
    }
    double err = band_error(est.band(b), ref.band(b));
    if (variant == ErgasVariant::kConventional) err /= m;
    sum += err / (mu * mu);
    ++used;
  }
  if (used == 0) throw ValueError("ergas: no band with a nonzero mean");
  const double bands = static_cast<double>(used);
  if (variant == ErgasVariant::kEstimateNormalized) {
    return (hr_pixels / lr_pixels) * std::sqrt(1e4 / bands * sum);
  }
  return 100.0 * std::sqrt(lr_pixels / hr_pixels) * std::sqrt(sum / bands);
}

double uiqi(const HyperImage& est, const HyperImage& ref, MetricWarnings* warnings) {
  check_pair(est, ref, "uiqi");
  const std::size_t w = kUiqiWindow;
  if (ref.rows() < w || ref.cols() < w) {
    throw DimensionError("uiqi: images must be at least 8x8, got " + ref.shape().str());
  }
  const std::size_t cols = ref.cols();
  const double nw = static_cast<double>(w * w);
  double total = 0.0;
  std::size_t used_bands = 0;
  for (std::size_t b = 0; b < ref.bands(); ++b) {
    const auto x = est.band(b);
    const auto y = ref.band(b);
    double band_total = 0.0;
    std::size_t windows = 0;
    for (std::size_t i0 = 0; i0 + w <= ref.rows(); ++i0) {
      for (std::size_t j0 = 0; j0 + w <= cols; ++j0) {
        double mx = 0.0, my = 0.0;
        for (std::size_t i = i0; i < i0 + w; ++i) {
          for (std::size_t j = j0; j < j0 + w; ++j) {
            mx += x[i * cols + j];
            my += y[i * cols + j];
          }
        }
        mx /= nw;
        my /= nw;
        double vx = 0.0, vy = 0.0, cxy = 0.0;
        for (std::size_t i = i0; i < i0 + w; ++i) {
          for (std::size_t j = j0; j < j0 + w; ++j) {
            const double dx = x[i * cols + j] - mx;
            const double dy = y[i * cols + j] - my;
            vx += dx * dx;
            vy += dy * dy;
            cxy += dx * dy;
          }
        }
        vx /= nw - 1.0;
        vy /= nw - 1.0;
        cxy /= nw - 1.0;
        const double contrast = vx + vy;
        const double luminance = mx * mx + my * my;
        // Degenerate windows follow the index's reference implementation:
        // a vanishing factor is dropped from the product.
        double q = 1.0;
        if (contrast != 0.0 && luminance != 0.0) {
          q = 4.0 * cxy * mx * my / (contrast * luminance);
        } else if (contrast != 0.0) {
          q = 2.0 * cxy / contrast;
        } else if (luminance != 0.0) {
          q = 2.0 * mx * my / luminance;
        }
        band_total += q;
        ++windows;
      }
    }
    total += band_total / static_cast<double>(windows);
    ++used_bands;
  }
  (void)warnings;
  return total / static_cast<double>(used_bands);
}

double MetricReport::sam_deg() const { return sam_rad * 180.0 / std::numbers::pi; }

MetricReport evaluate(const HyperImage& est, const HyperImage& ref, double hr_pixels,
                      double lr_pixels, MetricWarnings* warnings) {
  MetricReport r;
  r.psnr_db = psnr(est, ref, warnings);
  r.sam_rad = sam(est, ref, warnings);
  r.ergas = ergas(est, ref, hr_pixels, lr_pixels, ErgasVariant::kEstimateNormalized, warnings);
  r.uiqi = uiqi(est, ref, warnings);
  return r;
}

}  // namespace difiv
