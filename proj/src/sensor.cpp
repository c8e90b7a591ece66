#include "difiv/sensor.hpp"

#include <cmath>
#include <numeric>
#include <string>

#include "difiv/errors.hpp"

namespace difiv {

BlurKernel identity_kernel() { return BlurKernel{}; }

BlurKernel gaussian_kernel(std::size_t size, double sigma) {
  if (size == 0) throw ValueError("gaussian_kernel: size must be positive");
  if (!(sigma > 0.0) || !std::isfinite(sigma)) {
    throw ValueError("gaussian_kernel: sigma must be positive and finite");
  }
  BlurKernel k;
  k.size = size;
  k.weights.assign(size * size, 0.0);
  const double mid = 0.5 * static_cast<double>(size - 1);
  double total = 0.0;
  for (std::size_t a = 0; a < size; ++a) {
    for (std::size_t b = 0; b < size; ++b) {
      const double da = static_cast<double>(a) - mid;
      const double db = static_cast<double>(b) - mid;
      const double w = std::exp(-(da * da + db * db) / (2.0 * sigma * sigma));
      k.weights[a * size + b] = w;
      total += w;
    }
  }
  for (double& w : k.weights) w /= total;
  return k;
}

Eigen::MatrixXd band_average_srf(std::size_t msi_bands, std::size_t hsi_bands) {
  if (msi_bands == 0 || msi_bands > hsi_bands) {
    throw ValueError("band_average_srf: need 1 <= msi_bands <= hsi_bands, got " +
                     std::to_string(msi_bands) + " and " + std::to_string(hsi_bands));
  }
  Eigen::MatrixXd r = Eigen::MatrixXd::Zero(msi_bands, hsi_bands);
  for (std::size_t b = 0; b < hsi_bands; ++b) {
    r(static_cast<Eigen::Index>(b * msi_bands / hsi_bands), static_cast<Eigen::Index>(b)) = 1.0;
  }
  for (Eigen::Index row = 0; row < r.rows(); ++row) r.row(row) /= r.row(row).sum();
  return r;
}

void SensorModel::validate() const {
  if (blur.size == 0 || blur.weights.size() != blur.size * blur.size) {
    throw ValueError("sensor: blur kernel storage does not match its size");
  }
  double total = 0.0;
  for (double w : blur.weights) {
    if (!std::isfinite(w) || w < 0.0) throw ValueError("sensor: blur kernel entries must be >= 0");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-12) {
    throw ValueError("sensor: blur kernel sums to " + std::to_string(total) + ", expected 1");
  }
  if (decim_factor == 0) throw ValueError("sensor: decimation factor must be positive");
  if (decim_offset >= decim_factor) {
    throw ValueError("sensor: decimation offset must lie in [0, factor)");
  }
  if (srf.rows() == 0 || srf.cols() == 0) throw ValueError("sensor: spectral response is empty");
  for (Eigen::Index row = 0; row < srf.rows(); ++row) {
    if (!srf.row(row).allFinite() || (srf.row(row).array() < 0.0).any()) {
      throw ValueError("sensor: spectral response entries must be finite and >= 0");
    }
    const double s = srf.row(row).sum();
    if (std::abs(s - 1.0) > 1e-12) {
      throw ValueError("sensor: spectral response row " + std::to_string(row) + " sums to " +
                       std::to_string(s));
    }
  }
}

void SensorModel::validate_for(std::size_t rows, std::size_t cols) const {
  validate();
  if (rows % decim_factor != 0 || cols % decim_factor != 0) {
    throw DimensionError("sensor: decimation factor " + std::to_string(decim_factor) +
                         " does not divide spatial dims " + std::to_string(rows) + "x" +
                         std::to_string(cols));
  }
}

SensorModel make_sensor(const SensorParams& params, std::size_t hsi_bands) {
  SensorModel s;
  s.blur = params.kernel_size == 1 ? identity_kernel()
                                   : gaussian_kernel(params.kernel_size, params.kernel_sigma);
  s.decim_factor = params.decim_factor;
  s.decim_offset = params.decim_offset;
  s.srf = band_average_srf(params.msi_bands, hsi_bands);
  s.validate();
  return s;
}

}  // namespace difiv
