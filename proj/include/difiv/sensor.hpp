#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Dense>

#include "difiv/image.hpp"

namespace difiv {

enum class BlurBoundary { kCircular };

/// Square 2-D blur kernel, row-major. Entries are nonnegative and sum to one.
struct BlurKernel {
  std::size_t size = 1;
  std::vector<double> weights{1.0};

  double operator()(std::size_t a, std::size_t b) const { return weights[a * size + b]; }
  // Offset of the kernel origin: output (i, j) gathers z(i - a + center, j - b + center).
  std::ptrdiff_t center() const { return static_cast<std::ptrdiff_t>((size - 1) / 2); }
};

BlurKernel identity_kernel();
// size x size samples of an isotropic Gaussian centred on the kernel grid, normalized.
BlurKernel gaussian_kernel(std::size_t size, double sigma);

// Row-stochastic msi_bands x hsi_bands matrix of contiguous equal-width
// band-averaging windows: hyperspectral band b goes to window floor(b * Lm / Lh).
Eigen::MatrixXd band_average_srf(std::size_t msi_bands, std::size_t hsi_bands);

/// The degradation triple of the observation model: blur, decimation, and
/// the spectral response of the multispectral sensor.
struct SensorModel {
  BlurKernel blur = identity_kernel();
  std::size_t decim_factor = 1;
  std::size_t decim_offset = 0;
  Eigen::MatrixXd srf;  // Lm x Lh
  BlurBoundary boundary = BlurBoundary::kCircular;

  std::size_t hsi_bands() const { return static_cast<std::size_t>(srf.cols()); }
  std::size_t msi_bands() const { return static_cast<std::size_t>(srf.rows()); }

  // Throws ValueError when kernel/srf normalization or decimation parameters are invalid.
  void validate() const;
  // Additionally checks that rows and cols are multiples of the decimation factor.
  void validate_for(std::size_t rows, std::size_t cols) const;
};

struct SensorParams {
  std::size_t kernel_size = 8;
  double kernel_sigma = 4.0;
  std::size_t decim_factor = 4;
  std::size_t decim_offset = 0;
  std::size_t msi_bands = 10;
};

SensorModel make_sensor(const SensorParams& params, std::size_t hsi_bands);

}  // namespace difiv
