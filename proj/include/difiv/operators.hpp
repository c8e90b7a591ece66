#pragma once

#include <cstdint>
#include <limits>
#include <utility>

#include "difiv/image.hpp"
#include "difiv/sensor.hpp"

namespace difiv {

enum class GradientMode { kSpatioSpectralLaplacian };
enum class GradientBoundary { kReflective };

/// The high-pass filter coupling the two latent images: a 6-neighbour
/// Laplacian (4 spatial + 2 spectral neighbours) with edge replication.
struct GradientOperator {
  GradientMode mode = GradientMode::kSpatioSpectralLaplacian;
  GradientBoundary boundary = GradientBoundary::kReflective;
};

inline constexpr double kNoiseDisabled = std::numeric_limits<double>::infinity();

// Z F D: per-band circular convolution with the blur kernel, then decimation
// keeping samples at offset, offset + d, ... in both spatial dimensions.
HyperImage spatial_degrade(const HyperImage& z, const SensorModel& s);
// Exact adjoint of spatial_degrade back to an hr_rows x hr_cols grid.
HyperImage spatial_degrade_adjoint(const HyperImage& y, const SensorModel& s, std::size_t hr_rows,
                                   std::size_t hr_cols);

// R Z, pixel-wise. Output has srf.rows() bands.
HyperImage spectral_degrade(const HyperImage& z, const SensorModel& s);
// R^T Y, pixel-wise.
HyperImage spectral_degrade_adjoint(const HyperImage& y, const SensorModel& s);

HyperImage apply_gradient(const HyperImage& z, const GradientOperator& g = {});
HyperImage apply_gradient_adjoint(const HyperImage& d, const GradientOperator& g = {});

// z + E with E ~ N(0, sigma^2), sigma^2 = ||z||^2 / (count * 10^(snr_db / 10)).
// snr_db == +inf disables the noise.
HyperImage add_noise_snr(const HyperImage& z, double snr_db, std::uint64_t seed);

// (Y_h, Y_m) = (spatial_degrade(z_h) + E_h, spectral_degrade(z_m) + E_m).
std::pair<HyperImage, HyperImage> simulate_pair(const HyperImage& z_h, const HyperImage& z_m,
                                                const SensorModel& s, double snr_db,
                                                std::uint64_t seed);

// Per-band bicubic (Keys, a = -0.5) upsampling by an integer factor with
// pixel-centre alignment, clipped to each band's input range.
HyperImage upsample_interpolate(const HyperImage& y, std::size_t factor);

// Independent, reproducible sub-seed for stream `stream` of a base seed.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace difiv
