#pragma once

#include <cstdint>

#include "difiv/image.hpp"

namespace difiv {

struct SceneParams {
  std::size_t rows = 64;
  std::size_t cols = 64;
  std::size_t bands = 20;
  std::size_t endmembers = 4;
  double min_wavelength = 0.40;  // micrometers
  double max_wavelength = 2.50;
};

// Linear-mixing scene: smooth endmember spectra weighted by abundance maps
// made of soft blobs and sharp-edged regions. Values lie in (0, 1].
HyperImage synthetic_scene(const SceneParams& params, std::uint64_t seed);

struct VariabilityParams {
  // Peak relative amplitude of a smooth multiplicative spectral scaling (0 disables).
  double scaling_amplitude = 0.0;
  // Peak amplitude of a localized additive disc-shaped patch (0 disables).
  double patch_amplitude = 0.0;
  // Patch radius as a fraction of min(rows, cols).
  double patch_radius = 0.15;
};

// Builds the multispectral-side latent image from z by applying the
// requested variability. Returns z unchanged when both amplitudes are zero.
HyperImage apply_variability(const HyperImage& z, const VariabilityParams& params,
                             std::uint64_t seed);

}  // namespace difiv
