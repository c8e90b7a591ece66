#include "difiv/scene.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "difiv/errors.hpp"

namespace difiv {
namespace {

std::vector<double> smooth_spectrum(const std::vector<double>& wl, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double lo = wl.front();
  const double hi = wl.back();
  std::vector<double> s(wl.size(), 0.1 + 0.2 * unit(rng));
  const int bumps = 2 + static_cast<int>(unit(rng) * 2.0);
  for (int k = 0; k < bumps; ++k) {
    const double centre = lo + (hi - lo) * unit(rng);
    const double width = 0.15 + 0.45 * unit(rng);
    const double amp = 0.2 + 0.5 * unit(rng);
    for (std::size_t b = 0; b < wl.size(); ++b) {
      const double t = (wl[b] - centre) / width;
      s[b] += amp * std::exp(-0.5 * t * t);
    }
  }
  const double peak = *std::max_element(s.begin(), s.end());
  for (double& v : s) v = std::clamp(v / peak * 0.95, 0.02, 1.0);
  return s;
}

}  // namespace

HyperImage synthetic_scene(const SceneParams& p, std::uint64_t seed) {
  if (p.rows == 0 || p.cols == 0 || p.bands == 0 || p.endmembers == 0) {
    throw ValueError("synthetic_scene: all dimensions must be positive");
  }
  if (!(p.max_wavelength > p.min_wavelength)) {
    throw ValueError("synthetic_scene: wavelength range is empty");
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  std::vector<double> wl(p.bands);
  for (std::size_t b = 0; b < p.bands; ++b) {
    wl[b] = p.bands == 1 ? p.min_wavelength
                         : p.min_wavelength + (p.max_wavelength - p.min_wavelength) *
                                                  static_cast<double>(b) /
                                                  static_cast<double>(p.bands - 1);
  }

  std::vector<std::vector<double>> spectra;
  for (std::size_t e = 0; e < p.endmembers; ++e) spectra.push_back(smooth_spectrum(wl, rng));

  const std::size_t n = p.rows * p.cols;
  const double rows = static_cast<double>(p.rows);
  const double cols = static_cast<double>(p.cols);
  std::vector<std::vector<double>> abund(p.endmembers, std::vector<double>(n, 0.05));
  for (std::size_t e = 0; e < p.endmembers; ++e) {
    auto& a = abund[e];
    // Soft blobs.
    for (int k = 0; k < 3; ++k) {
      const double ci = rows * unit(rng);
      const double cj = cols * unit(rng);
      const double rad = (0.08 + 0.2 * unit(rng)) * std::min(rows, cols);
      for (std::size_t i = 0; i < p.rows; ++i) {
        for (std::size_t j = 0; j < p.cols; ++j) {
          const double di = (static_cast<double>(i) - ci) / rad;
          const double dj = (static_cast<double>(j) - cj) / rad;
          a[i * p.cols + j] += std::exp(-0.5 * (di * di + dj * dj));
        }
      }
    }
    // Sharp-edged rectangle and disc.
    const double r0 = rows * unit(rng) * 0.7;
    const double c0 = cols * unit(rng) * 0.7;
    const double rh = rows * (0.1 + 0.25 * unit(rng));
    const double cw = cols * (0.1 + 0.25 * unit(rng));
    const double di_c = rows * unit(rng);
    const double dj_c = cols * unit(rng);
    const double drad = (0.06 + 0.12 * unit(rng)) * std::min(rows, cols);
    for (std::size_t i = 0; i < p.rows; ++i) {
      for (std::size_t j = 0; j < p.cols; ++j) {
        const double y = static_cast<double>(i);
        const double x = static_cast<double>(j);
        if (y >= r0 && y < r0 + rh && x >= c0 && x < c0 + cw) a[i * p.cols + j] += 1.5;
        if (std::hypot(y - di_c, x - dj_c) < drad) a[i * p.cols + j] += 2.0;
      }
    }
  }
  for (std::size_t k = 0; k < n; ++k) {
    double total = 0.0;
    for (const auto& a : abund) total += a[k];
    for (auto& a : abund) a[k] /= total;
  }

  HyperImage z(Shape{p.bands, p.rows, p.cols});
  for (std::size_t b = 0; b < p.bands; ++b) {
    auto dst = z.band(b);
    for (std::size_t e = 0; e < p.endmembers; ++e) {
      for (std::size_t k = 0; k < n; ++k) dst[k] += spectra[e][b] * abund[e][k];
    }
  }
  z.set_wavelengths(std::move(wl));
  return z;
}

HyperImage apply_variability(const HyperImage& z, const VariabilityParams& v, std::uint64_t seed) {
  require_finite(z, "apply_variability");
  if (v.scaling_amplitude < 0.0 || v.patch_amplitude < 0.0 || !(v.patch_radius > 0.0)) {
    throw ValueError("apply_variability: amplitudes must be >= 0 and radius > 0");
  }
  HyperImage out = z;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double L = static_cast<double>(std::max<std::size_t>(z.bands(), 2) - 1);
  const double rows = static_cast<double>(z.rows());
  const double cols = static_cast<double>(z.cols());

  if (v.scaling_amplitude > 0.0) {
    const double phase = 2.0 * std::numbers::pi * unit(rng);
    const double cycles = 0.5 + unit(rng);
    const double sphase = 2.0 * std::numbers::pi * unit(rng);
    for (std::size_t b = 0; b < z.bands(); ++b) {
      const double spectral =
          std::cos(2.0 * std::numbers::pi * cycles * static_cast<double>(b) / L + phase);
      for (std::size_t i = 0; i < z.rows(); ++i) {
        for (std::size_t j = 0; j < z.cols(); ++j) {
          const double spatial =
              0.75 + 0.25 * std::cos(std::numbers::pi * (static_cast<double>(i) / rows +
                                                         static_cast<double>(j) / cols) +
                                     sphase);
          out(b, i, j) *= 1.0 + v.scaling_amplitude * spectral * spatial;
        }
      }
    }
  }

  if (v.patch_amplitude > 0.0) {
    const double radius = v.patch_radius * std::min(rows, cols);
    const double ci = radius + (rows - 2.0 * radius) * unit(rng);
    const double cj = radius + (cols - 2.0 * radius) * unit(rng);
    const double centre = unit(rng);
    std::vector<double> spectrum(z.bands());
    for (std::size_t b = 0; b < z.bands(); ++b) {
      const double t = (static_cast<double>(b) / L - centre) / 0.35;
      spectrum[b] = v.patch_amplitude * (0.3 + 0.7 * std::exp(-0.5 * t * t));
    }
    for (std::size_t i = 0; i < z.rows(); ++i) {
      for (std::size_t j = 0; j < z.cols(); ++j) {
        if (std::hypot(static_cast<double>(i) - ci, static_cast<double>(j) - cj) >= radius) continue;
        for (std::size_t b = 0; b < z.bands(); ++b) out(b, i, j) += spectrum[b];
      }
    }
  }

  for (double& s : out.data()) s = std::max(s, 0.0);
  return out;
}

}  // namespace difiv
