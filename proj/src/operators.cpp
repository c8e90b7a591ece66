#include "difiv/operators.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <random>
#include <string>

#include "difiv/errors.hpp"

namespace difiv {
namespace {

std::size_t wrap(std::ptrdiff_t x, std::size_t n) {
  const auto m = static_cast<std::ptrdiff_t>(n);
  return static_cast<std::size_t>(((x % m) + m) % m);
}

void check_spatial(const HyperImage& z, const SensorModel& s, const char* context) {
  if (z.empty()) throw DimensionError(std::string(context) + ": empty input");
  try {
    s.validate_for(z.rows(), z.cols());
  } catch (const DimensionError& e) {
    throw DimensionError(std::string(context) + ": " + e.what());
  }
}

double keys_weight(double x) {
  constexpr double a = -0.5;
  x = std::abs(x);
  if (x <= 1.0) return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
  if (x < 2.0) return ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a;
  return 0.0;
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  // splitmix64 finalizer over (seed, stream)
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

HyperImage spatial_degrade(const HyperImage& z, const SensorModel& s) {
  check_spatial(z, s, "spatial_degrade");
  require_finite(z, "spatial_degrade");
  const std::size_t d = s.decim_factor;
  const std::size_t lr_rows = z.rows() / d;
  const std::size_t lr_cols = z.cols() / d;
  const std::size_t k = s.blur.size;
  const std::ptrdiff_t c = s.blur.center();
  HyperImage out(Shape{z.bands(), lr_rows, lr_cols});
  for (std::size_t b = 0; b < z.bands(); ++b) {
    for (std::size_t I = 0; I < lr_rows; ++I) {
      const auto i = static_cast<std::ptrdiff_t>(s.decim_offset + d * I);
      for (std::size_t J = 0; J < lr_cols; ++J) {
        const auto j = static_cast<std::ptrdiff_t>(s.decim_offset + d * J);
        double acc = 0.0;
        for (std::size_t a = 0; a < k; ++a) {
          const std::size_t row = wrap(i - static_cast<std::ptrdiff_t>(a) + c, z.rows());
          for (std::size_t bb = 0; bb < k; ++bb) {
            const std::size_t col = wrap(j - static_cast<std::ptrdiff_t>(bb) + c, z.cols());
            acc += s.blur(a, bb) * z(b, row, col);
          }
        }
        out(b, I, J) = acc;
      }
    }
  }
  return out;
}

HyperImage spatial_degrade_adjoint(const HyperImage& y, const SensorModel& s, std::size_t hr_rows,
                                   std::size_t hr_cols) {
  s.validate_for(hr_rows, hr_cols);
  const std::size_t d = s.decim_factor;
  if (y.rows() != hr_rows / d || y.cols() != hr_cols / d || y.bands() == 0) {
    throw DimensionError("spatial_degrade_adjoint: input " + y.shape().str() +
                         " is not the degraded shape of " + std::to_string(hr_rows) + "x" +
                         std::to_string(hr_cols));
  }
  require_finite(y, "spatial_degrade_adjoint");
  const std::size_t k = s.blur.size;
  const std::ptrdiff_t c = s.blur.center();
  HyperImage out(Shape{y.bands(), hr_rows, hr_cols});
  for (std::size_t b = 0; b < y.bands(); ++b) {
    for (std::size_t I = 0; I < y.rows(); ++I) {
      const auto i = static_cast<std::ptrdiff_t>(s.decim_offset + d * I);
      for (std::size_t J = 0; J < y.cols(); ++J) {
        const auto j = static_cast<std::ptrdiff_t>(s.decim_offset + d * J);
        const double v = y(b, I, J);
        for (std::size_t a = 0; a < k; ++a) {
          const std::size_t row = wrap(i - static_cast<std::ptrdiff_t>(a) + c, hr_rows);
          for (std::size_t bb = 0; bb < k; ++bb) {
            const std::size_t col = wrap(j - static_cast<std::ptrdiff_t>(bb) + c, hr_cols);
            out(b, row, col) += s.blur(a, bb) * v;
          }
        }
      }
    }
  }
  return out;
}

HyperImage spectral_degrade(const HyperImage& z, const SensorModel& s) {
  if (z.bands() != s.hsi_bands() || z.empty()) {
    throw DimensionError("spectral_degrade: input has " + std::to_string(z.bands()) +
                         " bands, spectral response expects " + std::to_string(s.hsi_bands()));
  }
  require_finite(z, "spectral_degrade");
  const std::size_t n = z.pixels();
  HyperImage out(Shape{s.msi_bands(), z.rows(), z.cols()});
  for (std::size_t m = 0; m < s.msi_bands(); ++m) {
    auto dst = out.band(m);
    for (std::size_t h = 0; h < s.hsi_bands(); ++h) {
      const double r = s.srf(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(h));
      if (r == 0.0) continue;
      const auto src = z.band(h);
      for (std::size_t p = 0; p < n; ++p) dst[p] += r * src[p];
    }
  }
  return out;
}

HyperImage spectral_degrade_adjoint(const HyperImage& y, const SensorModel& s) {
  if (y.bands() != s.msi_bands() || y.empty()) {
    throw DimensionError("spectral_degrade_adjoint: input has " + std::to_string(y.bands()) +
                         " bands, spectral response expects " + std::to_string(s.msi_bands()));
  }
  require_finite(y, "spectral_degrade_adjoint");
  const std::size_t n = y.pixels();
  HyperImage out(Shape{s.hsi_bands(), y.rows(), y.cols()});
  for (std::size_t h = 0; h < s.hsi_bands(); ++h) {
    auto dst = out.band(h);
    for (std::size_t m = 0; m < s.msi_bands(); ++m) {
      const double r = s.srf(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(h));
      if (r == 0.0) continue;
      const auto src = y.band(m);
      for (std::size_t p = 0; p < n; ++p) dst[p] += r * src[p];
    }
  }
  return out;
}

namespace {

void check_gradient_input(const HyperImage& z, const char* context) {
  if (z.bands() == 0) throw DimensionError(std::string(context) + ": no bands");
  if (z.rows() < 2 || z.cols() < 2) {
    throw DimensionError(std::string(context) + ": spatial Laplacian needs rows, cols >= 2, got " +
                         z.shape().str());
  }
  require_finite(z, context);
}

// Neighbour offsets of the 6-point stencil, clamped to the grid.
struct Neighbours {
  std::array<std::size_t, 6> idx;
};

Neighbours neighbours(const Shape& s, std::size_t b, std::size_t i, std::size_t j) {
  auto at = [&](std::size_t bb, std::size_t ii, std::size_t jj) {
    return (bb * s.rows + ii) * s.cols + jj;
  };
  return Neighbours{{at(b, i == 0 ? 0 : i - 1, j), at(b, i + 1 == s.rows ? i : i + 1, j),
                     at(b, i, j == 0 ? 0 : j - 1), at(b, i, j + 1 == s.cols ? j : j + 1),
                     at(b == 0 ? 0 : b - 1, i, j), at(b + 1 == s.bands ? b : b + 1, i, j)}};
}

}  // namespace

HyperImage apply_gradient(const HyperImage& z, const GradientOperator&) {
  check_gradient_input(z, "apply_gradient");
  const Shape& s = z.shape();
  HyperImage out(s);
  const auto in = z.data();
  auto o = out.data();
  std::size_t k = 0;
  for (std::size_t b = 0; b < s.bands; ++b) {
    for (std::size_t i = 0; i < s.rows; ++i) {
      for (std::size_t j = 0; j < s.cols; ++j, ++k) {
        const Neighbours nb = neighbours(s, b, i, j);
        double acc = -6.0 * in[k];
        for (std::size_t n : nb.idx) acc += in[n];
        o[k] = acc;
      }
    }
  }
  return out;
}

HyperImage apply_gradient_adjoint(const HyperImage& d, const GradientOperator&) {
  check_gradient_input(d, "apply_gradient_adjoint");
  const Shape& s = d.shape();
  HyperImage out(s);
  const auto in = d.data();
  auto o = out.data();
  std::size_t k = 0;
  for (std::size_t b = 0; b < s.bands; ++b) {
    for (std::size_t i = 0; i < s.rows; ++i) {
      for (std::size_t j = 0; j < s.cols; ++j, ++k) {
        const Neighbours nb = neighbours(s, b, i, j);
        o[k] -= 6.0 * in[k];
        for (std::size_t n : nb.idx) o[n] += in[k];
      }
    }
  }
  return out;
}

HyperImage add_noise_snr(const HyperImage& z, double snr_db, std::uint64_t seed) {
  if (std::isnan(snr_db) || snr_db == -std::numeric_limits<double>::infinity()) {
    throw ValueError("add_noise_snr: snr_db must be finite or +inf");
  }
  require_finite(z, "add_noise_snr");
  if (snr_db == kNoiseDisabled) return z;
  const double energy = squared_norm(z);
  if (energy == 0.0) throw ValueError("add_noise_snr: SNR is undefined for an all-zero image");
  const double variance =
      energy / (static_cast<double>(z.size()) * std::pow(10.0, snr_db / 10.0));
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, std::sqrt(variance));
  HyperImage out = z;
  for (double& v : out.data()) v += gauss(rng);
  return out;
}

std::pair<HyperImage, HyperImage> simulate_pair(const HyperImage& z_h, const HyperImage& z_m,
                                                const SensorModel& s, double snr_db,
                                                std::uint64_t seed) {
  require_same_shape(z_h, z_m, "simulate_pair");
  if (z_h.bands() != s.hsi_bands()) {
    throw DimensionError("simulate_pair: latent images have " + std::to_string(z_h.bands()) +
                         " bands, sensor expects " + std::to_string(s.hsi_bands()));
  }
  HyperImage y_h = add_noise_snr(spatial_degrade(z_h, s), snr_db, derive_seed(seed, 0));
  HyperImage y_m = add_noise_snr(spectral_degrade(z_m, s), snr_db, derive_seed(seed, 1));
  return {std::move(y_h), std::move(y_m)};
}

HyperImage upsample_interpolate(const HyperImage& y, std::size_t factor) {
  if (factor < 1) throw ValueError("upsample_interpolate: factor must be >= 1");
  require_finite(y, "upsample_interpolate");
  if (factor == 1) return y;
  const std::size_t rows = y.rows() * factor;
  const std::size_t cols = y.cols() * factor;
  HyperImage out(Shape{y.bands(), rows, cols});
  const double f = static_cast<double>(factor);
  auto clamp_index = [](std::ptrdiff_t x, std::size_t n) {
    return static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(x, 0, static_cast<std::ptrdiff_t>(n) - 1));
  };

  // Tap indices and weights per output row/column are shared by all bands.
  struct Taps {
    std::array<std::size_t, 4> idx;
    std::array<double, 4> w;
  };
  auto make_taps = [&](std::size_t n_out, std::size_t n_in) {
    std::vector<Taps> taps(n_out);
    for (std::size_t o = 0; o < n_out; ++o) {
      const double src = (static_cast<double>(o) + 0.5) / f - 0.5;
      const double fl = std::floor(src);
      const auto base = static_cast<std::ptrdiff_t>(fl);
      for (std::ptrdiff_t t = 0; t < 4; ++t) {
        taps[o].idx[t] = clamp_index(base - 1 + t, n_in);
        taps[o].w[t] = keys_weight(src - static_cast<double>(base - 1 + t));
      }
    }
    return taps;
  };
  const auto row_taps = make_taps(rows, y.rows());
  const auto col_taps = make_taps(cols, y.cols());

  std::vector<double> tmp(y.rows() * cols);
  for (std::size_t b = 0; b < y.bands(); ++b) {
    const auto src = y.band(b);
    const auto [lo, hi] = std::minmax_element(src.begin(), src.end());
    // Horizontal pass.
    for (std::size_t i = 0; i < y.rows(); ++i) {
      for (std::size_t j = 0; j < cols; ++j) {
        double acc = 0.0;
        for (std::size_t t = 0; t < 4; ++t) {
          acc += col_taps[j].w[t] * src[i * y.cols() + col_taps[j].idx[t]];
        }
        tmp[i * cols + j] = acc;
      }
    }
    // Vertical pass.
    for (std::size_t i = 0; i < rows; ++i) {
      for (std::size_t j = 0; j < cols; ++j) {
        double acc = 0.0;
        for (std::size_t t = 0; t < 4; ++t) acc += row_taps[i].w[t] * tmp[row_taps[i].idx[t] * cols + j];
        out(b, i, j) = std::clamp(acc, *lo, *hi);
      }
    }
  }
  if (y.has_wavelengths()) out.set_wavelengths(y.wavelengths());
  return out;
}

}  // namespace difiv
