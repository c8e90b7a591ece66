#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "difiv/image.hpp"
#include "difiv/metrics.hpp"

namespace difiv {

// HSC container: "HSC1", u16 version, u32 bands/rows/cols, u8 wavelength
// flag, optional f64 wavelengths, then f32 samples band-sequential. All
// integers and floats little-endian.
inline constexpr std::uint16_t kHscVersion = 1;
inline constexpr std::size_t kHscHeaderBytes = 19;

std::vector<std::uint8_t> encode_hsc(const HyperImage& img);
// Throws FormatError with the byte offset of the first inconsistency.
HyperImage decode_hsc(std::span<const std::uint8_t> bytes);

// Samples are stored as f32; values are rounded to the nearest float.
void write_hsc(const HyperImage& img, const std::filesystem::path& path);
HyperImage read_hsc(const std::filesystem::path& path);

// Writes to a sibling temporary file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_file_atomic(const std::filesystem::path& path, const std::string& text);
std::vector<std::uint8_t> read_file(const std::filesystem::path& path);

// Linear-interpolation quantile of every sample in the cube.
double cube_quantile(const HyperImage& img, double q);
// Divides every sample by cube_quantile(img, q). Throws ValueError on a zero quantile.
HyperImage quantile_normalize(const HyperImage& img, double q);

enum class CompositeMode { kVisible, kInfrared };

struct RenderReport {
  std::size_t band_r = 0, band_g = 0, band_b = 0;
  std::vector<std::string> warnings;
};

// Band indices nearest to the mode's target wavelengths, in R, G, B order.
RenderReport select_composite_bands(const HyperImage& img, CompositeMode mode);
// 8-bit RGB, row-major interleaved, after 0.999-quantile normalization and clipping.
std::vector<std::uint8_t> composite_rgb(const HyperImage& img, CompositeMode mode,
                                        RenderReport* report = nullptr);
// Writes composite_rgb as a PNG file.
RenderReport render_composite(const HyperImage& img, CompositeMode mode,
                              const std::filesystem::path& path);
void write_png_rgb(std::span<const std::uint8_t> rgb, std::size_t rows, std::size_t cols,
                   const std::filesystem::path& path);

// "key=value" lines; infinite PSNR is written as "inf".
std::string report_to_text(const MetricReport& r);
MetricReport report_from_text(const std::string& text);
nlohmann::json report_to_json(const MetricReport& r);
MetricReport report_from_json(const nlohmann::json& j);

}  // namespace difiv
