#include "difiv/io.hpp"

#include <png.h>

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <sstream>
#include <system_error>

#include "difiv/errors.hpp"

namespace difiv {
namespace {

constexpr std::array<std::uint8_t, 4> kHscMagic{'H', 'S', 'C', '1'};

template <class T>
void put_le(std::vector<std::uint8_t>& out, T value) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
                               std::conditional_t<sizeof(T) == 4, std::uint32_t,
                                                  std::conditional_t<sizeof(T) == 2, std::uint16_t,
                                                                     std::uint8_t>>>;
  const U bits = std::bit_cast<U>(value);
  for (std::size_t k = 0; k < sizeof(T); ++k) out.push_back(static_cast<std::uint8_t>(bits >> (8 * k)));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  template <class T>
  T get(const char* field) {
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
                                 std::conditional_t<sizeof(T) == 4, std::uint32_t,
                                                    std::conditional_t<sizeof(T) == 2, std::uint16_t,
                                                                       std::uint8_t>>>;
    need(sizeof(T), field);
    U bits = 0;
    for (std::size_t k = 0; k < sizeof(T); ++k) bits |= static_cast<U>(U(bytes_[pos_ + k]) << (8 * k));
    pos_ += sizeof(T);
    return std::bit_cast<T>(bits);
  }

  void need(std::uint64_t n, const char* what) const {
    if (bytes_.size() - pos_ < n) {
      throw FormatError("truncated " + std::string(what) + ": expected " + std::to_string(n) +
                            " bytes, found " + std::to_string(bytes_.size() - pos_),
                        pos_);
    }
  }

  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_hsc(const HyperImage& img) {
  if (img.empty()) throw DimensionError("write_hsc: empty image");
  constexpr auto kMax = std::numeric_limits<std::uint32_t>::max();
  if (img.bands() > kMax || img.rows() > kMax || img.cols() > kMax) {
    throw DimensionError("write_hsc: dimensions exceed 32 bits: " + img.shape().str());
  }
  require_finite(img, "write_hsc");
  std::vector<std::uint8_t> out;
  out.reserve(kHscHeaderBytes + 8 * img.wavelengths().size() + 4 * img.size());
  for (const auto c : kHscMagic) out.push_back(static_cast<std::uint8_t>(c));
  put_le<std::uint16_t>(out, kHscVersion);
  put_le(out, static_cast<std::uint32_t>(img.bands()));
  put_le(out, static_cast<std::uint32_t>(img.rows()));
  put_le(out, static_cast<std::uint32_t>(img.cols()));
  put_le<std::uint8_t>(out, img.has_wavelengths() ? 1 : 0);
  for (double w : img.wavelengths()) put_le(out, w);
  for (double v : img.data()) {
    const auto f = static_cast<float>(v);
    if (!std::isfinite(f)) throw NumericalError("write_hsc: sample overflows 32-bit float");
    put_le(out, f);
  }
  return out;
}

HyperImage decode_hsc(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  r.need(kHscMagic.size(), "magic");
  for (std::size_t k = 0; k < kHscMagic.size(); ++k) {
    if (r.get<std::uint8_t>("magic") != kHscMagic[k]) throw FormatError("bad magic, expected HSC1", 0);
  }
  const std::size_t version_at = r.pos();
  const auto version = r.get<std::uint16_t>("version");
  if (version != kHscVersion) {
    throw FormatError("unsupported version " + std::to_string(version), version_at);
  }
  const std::size_t dims_at = r.pos();
  const std::uint64_t bands = r.get<std::uint32_t>("bands");
  const std::uint64_t rows = r.get<std::uint32_t>("rows");
  const std::uint64_t cols = r.get<std::uint32_t>("cols");
  if (bands == 0 || rows == 0 || cols == 0) {
    throw FormatError("zero dimension in header " + std::to_string(bands) + "x" +
                          std::to_string(rows) + "x" + std::to_string(cols),
                      dims_at);
  }
  const std::size_t flag_at = r.pos();
  const auto flag = r.get<std::uint8_t>("wavelength flag");
  if (flag > 1) throw FormatError("wavelength flag must be 0 or 1, got " + std::to_string(flag), flag_at);

  std::vector<double> wavelengths;
  if (flag == 1) {
    const std::size_t wl_at = r.pos();
    r.need(8 * bands, "wavelength list");
    wavelengths.resize(bands);
    for (auto& w : wavelengths) w = r.get<double>("wavelength");
    for (std::size_t b = 0; b < wavelengths.size(); ++b) {
      if (!std::isfinite(wavelengths[b]) || (b > 0 && !(wavelengths[b] > wavelengths[b - 1]))) {
        throw FormatError("wavelengths must be finite and strictly increasing", wl_at + 8 * b);
      }
    }
  }

  // 3 x 32-bit product fits in 96 bits; reject anything past 2^62 bytes first.
  const std::uint64_t pixels = rows * cols;
  if (pixels > (std::uint64_t{1} << 60) / bands) {
    throw FormatError("declared payload is too large", dims_at);
  }
  const std::uint64_t count = bands * pixels;
  const std::size_t payload_at = r.pos();
  r.need(4 * count, "payload");
  if (r.remaining() != 4 * count) {
    throw FormatError("trailing data: expected " + std::to_string(4 * count) +
                          " payload bytes, found " + std::to_string(r.remaining()),
                      payload_at + 4 * count);
  }
  std::vector<double> data(count);
  for (std::size_t k = 0; k < count; ++k) {
    const float f = r.get<float>("sample");
    if (!std::isfinite(f)) throw FormatError("non-finite sample", payload_at + 4 * k);
    data[k] = f;
  }
  return HyperImage(Shape{bands, rows, cols}, std::move(data), std::move(wavelengths));
}

void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open " + tmp.string() + " for writing");
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    f.flush();
    if (!f) {
      f.close();
      std::error_code ec;
      std::filesystem::remove(tmp, ec);
      throw IoError("write failed for " + tmp.string());
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw IoError("cannot replace " + path.string() + ": " + ec.message());
  }
}

void write_file_atomic(const std::filesystem::path& path, const std::string& text) {
  write_file_atomic(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (f.bad()) throw IoError("read failed for " + path.string());
  return bytes;
}

void write_hsc(const HyperImage& img, const std::filesystem::path& path) {
  write_file_atomic(path, encode_hsc(img));
}

HyperImage read_hsc(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  try {
    return decode_hsc(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + std::string(e.what()).substr(0, std::string(e.what()).rfind(" (at")),
                      e.offset());
  }
}

double cube_quantile(const HyperImage& img, double q) {
  if (!(q > 0.0 && q <= 1.0)) throw ValueError("quantile must lie in (0, 1], got " + std::to_string(q));
  if (img.empty()) throw DimensionError("quantile of an empty image");
  require_finite(img, "quantile");
  std::vector<double> v(img.data().begin(), img.data().end());
  const double h = static_cast<double>(v.size() - 1) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(lo), v.end());
  const double a = v[lo];
  if (lo + 1 >= v.size()) return a;
  const double b = *std::min_element(v.begin() + static_cast<std::ptrdiff_t>(lo) + 1, v.end());
  return a + (h - static_cast<double>(lo)) * (b - a);
}

HyperImage quantile_normalize(const HyperImage& img, double q) {
  const double s = cube_quantile(img, q);
  if (s == 0.0) throw ValueError("quantile_normalize: the " + std::to_string(q) + " quantile is zero");
  return (1.0 / s) * img;
}

RenderReport select_composite_bands(const HyperImage& img, CompositeMode mode) {
  if (!img.has_wavelengths()) throw ValueError("render: image has no wavelength metadata");
  const std::array<double, 3> targets = mode == CompositeMode::kVisible
                                            ? std::array<double, 3>{0.66, 0.56, 0.45}
                                            : std::array<double, 3>{2.20, 1.50, 0.80};
  const auto& wl = img.wavelengths();
  RenderReport rep;
  std::array<std::size_t, 3> picked{};
  for (std::size_t c = 0; c < 3; ++c) {
    std::size_t best = 0;
    for (std::size_t b = 1; b < wl.size(); ++b) {
      if (std::abs(wl[b] - targets[c]) < std::abs(wl[best] - targets[c])) best = b;
    }
    picked[c] = best;
    const double dist = std::abs(wl[best] - targets[c]);
    if (dist > 0.05) {
      std::ostringstream msg;
      msg << "render: nearest band to " << targets[c] << " um is " << wl[best] << " um";
      rep.warnings.push_back(msg.str());
    }
  }
  rep.band_r = picked[0];
  rep.band_g = picked[1];
  rep.band_b = picked[2];
  return rep;
}

std::vector<std::uint8_t> composite_rgb(const HyperImage& img, CompositeMode mode,
                                        RenderReport* report) {
  const RenderReport rep = select_composite_bands(img, mode);
  const double scale = cube_quantile(img, 0.999);
  if (scale == 0.0) throw ValueError("render: the 0.999 quantile of the image is zero");
  const std::array<std::size_t, 3> bands{rep.band_r, rep.band_g, rep.band_b};
  std::vector<std::uint8_t> rgb(3 * img.pixels());
  for (std::size_t c = 0; c < 3; ++c) {
    const auto src = img.band(bands[c]);
    for (std::size_t k = 0; k < src.size(); ++k) {
      const double v = std::clamp(src[k] / scale, 0.0, 1.0);
      rgb[3 * k + c] = static_cast<std::uint8_t>(std::lround(v * 255.0));
    }
  }
  if (report) *report = rep;
  return rgb;
}

void write_png_rgb(std::span<const std::uint8_t> rgb, std::size_t rows, std::size_t cols,
                   const std::filesystem::path& path) {
  if (rgb.size() != 3 * rows * cols || rows == 0 || cols == 0) {
    throw DimensionError("write_png: buffer does not match " + std::to_string(rows) + "x" +
                         std::to_string(cols));
  }
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(cols);
  image.height = static_cast<png_uint_32>(rows);
  image.format = PNG_FORMAT_RGB;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&image, nullptr, &size, 0, rgb.data(), 0, nullptr)) {
    throw IoError("png encoding failed: " + std::string(image.message));
  }
  std::vector<std::uint8_t> buf(size);
  if (!png_image_write_to_memory(&image, buf.data(), &size, 0, rgb.data(), 0, nullptr)) {
    throw IoError("png encoding failed: " + std::string(image.message));
  }
  buf.resize(size);
  write_file_atomic(path, buf);
}

RenderReport render_composite(const HyperImage& img, CompositeMode mode,
                              const std::filesystem::path& path) {
  RenderReport rep;
  const auto rgb = composite_rgb(img, mode, &rep);
  write_png_rgb(rgb, img.rows(), img.cols(), path);
  return rep;
}

namespace {

std::string format_double(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

double parse_double(const std::string& s, const std::string& key) {
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != s.size() || s.empty()) throw ValueError("report: bad value for " + key + ": '" + s + "'");
  return v;
}

nlohmann::json number_or_inf(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

double json_number(const nlohmann::json& j, const char* key) {
  if (!j.contains(key)) throw ValueError(std::string("report: missing ") + key);
  const auto& v = j.at(key);
  if (v.is_string()) return parse_double(v.get<std::string>(), key);
  if (!v.is_number()) throw ValueError(std::string("report: ") + key + " is not a number");
  return v.get<double>();
}

}  // namespace

std::string report_to_text(const MetricReport& r) {
  std::string s;
  s += "psnr_db=" + format_double(r.psnr_db) + "\n";
  s += "sam_rad=" + format_double(r.sam_rad) + "\n";
  s += "sam_deg=" + format_double(r.sam_deg()) + "\n";
  s += "ergas=" + format_double(r.ergas) + "\n";
  s += "uiqi=" + format_double(r.uiqi) + "\n";
  return s;
}

MetricReport report_from_text(const std::string& text) {
  MetricReport r;
  std::istringstream in(text);
  std::string line;
  bool seen[4] = {false, false, false, false};
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ValueError("report: malformed line '" + line + "'");
    const std::string key = line.substr(0, eq);
    const double v = parse_double(line.substr(eq + 1), key);
    if (key == "psnr_db") {
      r.psnr_db = v, seen[0] = true;
    } else if (key == "sam_rad") {
      r.sam_rad = v, seen[1] = true;
    } else if (key == "ergas") {
      r.ergas = v, seen[2] = true;
    } else if (key == "uiqi") {
      r.uiqi = v, seen[3] = true;
    } else if (key != "sam_deg") {
      throw ValueError("report: unknown key '" + key + "'");
    }
  }
  if (!(seen[0] && seen[1] && seen[2] && seen[3])) throw ValueError("report: missing fields");
  return r;
}

nlohmann::json report_to_json(const MetricReport& r) {
  return nlohmann::json{{"psnr_db", number_or_inf(r.psnr_db)},
                        {"sam_rad", number_or_inf(r.sam_rad)},
                        {"sam_deg", number_or_inf(r.sam_deg())},
                        {"ergas", number_or_inf(r.ergas)},
                        {"uiqi", number_or_inf(r.uiqi)}};
}

MetricReport report_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ValueError("report: expected a JSON object");
  MetricReport r;
  r.psnr_db = json_number(j, "psnr_db");
  r.sam_rad = json_number(j, "sam_rad");
  r.ergas = json_number(j, "ergas");
  r.uiqi = json_number(j, "uiqi");
  return r;
}

}  // namespace difiv
