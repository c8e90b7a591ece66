#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <random>

#include <png.h>

#include "difiv/config.hpp"
#include "difiv/errors.hpp"
#include "difiv/io.hpp"
#include "difiv/sensor.hpp"
#include "oracles.hpp"

using namespace difiv;
namespace fs = std::filesystem;

namespace {

fs::path temp_path(const std::string& name) {
  return fs::temp_directory_path() / ("difiv_io_" + name);
}

// Cube whose samples are exact in f32, so a round trip must be bit-exact.
HyperImage float_cube(const Shape& s, std::uint64_t seed, bool with_wavelengths) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(-10.0f, 10.0f);
  std::vector<double> d(s.size());
  for (auto& v : d) v = u(rng);
  std::vector<double> wl;
  if (with_wavelengths) {
    double w = 0.4;
    for (std::size_t b = 0; b < s.bands; ++b) wl.push_back(w += 0.01 + 0.1 * std::generate_canonical<double, 53>(rng));
  }
  return HyperImage(s, std::move(d), std::move(wl));
}

std::vector<std::uint8_t> read_png(const fs::path& p, std::size_t& rows, std::size_t& cols) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, p.c_str())) throw std::runtime_error(image.message);
  image.format = PNG_FORMAT_RGB;
  std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buf.data(), 0, nullptr)) throw std::runtime_error(image.message);
  rows = image.height;
  cols = image.width;
  return buf;
}

template <class F>
void expect_format_error(F&& f, std::uint64_t offset, const std::string& needle) {
  try {
    f();
    ADD_FAILURE() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), offset) << e.what();
    EXPECT_NE(std::string(e.what()).find(needle), std::string::npos) << e.what();
  }
}

void put_u32(std::vector<std::uint8_t>& b, std::size_t at, std::uint32_t v) {
  for (int k = 0; k < 4; ++k) b[at + static_cast<std::size_t>(k)] = static_cast<std::uint8_t>(v >> (8 * k));
}

}  // namespace

// --- HSC container ---------------------------------------------------------------

TEST(Hsc, HeaderLayout) {
  const HyperImage img = float_cube({2, 3, 4}, 1, false);
  const auto b = encode_hsc(img);
  ASSERT_EQ(b.size(), kHscHeaderBytes + 4 * 24);
  EXPECT_EQ(std::string(b.begin(), b.begin() + 4), "HSC1");
  EXPECT_EQ(b[4], 1);
  EXPECT_EQ(b[5], 0);
  EXPECT_EQ(b[6], 2);
  EXPECT_EQ(b[10], 3);
  EXPECT_EQ(b[14], 4);
  EXPECT_EQ(b[18], 0);
  float first = 0.0f;
  std::memcpy(&first, &b[19], 4);  // host is little-endian in every supported build
  EXPECT_EQ(static_cast<double>(first), img.data()[0]);
}

TEST(Hsc, RoundTripBitExactWithWavelengths) {
  for (std::uint64_t s = 0; s < 20; ++s) {
    const Shape sh{1 + s % 5, 1 + s % 7, 2 + s % 3};
    const HyperImage img = float_cube(sh, s, s % 2 == 0);
    const HyperImage back = decode_hsc(encode_hsc(img));
    ASSERT_EQ(back.shape(), img.shape());
    EXPECT_EQ(back.wavelengths(), img.wavelengths());
    for (std::size_t k = 0; k < img.size(); ++k) {
      EXPECT_EQ(std::bit_cast<std::uint64_t>(back.data()[k]), std::bit_cast<std::uint64_t>(img.data()[k]));
    }
  }
}

TEST(Hsc, FileRoundTripAndSingleRounding) {
  const auto path = temp_path("rt.hsc");
  HyperImage img(1, 1, 3);
  img(0, 0, 0) = 0.1;
  img(0, 0, 1) = 1.0 / 3.0;
  img(0, 0, 2) = -7.0;
  write_hsc(img, path);
  EXPECT_FALSE(fs::exists(path.string() + ".tmp"));
  const HyperImage back = read_hsc(path);
  EXPECT_EQ(back(0, 0, 0), static_cast<double>(0.1f));
  EXPECT_EQ(back(0, 0, 1), static_cast<double>(static_cast<float>(1.0 / 3.0)));
  EXPECT_EQ(back(0, 0, 2), -7.0);
  // A second write-read cycle is the identity.
  write_hsc(back, path);
  const HyperImage again = read_hsc(path);
  EXPECT_EQ(std::vector<double>(again.data().begin(), again.data().end()),
            std::vector<double>(back.data().begin(), back.data().end()));
  fs::remove(path);
}

TEST(Hsc, TruncationReportsExpectedAndFound) {
  const auto b = encode_hsc(float_cube({2, 2, 2}, 3, false));
  const std::vector<std::uint8_t> cut(b.begin(), b.end() - 3);
  expect_format_error([&] { decode_hsc(cut); }, kHscHeaderBytes, "expected 32 bytes, found 29");
  const std::vector<std::uint8_t> tiny(b.begin(), b.begin() + 10);
  expect_format_error([&] { decode_hsc(tiny); }, 10, "truncated");
}

TEST(Hsc, RejectsMalformedHeaders) {
  const auto good = encode_hsc(float_cube({3, 2, 2}, 4, true));
  auto b = good;
  b[0] = 'X';
  expect_format_error([&] { decode_hsc(b); }, 0, "magic");

  b = good;
  b[4] = 2;
  expect_format_error([&] { decode_hsc(b); }, 4, "version");

  b = good;
  put_u32(b, 10, 0);
  expect_format_error([&] { decode_hsc(b); }, 6, "zero dimension");

  b = good;
  b[18] = 2;
  expect_format_error([&] { decode_hsc(b); }, 18, "flag");

  b = good;
  std::memcpy(&b[19 + 8], &b[19], 8);  // second wavelength equals the first
  expect_format_error([&] { decode_hsc(b); }, 19 + 8, "increasing");

  b = good;
  b.push_back(0);
  expect_format_error([&] { decode_hsc(b); }, good.size(), "trailing");

  b = good;
  const float nan = std::numeric_limits<float>::quiet_NaN();
  std::memcpy(&b[19 + 24 + 4], &nan, 4);
  expect_format_error([&] { decode_hsc(b); }, 19 + 24 + 4, "non-finite");

  b = good;
  put_u32(b, 6, 0xFFFFFFFFu);
  put_u32(b, 10, 0xFFFFFFFFu);
  put_u32(b, 14, 0xFFFFFFFFu);
  b[18] = 0;
  EXPECT_THROW(decode_hsc(b), FormatError);
}

TEST(Hsc, ReadErrorsCarryPath) {
  const auto path = temp_path("bad.hsc");
  write_file_atomic(path, std::string("HSC0xxxxxxxxxxxxxxxxxxxx"));
  try {
    read_hsc(path);
    ADD_FAILURE();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find(path.string()), std::string::npos);
    EXPECT_EQ(e.offset(), 0u);
  }
  fs::remove(path);
  EXPECT_THROW(read_hsc(path), IoError);
}

TEST(Hsc, WriteRejectsUnrepresentable) {
  HyperImage big(1, 1, 1, 1e300);
  EXPECT_THROW(encode_hsc(big), NumericalError);
  EXPECT_THROW(encode_hsc(HyperImage{}), DimensionError);
}

// --- quantiles and rendering ------------------------------------------------------

TEST(Quantile, MatchesSortOracle) {
  for (std::uint64_t s = 0; s < 5; ++s) {
    const HyperImage img = oracle::random_cube({3, 7, 5 + s}, s);
    const std::vector<double> v(img.data().begin(), img.data().end());
    for (double q : {0.001, 0.25, 0.5, 0.9, 0.999, 1.0}) {
      EXPECT_NEAR(cube_quantile(img, q), oracle::quantile(v, q), 1e-15) << "q=" << q;
    }
  }
}

TEST(Quantile, ConstantAndMaxAndErrors) {
  const HyperImage c(2, 4, 4, 3.0);
  const HyperImage n = quantile_normalize(c, 0.999);
  for (double v : n.data()) EXPECT_EQ(v, 1.0);
  const HyperImage r = oracle::random_cube({2, 5, 5}, 9);
  EXPECT_EQ(cube_quantile(r, 1.0), *std::max_element(r.data().begin(), r.data().end()));
  EXPECT_THROW(cube_quantile(r, 0.0), ValueError);
  EXPECT_THROW(cube_quantile(r, 1.5), ValueError);
  EXPECT_THROW(quantile_normalize(HyperImage(1, 2, 2, 0.0), 0.5), ValueError);
}

TEST(Render, BandSelection) {
  HyperImage img(5, 2, 2, 1.0);
  img.set_wavelengths({0.45, 0.56, 0.66, 0.80, 2.20});
  auto rep = select_composite_bands(img, CompositeMode::kVisible);
  EXPECT_EQ(rep.band_r, 2u);
  EXPECT_EQ(rep.band_g, 1u);
  EXPECT_EQ(rep.band_b, 0u);
  EXPECT_TRUE(rep.warnings.empty());
  rep = select_composite_bands(img, CompositeMode::kInfrared);
  EXPECT_EQ(rep.band_r, 4u);
  EXPECT_EQ(rep.band_g, 3u);  // 1.50 is 0.70 from 0.80; warned
  EXPECT_EQ(rep.band_b, 3u);
  EXPECT_EQ(rep.warnings.size(), 1u);
  EXPECT_THROW(select_composite_bands(HyperImage(3, 2, 2, 1.0), CompositeMode::kVisible), ValueError);
}

TEST(Render, RedBandSaturates) {
  // Only the 0.66 um band is nonzero: pure red after normalization.
  HyperImage img(3, 4, 4, 0.0);
  img.set_wavelengths({0.45, 0.56, 0.66});
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 0; j < 4; ++j) img(2, i, j) = 1.0;
  }
  const auto rgb = composite_rgb(img, CompositeMode::kVisible);
  for (std::size_t k = 0; k < 16; ++k) {
    EXPECT_EQ(rgb[3 * k], 255);
    EXPECT_EQ(rgb[3 * k + 1], 0);
    EXPECT_EQ(rgb[3 * k + 2], 0);
  }
}

TEST(Render, KnownScalingAndPngFile) {
  // Values k/1000 for k = 1..1000: the 0.999 quantile is 0.999001.
  HyperImage img(3, 10, 100);
  img.set_wavelengths({0.45, 0.56, 0.66});
  std::size_t k = 0;
  for (std::size_t i = 0; i < 10; ++i) {
    for (std::size_t j = 0; j < 100; ++j, ++k) {
      for (std::size_t b = 0; b < 3; ++b) img(b, i, j) = static_cast<double>(k + 1) / 1000.0;
    }
  }
  std::vector<double> all(img.data().begin(), img.data().end());
  const double scale = oracle::quantile(all, 0.999);
  const auto path = temp_path("render.png");
  const RenderReport rep = render_composite(img, CompositeMode::kVisible, path);
  EXPECT_TRUE(rep.warnings.empty());
  std::size_t rows = 0, cols = 0;
  const auto rgb = read_png(path, rows, cols);
  ASSERT_EQ(rows, 10u);
  ASSERT_EQ(cols, 100u);
  for (std::size_t p = 0; p < 1000; ++p) {
    const double v = std::min(1.0, (static_cast<double>(p + 1) / 1000.0) / scale);
    EXPECT_EQ(rgb[3 * p], static_cast<std::uint8_t>(std::lround(v * 255.0))) << p;
  }
  const auto first = read_file(path);
  render_composite(img, CompositeMode::kVisible, path);
  EXPECT_EQ(read_file(path), first);
  fs::remove(path);
}

TEST(Render, ConstantCubeIsUniform) {
  HyperImage img(3, 3, 3, 0.5);
  img.set_wavelengths({0.45, 0.56, 0.66});
  for (std::uint8_t v : composite_rgb(img, CompositeMode::kVisible)) EXPECT_EQ(v, 255);
}

// --- metric reports ---------------------------------------------------------------

TEST(Report, TextAndJsonRoundTrip) {
  MetricReport r{31.234567890123456, 0.0251, 2.75, 0.9876};
  const MetricReport t = report_from_text(report_to_text(r));
  EXPECT_EQ(t.psnr_db, r.psnr_db);
  EXPECT_EQ(t.sam_rad, r.sam_rad);
  EXPECT_EQ(t.ergas, r.ergas);
  EXPECT_EQ(t.uiqi, r.uiqi);
  const MetricReport j = report_from_json(nlohmann::json::parse(report_to_json(r).dump()));
  EXPECT_EQ(j.psnr_db, r.psnr_db);
  EXPECT_EQ(j.uiqi, r.uiqi);

  r.psnr_db = kPsnrExact;
  EXPECT_NE(report_to_text(r).find("psnr_db=inf"), std::string::npos);
  EXPECT_EQ(report_to_json(r)["psnr_db"], "inf");
  EXPECT_EQ(report_from_text(report_to_text(r)).psnr_db, kPsnrExact);
  EXPECT_EQ(report_from_json(report_to_json(r)).psnr_db, kPsnrExact);
  EXPECT_THROW(report_from_text("psnr_db=1\nbogus=2\n"), ValueError);
  EXPECT_THROW(report_from_text("psnr_db=abc\n"), ValueError);
}

// --- configuration ----------------------------------------------------------------

TEST(Config, DefaultsAndPresets) {
  const RunConfig d = run_config_from_json(nlohmann::json::object());
  EXPECT_EQ(d.preset, Preset::kModerate);
  EXPECT_EQ(d.fusion.p, FusionConfig::moderate().p);
  const RunConfig s = run_config_from_json({{"preset", "significant"}, {"seed", 7}});
  EXPECT_EQ(s.fusion.p, FusionConfig::significant().p);
  EXPECT_EQ(s.fusion.lambda, FusionConfig::significant().lambda);
  EXPECT_EQ(s.seed, 7u);
  EXPECT_EQ(s.fusion.seed, 7u);
  EXPECT_EQ(s.train.seed, 7u);
  const RunConfig o = run_config_from_json({{"preset", "significant"}, {"fusion", {{"p", 1.2}}}});
  EXPECT_EQ(o.fusion.p, 1.2);
  EXPECT_EQ(o.fusion.lambda, FusionConfig::significant().lambda);
  EXPECT_THROW(parse_preset("mild"), ValueError);
}

TEST(Config, RejectsUnknownAndInvalid) {
  EXPECT_THROW(run_config_from_json({{"fusoin", nlohmann::json::object()}}), ValueError);
  EXPECT_THROW(run_config_from_json({{"fusion", {{"lamda", 1.0}}}}), ValueError);
  EXPECT_THROW(run_config_from_json({{"fusion", {{"p", "high"}}}}), ValueError);
  EXPECT_THROW(run_config_from_json({{"fusion", {{"bcd_iters", -1}}}}), ValueError);
  EXPECT_THROW(run_config_from_json({{"sensor", {{"decim_offset", 4}}}}), ValueError);
  EXPECT_THROW(run_config_from_json(nlohmann::json::array()), ValueError);
}

TEST(Config, JsonRoundTripAndInfiniteSnr) {
  RunConfig c = run_config_from_json({{"simulation", {{"snr_db", "inf"}, {"rows", 32}}}, {"seed", 3}});
  EXPECT_TRUE(std::isinf(c.simulation.snr_db));
  EXPECT_EQ(c.simulation.scene.rows, 32u);
  const RunConfig back = run_config_from_json(run_config_to_json(c));
  EXPECT_EQ(run_config_to_json(back), run_config_to_json(c));
}

TEST(Config, FileErrors) {
  const auto path = temp_path("cfg.json");
  write_file_atomic(path, std::string("{\"seed\": 1,,}"));
  EXPECT_THROW(load_run_config(path), FormatError);
  fs::remove(path);
  EXPECT_THROW(load_run_config(path), IoError);
}

TEST(Manifest, RoundTrip) {
  SensorManifest m;
  m.sensor = make_sensor(SensorParams{}, 20);
  m.seed = 99;
  m.snr_db = std::numeric_limits<double>::infinity();
  m.hr_rows = 64;
  m.hr_cols = 48;
  const auto path = temp_path("manifest.json");
  save_manifest(m, path);
  const SensorManifest r = load_manifest(path);
  EXPECT_EQ(r.sensor.blur.size, m.sensor.blur.size);
  EXPECT_EQ(r.sensor.blur.weights, m.sensor.blur.weights);
  EXPECT_EQ(r.sensor.decim_factor, 4u);
  EXPECT_EQ(r.sensor.srf, m.sensor.srf);
  EXPECT_EQ(r.seed, 99u);
  EXPECT_TRUE(std::isinf(r.snr_db));
  EXPECT_EQ(r.hr_cols, 48u);
  fs::remove(path);

  auto j = manifest_to_json(m);
  j["boundary"] = "symmetric";
  EXPECT_THROW(manifest_from_json(j), ValueError);
  j = manifest_to_json(m);
  j["extra"] = 1;
  EXPECT_THROW(manifest_from_json(j), ValueError);
  j = manifest_to_json(m);
  j["kernel"]["weights"].erase(0);
  EXPECT_THROW(manifest_from_json(j), ValueError);
}
