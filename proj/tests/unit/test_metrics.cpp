#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "difiv/errors.hpp"
#include "difiv/metrics.hpp"
#include "oracles.hpp"

using namespace difiv;

namespace {

HyperImage positive_cube(const Shape& s, std::uint64_t seed) { return oracle::random_cube(s, seed, 0.1, 1.0); }

}  // namespace

TEST(Metrics, IdenticalImages) {
  const HyperImage r = positive_cube({5, 16, 16}, 1);
  EXPECT_EQ(psnr(r, r), kPsnrExact);
  EXPECT_EQ(sam(r, r), 0.0);
  EXPECT_EQ(ergas(r, r, 256, 16), 0.0);
  EXPECT_EQ(ergas(r, r, 256, 16, ErgasVariant::kConventional), 0.0);
  EXPECT_EQ(uiqi(r, r), 1.0);
}

TEST(Metrics, PsnrKnownValue) {
  // Max 1, uniform error 0.1 -> MSE 0.01 -> 20 dB in every band.
  HyperImage r(3, 8, 8, 0.5), e(3, 8, 8, 0.6);
  for (std::size_t b = 0; b < 3; ++b) r(b, 0, 0) = 1.0, e(b, 0, 0) = 1.1;
  EXPECT_NEAR(psnr(e, r), 20.0, 1e-12);
}

TEST(Metrics, SamOrthogonalAndScaleInvariant) {
  HyperImage r(2, 2, 2), e(2, 2, 2);
  for (std::size_t i = 0; i < 2; ++i) {
    for (std::size_t j = 0; j < 2; ++j) r(0, i, j) = 1.0, e(1, i, j) = 2.0;
  }
  EXPECT_NEAR(sam(e, r), std::numbers::pi / 2, 1e-15);
  const HyperImage a = positive_cube({6, 9, 9}, 2), b = positive_cube({6, 9, 9}, 3);
  EXPECT_NEAR(sam(3.5 * a, b), sam(a, b), 1e-14);
}

TEST(Metrics, ErgasKnownValue) {
  // Unit-mean estimate with unit squared error per band, HR/LR ratio 16.
  HyperImage r(2, 4, 4, 1.0), e(2, 4, 4, 1.0);
  for (std::size_t b = 0; b < 2; ++b) {
    for (std::size_t i = 0; i < 4; ++i) {
      for (std::size_t j = 0; j < 4; ++j) e(b, i, j) = (i + j) % 2 ? 1.25 : 0.75;
    }
  }
  EXPECT_NEAR(ergas(e, r, 16, 1), 16.0 * 100.0, 1e-10);
  // Conventional: 100 sqrt(1/16) sqrt(mean(1/16 / 1)) = 100 * 0.25 * 0.25.
  EXPECT_NEAR(ergas(e, r, 16, 1, ErgasVariant::kConventional), 6.25, 1e-12);
}

TEST(Metrics, AgreeWithOracles) {
  for (std::uint64_t s = 0; s < 5; ++s) {
    const HyperImage r = positive_cube({4, 12, 11}, 10 + s);
    const HyperImage e = positive_cube({4, 12, 11}, 20 + s);
    EXPECT_NEAR(psnr(e, r), oracle::psnr(e, r), 1e-10);
    EXPECT_NEAR(sam(e, r), oracle::sam(e, r), 1e-10);
    EXPECT_NEAR(ergas(e, r, 132, 8.25), oracle::ergas_estimate_normalized(e, r, 132, 8.25), 1e-10 * oracle::ergas_estimate_normalized(e, r, 132, 8.25));
    EXPECT_NEAR(uiqi(e, r), oracle::uiqi(e, r), 1e-10);
  }
}

TEST(Metrics, UiqiAnticorrelated) {
  // est = -ref on a zero-mean checkerboard: correlation -1 with zero means
  // takes the contrast-only branch and yields -1.
  HyperImage r(1, 8, 8), e(1, 8, 8);
  for (std::size_t i = 0; i < 8; ++i) {
    for (std::size_t j = 0; j < 8; ++j) {
      r(0, i, j) = (i + j) % 2 ? 1.0 : -1.0;
      e(0, i, j) = -r(0, i, j);
    }
  }
  EXPECT_NEAR(uiqi(e, r), -1.0, 1e-15);
}

TEST(Metrics, UiqiConstantWindows) {
  HyperImage a(1, 8, 8, 2.0), b(1, 8, 8, 2.0), z(1, 8, 8, 0.0);
  EXPECT_EQ(uiqi(a, b), 1.0);
  EXPECT_EQ(uiqi(z, z), 1.0);
  // Constant but different luminance: 2xy/(x^2+y^2).
  HyperImage c(1, 8, 8, 1.0);
  EXPECT_NEAR(uiqi(a, c), 4.0 / 5.0, 1e-15);
}

TEST(Metrics, SymmetricMetrics) {
  const HyperImage a = positive_cube({3, 10, 10}, 30), b = positive_cube({3, 10, 10}, 31);
  EXPECT_NEAR(sam(a, b), sam(b, a), 1e-15);
  EXPECT_NEAR(uiqi(a, b), uiqi(b, a), 1e-14);
}

TEST(Metrics, ExactBandGivesInfinity) {
  HyperImage r = positive_cube({2, 8, 8}, 40), e = r;
  e(1, 3, 3) += 0.1;
  EXPECT_EQ(psnr(e, r), kPsnrExact);
}

TEST(Metrics, WarningsForUndefinedTerms) {
  HyperImage r = positive_cube({2, 8, 8}, 41), e = positive_cube({2, 8, 8}, 42);
  for (std::size_t i = 0; i < 8; ++i) {
    for (std::size_t j = 0; j < 8; ++j) r(0, i, j) = 0.0;
  }
  r(1, 0, 0) = 0.0;
  for (std::size_t b = 0; b < 2; ++b) e(b, 0, 0) = 0.0;
  MetricWarnings w;
  const double p = psnr(e, r, &w);
  EXPECT_TRUE(std::isfinite(p));
  EXPECT_FALSE(w.messages.empty());
  MetricWarnings ws;
  EXPECT_TRUE(std::isfinite(sam(e, r, &ws)));
  EXPECT_FALSE(ws.messages.empty());
}

TEST(Metrics, ShapeErrors) {
  const HyperImage a(2, 8, 8, 1.0), b(2, 8, 9, 1.0);
  EXPECT_THROW(psnr(a, b), DimensionError);
  EXPECT_THROW(sam(a, b), DimensionError);
  EXPECT_THROW(ergas(a, b, 64, 4), DimensionError);
  EXPECT_THROW(uiqi(a, b), DimensionError);
  const HyperImage small(1, 4, 4, 1.0);
  EXPECT_THROW(uiqi(small, small), DimensionError);
}

TEST(Metrics, EvaluateBundlesAndDegrees) {
  const HyperImage a = positive_cube({3, 10, 10}, 50), b = positive_cube({3, 10, 10}, 51);
  const MetricReport rep = evaluate(a, b, 100, 6.25);
  EXPECT_EQ(rep.psnr_db, psnr(a, b));
  EXPECT_EQ(rep.sam_rad, sam(a, b));
  EXPECT_EQ(rep.ergas, ergas(a, b, 100, 6.25));
  EXPECT_EQ(rep.uiqi, uiqi(a, b));
  EXPECT_NEAR(rep.sam_deg(), rep.sam_rad * 180.0 / std::numbers::pi, 1e-14);
}
