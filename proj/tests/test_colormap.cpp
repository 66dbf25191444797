#include <gtest/gtest.h>

#include <cmath>

#include "dualcal/colormap.hpp"
#include "test_support.hpp"

using namespace dualcal;
namespace dt = dualcal::testing;

namespace {

// Literal per-level average: for each level k, walk every pixel and average
// the target samples whose src sample equals k.
struct OracleEntry {
  bool populated = false;
  double value = 0.0;
  std::size_t count = 0;
};

OracleEntry level_mean_oracle(const Raster& src, const Raster& target, const Mask* roi, int c, int k) {
  double sum = 0.0;
  std::size_t n = 0;
  for (int y = 0; y < src.height(); ++y)
    for (int x = 0; x < src.width(); ++x) {
      if (roi && roi->at(0, y, x) != 0) continue;
      if (src.at(c, y, x) != k) continue;
      sum += target.at(c, y, x);
      ++n;
    }
  if (n == 0) return {};
  return {true, sum / double(n), n};
}

Raster add_offset(const Raster& img, int d) {
  Raster out = img;
  for (auto& v : out.data()) v = static_cast<std::uint8_t>(v + d);
  return out;
}

}  // namespace

TEST(IntensityLut, MatchesBruteForceAverageExactly) {
  for (int trial = 0; trial < 10; ++trial) {
    const Raster src = dt::random_image(64, 64, 3, 1000 + trial);
    const Raster tgt = dt::random_image(64, 64, 3, 2000 + trial);
    const ColorLUT lut = build_intensity_lut(src, tgt);
    for (int c = 0; c < 3; ++c)
      for (int k = 0; k < 256; ++k) {
        const auto o = level_mean_oracle(src, tgt, nullptr, c, k);
        ASSERT_EQ(lut.tables[c][k].populated, o.populated);
        if (!o.populated) continue;
        EXPECT_EQ(lut.tables[c][k].value, o.value) << "c=" << c << " k=" << k;
        EXPECT_EQ(lut.tables[c][k].count, o.count);
      }
  }
}

TEST(IntensityLut, IdentityStatistics) {
  const Raster img = dt::textured_image(64, 48, 3, 5);
  const ColorLUT lut = build_intensity_lut(img, img);
  for (int c = 0; c < 3; ++c)
    for (int k = 0; k < 256; ++k)
      if (lut.tables[c][k].populated) {
        EXPECT_EQ(lut.tables[c][k].value, double(k));
      }
  EXPECT_EQ(apply_lut(img, lut), img);
}

TEST(IntensityLut, ConstantOffsetRecovered) {
  const Raster src = dt::random_image(64, 64, 3, 9, 0, 235);
  const Raster tgt = add_offset(src, 20);
  const ColorLUT lut = build_intensity_lut(src, tgt);
  for (int c = 0; c < 3; ++c)
    for (int k = 0; k <= 235; ++k)
      if (lut.tables[c][k].populated) {
        EXPECT_EQ(lut.tables[c][k].value, k + 20.0);
      }
  EXPECT_EQ(apply_lut(src, lut), tgt);
}

TEST(IntensityLut, GapFillIsLinearWithClampedEnds) {
  Raster src(4, 1, 1);
  Raster tgt(4, 1, 1);
  const std::uint8_t s[4] = {10, 10, 20, 40};
  const std::uint8_t t[4] = {100, 101, 110, 150};
  for (int i = 0; i < 4; ++i) {
    src.at(0, 0, i) = s[i];
    tgt.at(0, 0, i) = t[i];
  }
  const ColorLUT lut = build_intensity_lut(src, tgt);
  const auto& tab = lut.tables[0];
  EXPECT_EQ(tab[0].value, 100.5);
  EXPECT_FALSE(tab[0].populated);
  EXPECT_EQ(tab[10].value, 100.5);
  EXPECT_EQ(tab[10].count, 2u);
  EXPECT_DOUBLE_EQ(tab[15].value, 100.5 + 9.5 * 0.5);
  EXPECT_DOUBLE_EQ(tab[30].value, 130.0);
  EXPECT_EQ(tab[255].value, 150.0);
}

TEST(IntensityLut, RoiExcludesPoisonedPixels) {
  Raster src = dt::random_image(32, 32, 3, 4);
  Raster tgt = dt::random_image(32, 32, 3, 5);
  Mask roi(32, 32, 1, kMaskValid);
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 8; ++x) {
      roi.at(0, y, x) = kMaskProblem;
      for (int c = 0; c < 3; ++c) tgt.at(c, y, x) = (x % 2) ? 255 : 0;
    }
  const ColorLUT lut = build_intensity_lut(src, tgt, &roi);
  for (int c = 0; c < 3; ++c)
    for (int k = 0; k < 256; ++k) {
      const auto o = level_mean_oracle(src, tgt, &roi, c, k);
      ASSERT_EQ(lut.tables[c][k].populated, o.populated);
      if (o.populated) {
        EXPECT_EQ(lut.tables[c][k].value, o.value);
      }
    }
  const Mask none(32, 32, 1, kMaskProblem);
  try {
    build_intensity_lut(src, tgt, &none);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::no_statistics);
  }
  EXPECT_THROW(build_intensity_lut(src, Raster(31, 32, 3)), Error);
}

TEST(IntensityLut, ApplyRoundsHalfToEvenAndStaysInRange) {
  ColorLUT lut = identity_lut(1);
  lut.tables[0][1].value = 2.5;
  lut.tables[0][2].value = 3.5;
  lut.tables[0][3].value = -7.0;
  lut.tables[0][4].value = 300.0;
  Raster img(4, 1, 1);
  for (int i = 0; i < 4; ++i) img.at(0, 0, i) = static_cast<std::uint8_t>(i + 1);
  const Raster out = apply_lut(img, lut);
  EXPECT_EQ(out.at(0, 0, 0), 2);
  EXPECT_EQ(out.at(0, 0, 1), 4);
  EXPECT_EQ(out.at(0, 0, 2), 0);
  EXPECT_EQ(out.at(0, 0, 3), 255);
}

TEST(IntensityLut, IdempotentWhenTableIsIdempotent) {
  // Posterize: k -> 16 * (k / 16), so lut o lut == lut.
  ColorLUT lut = identity_lut(3);
  for (auto& t : lut.tables)
    for (int k = 0; k < 256; ++k) t[k].value = 16.0 * (k / 16);
  const Raster img = dt::random_image(20, 20, 3, 3);
  const Raster once = apply_lut(img, lut);
  EXPECT_EQ(apply_lut(once, lut), once);
}

TEST(IntensityLut, JsonRoundTripAndDeterminism) {
  const Raster src = dt::random_image(40, 40, 3, 8);
  const Raster tgt = dt::random_image(40, 40, 3, 9);
  const ColorLUT a = build_intensity_lut(src, tgt);
  EXPECT_EQ(a, build_intensity_lut(src, tgt));
  const auto j = to_json(a);
  EXPECT_EQ(j["channels"].size(), 3u);
  EXPECT_EQ(color_lut_from_json(nlohmann::json::parse(j.dump())), a);
  EXPECT_THROW(color_lut_from_json(nlohmann::json{{"channels", {{{"values", {1, 2}}}}}}), Error);
}

TEST(Lut3D, IdentityPairIsExact) {
  const Raster img = dt::textured_image(96, 96, 3, 12);
  for (int bins : {1, 16, 32, 64}) EXPECT_EQ(build_apply_lut3d(img, img, bins), img) << bins;
}

TEST(Lut3D, SingleBinIsGlobalMeanShift) {
  const Raster src = dt::random_image(32, 32, 3, 21, 40, 200);
  Raster tgt = dt::random_image(32, 32, 3, 22, 40, 200);
  std::array<double, 3> shift{};
  for (int c = 0; c < 3; ++c) {
    double s = 0.0;
    double t = 0.0;
    for (std::size_t i = 0; i < src.pixel_count(); ++i) {
      s += src.plane(c)[i];
      t += tgt.plane(c)[i];
    }
    shift[c] = (t - s) / double(src.pixel_count());
  }
  const Raster out = build_apply_lut3d(src, tgt, 1);
  for (int c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < src.pixel_count(); ++i)
      EXPECT_NEAR(double(out.plane(c)[i]), src.plane(c)[i] + shift[c], 0.5 + 1e-9);
}

TEST(Lut3D, ChannelSwapIsRepresentable) {
  const Raster src = dt::random_image(256, 256, 3, 31);
  Raster tgt = src;
  for (std::size_t i = 0; i < src.pixel_count(); ++i) {
    tgt.plane(0)[i] = src.plane(1)[i];
    tgt.plane(1)[i] = src.plane(0)[i];
  }
  const int bins = 16;
  const Raster out = build_apply_lut3d(src, tgt, bins);
  double err3d = 0.0;
  double err1d = 0.0;
  const Raster one = apply_lut(src, build_intensity_lut(src, tgt));
  for (int c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < src.pixel_count(); ++i) {
      err3d += std::abs(double(out.plane(c)[i]) - tgt.plane(c)[i]);
      err1d += std::abs(double(one.plane(c)[i]) - tgt.plane(c)[i]);
    }
  err3d /= 3.0 * src.pixel_count();
  err1d /= 3.0 * src.pixel_count();
  EXPECT_LT(err3d, 256.0 / bins / 2);
  EXPECT_GT(err1d, 4 * err3d);
}

TEST(Lut3D, EmptyNeighbourhoodFallsBackToIntensityLut) {
  Raster src(2, 1, 3, 10);
  Raster tgt(2, 1, 3, 30);
  const Lut3D lut = build_lut3d(src, tgt, 32);
  Raster probe(1, 1, 3, 250);
  const Raster out = apply_lut3d(probe, lut);
  for (int c = 0; c < 3; ++c) EXPECT_EQ(out.at(c, 0, 0), 30);
  EXPECT_THROW(build_lut3d(src, tgt, 24), Error);
  EXPECT_THROW(build_lut3d(src, tgt, 128), Error);
}
