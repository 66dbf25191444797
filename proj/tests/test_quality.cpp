#include <gtest/gtest.h>

#include <cmath>

#include "dualcal/quality.hpp"
#include "test_support.hpp"

using namespace dualcal;
namespace dt = dualcal::testing;

namespace {

// Textbook SSIM: explicit 2D Gaussian weights and centred moments per window.
double ssim_oracle(const Raster& a, const Raster& b) {
  auto luma_at = [](const Raster& img, int y, int x) {
    if (img.channels() == 1) return double(img.at(0, y, x));
    return 0.299 * img.at(0, y, x) + 0.587 * img.at(1, y, x) + 0.114 * img.at(2, y, x);
  };
  double wsum = 0.0;
  double w[11][11];
  for (int j = 0; j < 11; ++j)
    for (int i = 0; i < 11; ++i) {
      w[j][i] = std::exp(-((i - 5) * (i - 5) + (j - 5) * (j - 5)) / (2.0 * 1.5 * 1.5));
      wsum += w[j][i];
    }
  const double c1 = std::pow(0.01 * 255, 2);
  const double c2 = std::pow(0.03 * 255, 2);
  double total = 0.0;
  int n = 0;
  for (int y = 5; y < a.height() - 5; ++y)
    for (int x = 5; x < a.width() - 5; ++x) {
      double ma = 0, mb = 0;
      for (int j = 0; j < 11; ++j)
        for (int i = 0; i < 11; ++i) {
          ma += w[j][i] / wsum * luma_at(a, y + j - 5, x + i - 5);
          mb += w[j][i] / wsum * luma_at(b, y + j - 5, x + i - 5);
        }
      double va = 0, vb = 0, cov = 0;
      for (int j = 0; j < 11; ++j)
        for (int i = 0; i < 11; ++i) {
          const double da = luma_at(a, y + j - 5, x + i - 5) - ma;
          const double db = luma_at(b, y + j - 5, x + i - 5) - mb;
          va += w[j][i] / wsum * da * da;
          vb += w[j][i] / wsum * db * db;
          cov += w[j][i] / wsum * da * db;
        }
      total += (2 * ma * mb + c1) * (2 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
      ++n;
    }
  return total / n;
}

Raster checkerboard(int w, int h, int cell, std::uint8_t lo, std::uint8_t hi) {
  Raster img(w, h, 3);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) img.at(c, y, x) = ((x / cell + y / cell) % 2) ? hi : lo;
  return img;
}

Raster invert(const Raster& img) {
  Raster out = img;
  for (auto& v : out.data()) v = static_cast<std::uint8_t>(255 - v);
  return out;
}

}  // namespace

TEST(Psnr, IdenticalIsCapped) {
  const Raster a = dt::random_image(20, 20, 3, 1);
  EXPECT_EQ(psnr(a, a), 99.0);
}

TEST(Psnr, ConstantOffsetClosedForm) {
  const Raster a = dt::random_image(50, 40, 3, 2, 0, 245);
  Raster b = a;
  for (auto& v : b.data()) v = static_cast<std::uint8_t>(v + 10);
  EXPECT_NEAR(psnr(a, b), 28.1308, 1e-4);
  EXPECT_NEAR(psnr(a, b), 10.0 * std::log10(255.0 * 255.0 / 100.0), 1e-12);
  EXPECT_EQ(psnr(a, b), psnr(b, a));
}

TEST(Psnr, MaskExcludingCorruptedHalf) {
  const Raster a = dt::random_image(40, 30, 3, 3);
  Raster b = a;
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 30; ++y)
      for (int x = 0; x < 40; ++x) {
        if (x >= 20) b.at(c, y, x) = static_cast<std::uint8_t>(255 - a.at(c, y, x));
        else if ((x + y + c) % 3 == 0) b.at(c, y, x) = static_cast<std::uint8_t>(std::min(255, a.at(c, y, x) + 4));
      }
  Mask m(40, 30, 1, kMaskValid);
  for (int y = 0; y < 30; ++y)
    for (int x = 20; x < 40; ++x) m.at(0, y, x) = kMaskProblem;
  Raster la(20, 30, 3), lb(20, 30, 3);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 30; ++y)
      for (int x = 0; x < 20; ++x) {
        la.at(c, y, x) = a.at(c, y, x);
        lb.at(c, y, x) = b.at(c, y, x);
      }
  EXPECT_EQ(psnr(a, b, &m), psnr(la, lb));
  EXPECT_GT(psnr(a, b, &m), psnr(a, b));
  const Mask none(40, 30, 1, kMaskProblem);
  try {
    psnr(a, b, &none);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::no_statistics);
  }
}

TEST(Ssim, IdenticalIsExactlyOne) {
  const Raster a = dt::textured_image(64, 48, 3, 4);
  EXPECT_EQ(ssim(a, a), 1.0);
  const Raster g = dt::random_image(11, 11, 1, 4);
  EXPECT_EQ(ssim(g, g), 1.0);
}

TEST(Ssim, InvertedCheckerboardIsNegative) {
  const Raster a = checkerboard(48, 48, 2, 30, 220);
  const Raster b = invert(a);
  const double s = ssim(a, b);
  EXPECT_LT(s, 0.0);
  EXPECT_NEAR(s, ssim_oracle(a, b), 1e-9);
}

TEST(Ssim, BlurredTextureMatchesDirectFormula) {
  const Raster a = dt::textured_image(64, 64, 3, 5, 1.0);
  const Raster b = gaussian_blur(a, kernel_size_for_sigma(2.0), 2.0);
  const double s = ssim(a, b);
  EXPECT_GT(s, 0.0);
  EXPECT_LT(s, 1.0);
  EXPECT_NEAR(s, ssim_oracle(a, b), 1e-9);
}

TEST(Ssim, SymmetryBoundsAndMaskConsistency) {
  dt::Rng rng(6);
  for (int trial = 0; trial < 10000; ++trial) {
    const int w = 11 + rng.integer(0, 5);
    const int h = 11 + rng.integer(0, 5);
    const Raster a = dt::random_image(w, h, 1, 100000 + trial);
    const Raster b = dt::random_image(w, h, 1, 200000 + trial);
    const double s = ssim(a, b);
    ASSERT_GE(s, -1.0);
    ASSERT_LE(s, 1.0);
    if (trial % 100 == 0) {
      EXPECT_NEAR(s, ssim(b, a), 1e-12);
      EXPECT_NEAR(psnr(a, b), psnr(b, a), 1e-12);
      const Mask all(w, h, 1, kMaskValid);
      EXPECT_EQ(ssim(a, b, &all), s);
      EXPECT_EQ(psnr(a, b, &all), psnr(a, b));
    }
  }
}

TEST(Ssim, MaskedWindowsAndErrors) {
  const Raster a = dt::textured_image(40, 40, 3, 7);
  Raster b = a;
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 40; ++y)
      for (int x = 28; x < 40; ++x) b.at(c, y, x) = 0;
  Mask m(40, 40, 1, kMaskValid);
  for (int y = 0; y < 40; ++y)
    for (int x = 28; x < 40; ++x) m.at(0, y, x) = kMaskProblem;
  EXPECT_EQ(ssim(a, b, &m), 1.0);
  EXPECT_LT(ssim(a, b), 1.0);
  Mask holes(40, 40, 1, kMaskValid);
  for (int y = 0; y < 40; y += 8)
    for (int x = 0; x < 40; x += 8) holes.at(0, y, x) = kMaskProblem;
  EXPECT_THROW(ssim(a, b, &holes), Error);
  EXPECT_THROW(ssim(Raster(10, 30, 3), Raster(10, 30, 3)), Error);
}

TEST(LowFreq, ClosedFormsAndAttenuation) {
  const Raster a = dt::random_image(30, 30, 3, 8, 0, 245);
  EXPECT_EQ(lowfreq_fidelity(a, a), 0.0);
  Raster b = a;
  for (auto& v : b.data()) v = static_cast<std::uint8_t>(v + 10);
  EXPECT_NEAR(lowfreq_fidelity(a, b), 10.0 / 255.0, 1e-6);
  const Raster cb = checkerboard(32, 32, 1, 0, 255);
  const Raster ci = invert(cb);
  EXPECT_LT(lowfreq_fidelity(cb, ci), 1.0);
  EXPECT_THROW(lowfreq_fidelity(a, Raster(30, 29, 3)), Error);
}

TEST(Report, JsonAndTableRow) {
  const Raster a = dt::textured_image(32, 32, 3, 9);
  const auto r = evaluate_pair(a, a);
  EXPECT_EQ(r.psnr_db, 99.0);
  EXPECT_EQ(r.ssim, 1.0);
  EXPECT_EQ(r.valid_pixel_fraction, 1.0);
  EXPECT_EQ(to_json(r)["ssim"].get<double>(), 1.0);
  EXPECT_EQ(format_table_row("DCSR", 25.96612, 0.84449), "DCSR                        25.9661   0.8445");
}
