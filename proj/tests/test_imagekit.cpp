#include <gtest/gtest.h>
#include <png.h>

#include <cmath>
#include <csetjmp>
#include <numeric>

#include "dualcal/imagekit.hpp"
#include "test_support.hpp"

using namespace dualcal;
using dualcal::testing::Rng;
using dualcal::testing::TempDir;

namespace {

// Writes a PNG with parameters the codec must refuse (16-bit or interlaced).
std::vector<std::uint8_t> make_png(int bit_depth, int interlace) {
  std::vector<std::uint8_t> out;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    return {};
  }
  png_set_write_fn(
      png, &out,
      [](png_structp p, png_bytep data, png_size_t n) {
        auto* v = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(p));
        v->insert(v->end(), data, data + n);
      },
      [](png_structp) {});
  const int w = 8;
  const int h = 8;
  png_set_IHDR(png, info, w, h, bit_depth, PNG_COLOR_TYPE_GRAY, interlace, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<std::uint8_t> rows(static_cast<std::size_t>(w) * h * (bit_depth / 8), 0x7f);
  std::vector<png_bytep> ptrs(h);
  for (int y = 0; y < h; ++y) ptrs[y] = rows.data() + static_cast<std::size_t>(y) * w * (bit_depth / 8);
  png_write_image(png, ptrs.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return out;
}

}  // namespace

TEST(Codec, TwoByTwoRgbRoundTrip) {
  TempDir dir("codec");
  Raster img(2, 2, 3);
  const std::uint8_t bytes[] = {0, 1, 2, 3, 250, 251, 252, 253, 17, 34, 51, 68};
  std::copy(std::begin(bytes), std::end(bytes), img.data().begin());
  write_png(img, dir.path() / "a.png");
  const Raster back = load_png(dir.path() / "a.png");
  EXPECT_EQ(back, img);
  EXPECT_EQ(back.channels(), 3);
}

TEST(Codec, RoundTripIsBitExactOnRandomRasters) {
  TempDir dir("codec_prop");
  Rng rng(7);
  for (int trial = 0; trial < 25; ++trial) {
    const int w = rng.integer(1, 40);
    const int h = rng.integer(1, 40);
    const int ch = rng.integer(0, 1) == 0 ? 1 : 3;
    const Raster img = dualcal::testing::random_image(w, h, ch, 1000 + trial);
    const auto path = dir.path() / ("r" + std::to_string(trial) + ".png");
    write_png(img, path);
    const Raster back = load_png(path);
    ASSERT_EQ(back, img) << "trial " << trial;
    // Canonical re-encode is a fixed point.
    EXPECT_EQ(encode_png(back), read_file_bytes(path));
  }
}

TEST(Codec, RejectsSixteenBit) {
  const auto bytes = make_png(16, PNG_INTERLACE_NONE);
  ASSERT_FALSE(bytes.empty());
  try {
    decode_png(bytes, "deep.png");
    FAIL() << "expected codec error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::codec);
    EXPECT_NE(std::string(e.what()).find("unsupported depth"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("deep.png"), std::string::npos);
  }
}

TEST(Codec, RejectsInterlaced) {
  const auto bytes = make_png(8, PNG_INTERLACE_ADAM7);
  ASSERT_FALSE(bytes.empty());
  EXPECT_THROW(decode_png(bytes), Error);
}

TEST(Codec, RejectsGarbage) {
  EXPECT_THROW(decode_png({1, 2, 3, 4, 5, 6, 7, 8, 9}), Error);
  EXPECT_THROW(load_png("/nonexistent/file.png"), Error);
}

TEST(Resample, ConstantStaysConstant) {
  Raster img(16, 16, 3, 93);
  const Raster up = resample_bicubic(img, 64, 64);
  EXPECT_EQ(up.width(), 64);
  for (auto v : up.data()) ASSERT_EQ(v, 93);
}

TEST(Resample, IdentityScaleIsBitIdentical) {
  const Raster img = dualcal::testing::random_image(37, 21, 3, 3);
  EXPECT_EQ(resample_bicubic(img, 37, 21), img);
  const RasterF f = to_float(img);
  EXPECT_EQ(resample_bicubic(f, 37, 21), f);
}

TEST(Resample, LinearRampStaysLinearUnderTwoTimesUpscale) {
  Raster img(64, 8, 1);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 64; ++x) img.at(0, y, x) = static_cast<std::uint8_t>(3 * x + 20);
  const Raster up = resample_bicubic(img, 128, 16);
  // Catmull-Rom reproduces linear signals exactly away from the clamped borders.
  for (int y = 0; y < 16; ++y) {
    for (int x = 4; x < 124; ++x) {
      const double src = (x + 0.5) * 0.5 - 0.5;
      EXPECT_NEAR(up.at(0, y, x), 3.0 * src + 20.0, 1.0) << x;
    }
  }
}

TEST(Resample, UpDownRoundTripOfBandLimitedImage) {
  const Raster base = dualcal::testing::random_image(96, 96, 3, 11);
  const Raster smooth = gaussian_blur(base, kernel_size_for_sigma(1.5), 1.5);
  const Raster back = resample_bicubic(resample_bicubic(smooth, 192, 192), 96, 96);
  // Measured 66.40 dB on this fixture; locked at 60.
  EXPECT_GE(dualcal::testing::simple_psnr(back, smooth), 60.0);
}

TEST(Resample, IsPure) {
  const Raster img = dualcal::testing::random_image(30, 20, 3, 5);
  EXPECT_EQ(resample_bicubic(img, 47, 13), resample_bicubic(img, 47, 13));
}

TEST(GaussianBlur, ConstantImageUnchanged) {
  Raster img(20, 10, 3, 201);
  EXPECT_EQ(gaussian_blur(img, 5, 1.3), img);
}

TEST(GaussianBlur, ImpulseResponseEqualsNormalizedKernel) {
  RasterF img(5, 5, 1, 0.0f);
  img.at(0, 2, 2) = 1.0f;
  const RasterF out = gaussian_blur(img, 3, 0.5);
  // Oracle: sample exp(-r^2 / 2 sigma^2) on the 3x3 grid and normalize.
  double w[3][3];
  double sum = 0.0;
  for (int dy = -1; dy <= 1; ++dy)
    for (int dx = -1; dx <= 1; ++dx) sum += w[dy + 1][dx + 1] = std::exp(-(dx * dx + dy * dy) / (2 * 0.25));
  for (int y = 0; y < 5; ++y) {
    for (int x = 0; x < 5; ++x) {
      const int dy = y - 2;
      const int dx = x - 2;
      const double expect = (std::abs(dx) <= 1 && std::abs(dy) <= 1) ? w[dy + 1][dx + 1] / sum : 0.0;
      EXPECT_NEAR(out.at(0, y, x), expect, 1e-7);
    }
  }
  const Kernel2D k = gaussian_kernel(3, 0.5);
  EXPECT_NEAR(std::accumulate(k.weights.begin(), k.weights.end(), 0.0), 1.0, 1e-12);
  EXPECT_NEAR(k.at(1, 1), w[1][1] / sum, 1e-15);
}

TEST(GaussianBlur, SemigroupOnSmoothInput) {
  const RasterF img = to_float(dualcal::testing::smooth_image(64, 64, 1, 2));
  const RasterF twice = gaussian_blur(gaussian_blur(img, 5, 0.5), 5, 0.5);
  const RasterF once = gaussian_blur(img, 5, std::sqrt(0.5));
  for (std::size_t i = 0; i < img.data().size(); ++i) {
    ASSERT_LE(std::abs(twice.data()[i] - once.data()[i]) * 255.0, 1.0);
  }
}

TEST(GaussianBlur, EvenSizeIsContractViolation) {
  Raster img(4, 4, 1);
  try {
    gaussian_blur(img, 4, 1.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::contract_violation);
  }
  EXPECT_THROW(gaussian_blur(img, 3, 0.0), Error);
}

TEST(GaussianBlur, PreservesMeanOnInteriorDominatedImage) {
  const RasterF img = to_float(dualcal::testing::random_image(256, 256, 1, 9));
  const RasterF out = gaussian_blur(img, 7, 1.0);
  const double m_in = std::accumulate(img.data().begin(), img.data().end(), 0.0) / img.data().size();
  const double m_out = std::accumulate(out.data().begin(), out.data().end(), 0.0) / out.data().size();
  EXPECT_LE(std::abs(m_out - m_in) / m_in, 1e-4);
}

TEST(Sobel, ConstantHasZeroMagnitude) {
  Raster img(9, 9, 3, 77);
  const RasterF mag = sobel_magnitude(img);
  for (float v : mag.data()) EXPECT_EQ(v, 0.0f);
}

TEST(Sobel, VerticalStepEdge) {
  Raster img(10, 6, 1, 0);
  for (int y = 0; y < 6; ++y)
    for (int x = 5; x < 10; ++x) img.at(0, y, x) = 255;
  const RasterF mag = sobel_magnitude(img);
  // Hand-applied stencil: (1 + 2 + 1) * 255 / 255 on both sides of the step.
  for (int y = 0; y < 6; ++y) {
    EXPECT_FLOAT_EQ(mag.at(0, y, 4), 4.0f);
    EXPECT_FLOAT_EQ(mag.at(0, y, 5), 4.0f);
    EXPECT_FLOAT_EQ(mag.at(0, y, 2), 0.0f);
    EXPECT_FLOAT_EQ(mag.at(0, y, 8), 0.0f);
  }
}

TEST(Sobel, HorizontalFlipOfSymmetricPattern) {
  Raster img(11, 7, 1, 0);
  for (int y = 0; y < 7; ++y)
    for (int x = 0; x < 11; ++x) img.at(0, y, x) = static_cast<std::uint8_t>(std::abs(x - 5) * 20 + y * 3);
  const RasterF mag = sobel_magnitude(img);
  for (int y = 0; y < 7; ++y)
    for (int x = 0; x < 11; ++x) EXPECT_FLOAT_EQ(mag.at(0, y, x), mag.at(0, y, 10 - x));
}

TEST(CenterCrop, FourKToDatasetResolution) {
  Raster img(4096, 3072, 1);
  for (int y = 0; y < 3072; ++y)
    for (int x = 0; x < 4096; ++x) img.at(0, y, x) = static_cast<std::uint8_t>((x * 7 + y * 13) & 0xff);
  const Raster out = center_crop(img, 3496, 2472);
  EXPECT_EQ(out.width(), 3496);
  EXPECT_EQ(out.height(), 2472);
  EXPECT_EQ(out.at(0, 0, 0), img.at(0, 300, 300));
  EXPECT_EQ(out.at(0, 2471, 3495), img.at(0, 2771, 3795));
}

TEST(CenterCrop, OwnDimsAndOddCenter) {
  const Raster img = dualcal::testing::random_image(5, 5, 3, 1);
  EXPECT_EQ(center_crop(img, 5, 5), img);
  const Raster small = center_crop(img, 3, 3);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 3; ++y)
      for (int x = 0; x < 3; ++x) EXPECT_EQ(small.at(c, y, x), img.at(c, y + 1, x + 1));
  EXPECT_THROW(center_crop(img, 6, 5), Error);
}

TEST(Image, InvariantsAndConversions) {
  EXPECT_THROW(Raster(0, 3, 1), Error);
  EXPECT_THROW(Raster(3, 3, 2), Error);
  Raster img(3, 2, 3);
  EXPECT_EQ(img.data().size(), 18u);
  EXPECT_EQ(img.depth(), Depth::U8);
  EXPECT_EQ(RasterF::depth(), Depth::F32);
  const Raster r = dualcal::testing::random_image(13, 7, 3, 4);
  EXPECT_EQ(to_u8(to_float(r)), r);
  EXPECT_EQ(saturate_u8(2.5), 2);  // half-to-even
  EXPECT_EQ(saturate_u8(3.5), 4);
  EXPECT_EQ(saturate_u8(-3.0), 0);
  EXPECT_EQ(saturate_u8(300.0), 255);
}
