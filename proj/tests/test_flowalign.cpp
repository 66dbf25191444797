#include <gtest/gtest.h>

#include <cmath>

#include "dualcal/flowalign/flow.hpp"
#include "test_support.hpp"

using namespace dualcal;
namespace dt = dualcal::testing;

namespace {

struct Epe {
  double mean = 0.0;
  double valid_fraction = 0.0;
};

// mov(x) = ref(x + t), so the expected flow is -t.
Epe endpoint_error(const FlowField& f, double tx, double ty) {
  double sum = 0.0;
  std::size_t n = 0;
  for (int y = 0; y < f.height; ++y)
    for (int x = 0; x < f.width; ++x) {
      const std::size_t i = f.index(y, x);
      if (!f.valid[i]) continue;
      sum += std::hypot(f.u[i] + tx, f.v[i] + ty);
      ++n;
    }
  return {n ? sum / n : 1e9, double(n) / (double(f.width) * f.height)};
}

}  // namespace

TEST(Flow, IdenticalInputsGiveZeroFlow) {
  const Raster img = dt::textured_image(96, 80, 3, 1);
  const FlowField f = compute_flow(img, img);
  double worst = 0.0;
  for (std::size_t i = 0; i < f.u.size(); ++i) worst = std::max({worst, std::abs(double(f.u[i])), std::abs(double(f.v[i]))});
  EXPECT_LT(worst, 1e-6);
  std::size_t valid = 0;
  for (auto v : f.valid) valid += v;
  EXPECT_EQ(valid, f.valid.size());
}

TEST(Flow, IntegerTranslationsAreRecovered) {
  const Raster ref = dt::textured_image(256, 256, 3, 7, 2.0);
  for (int t = 1; t <= 8; ++t) {
    const Raster mov = dt::shift_sample(ref, t, 0);
    const auto e = endpoint_error(compute_flow(ref, mov), t, 0);
    EXPECT_LT(e.mean, 0.25) << "shift " << t;
    EXPECT_GT(e.valid_fraction, 0.8) << "shift " << t;
  }
  const Raster diag = dt::shift_sample(ref, 4, -6);
  EXPECT_LT(endpoint_error(compute_flow(ref, diag), 4, -6).mean, 0.25);
}

TEST(Flow, SubpixelShiftOnSmoothTexture) {
  const Raster ref = dt::smooth_image(256, 256, 3, 11);
  const Raster mov = dt::shift_sample(ref, 0.5, 0);
  const auto e = endpoint_error(compute_flow(ref, mov), 0.5, 0);
  EXPECT_LT(e.mean, 0.1);
  EXPECT_GT(e.valid_fraction, 0.6);
}

TEST(Flow, InvalidPixelsCarryZeroAndFlatRegionsAreInvalid) {
  Raster img(64, 64, 1, 100);
  const FlowField f = compute_flow(img, img);
  for (std::size_t i = 0; i < f.valid.size(); ++i) {
    EXPECT_EQ(f.valid[i], 0);
    EXPECT_EQ(f.u[i], 0.0f);
    EXPECT_EQ(f.v[i], 0.0f);
  }
}

TEST(Flow, Deterministic) {
  const Raster ref = dt::textured_image(128, 96, 3, 3);
  const Raster mov = dt::shift_sample(ref, 2.3, -1.1);
  EXPECT_EQ(compute_flow(ref, mov), compute_flow(ref, mov));
}

TEST(Flow, ContractErrors) {
  const Raster a(32, 32, 3);
  const Raster b(32, 31, 3);
  EXPECT_THROW(compute_flow(a, b), Error);
  EXPECT_THROW(compute_flow(a, a, {1, 4, 5}), Error);
  EXPECT_THROW(compute_flow(a, a, {0, 15, 5}), Error);
}

TEST(WarpWithFlow, ZeroFlowIsIdentity) {
  const Raster img = dt::random_image(40, 30, 3, 5);
  EXPECT_EQ(warp_with_flow(img, FlowField(40, 30)), img);
}

TEST(WarpWithFlow, InvalidFlowPassesThrough) {
  const Raster img = dt::random_image(40, 30, 3, 5);
  FlowField f(40, 30);
  std::fill(f.u.begin(), f.u.end(), 7.5f);
  std::fill(f.valid.begin(), f.valid.end(), 0);
  EXPECT_EQ(warp_with_flow(img, f), img);
}

TEST(WarpWithFlow, InverseShiftRoundTrip) {
  const Raster ref = dt::textured_image(128, 128, 3, 9, 2.0);
  const Raster mov = dt::shift_sample(ref, 3, 0);
  FlowField f(128, 128);
  std::fill(f.u.begin(), f.u.end(), -3.0f);
  EXPECT_GE(dt::simple_psnr(warp_with_flow(mov, f), ref, 8), 40.0);
  // The estimated flow aligns mov back onto ref as well.
  EXPECT_GE(dt::simple_psnr(warp_with_flow(mov, compute_flow(ref, mov)), ref, 8), 40.0);
}

TEST(Residual, ZeroForIdenticalAndConstantForOffset) {
  const Raster a = dt::random_image(48, 40, 3, 2, 0, 200);
  const RasterF same = residual_map(a, a, 1.0);
  for (float v : same.data()) EXPECT_EQ(v, 0.0f);
  Raster b = a;
  for (auto& v : b.data()) v = static_cast<std::uint8_t>(v + 10);
  const RasterF offset = residual_map(a, b, 1.0);
  for (float v : offset.data()) EXPECT_NEAR(v, 10.0 / 255.0, 1e-6);
}

TEST(Residual, OccluderPeakIsLocalized) {
  const Raster a = dt::textured_image(96, 96, 3, 4);
  Raster b = a;
  for (int c = 0; c < 3; ++c)
    for (int y = 50; y < 70; ++y)
      for (int x = 20; x < 35; ++x) b.at(c, y, x) = 250;
  const RasterF r = residual_map(a, b, 1.0);
  int px = 0;
  int py = 0;
  float best = -1.0f;
  for (int y = 0; y < 96; ++y)
    for (int x = 0; x < 96; ++x)
      if (r.at(0, y, x) > best) {
        best = r.at(0, y, x);
        px = x;
        py = y;
      }
  EXPECT_GE(px, 20);
  EXPECT_LT(px, 35);
  EXPECT_GE(py, 50);
  EXPECT_LT(py, 70);
  EXPECT_EQ(r.at(0, 10, 80), 0.0f);
  EXPECT_THROW(residual_map(a, Raster(95, 96, 3), 1.0), Error);
}

TEST(FlowBlob, RoundTripAndLayout) {
  FlowField f(3, 2);
  f.u[1] = 1.5f;
  f.v[4] = -2.25f;
  f.valid[5] = 0;
  const auto bytes = serialize_flow(f);
  ASSERT_EQ(bytes.size(), 12u + 6 * 9);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "RWFL");
  EXPECT_EQ(bytes[4], 3);
  EXPECT_EQ(bytes[8], 2);
  // u[1] = 1.5f = 0x3FC00000, little-endian at offset 12 + 4.
  EXPECT_EQ(bytes[16 + 3], 0x3F);
  EXPECT_EQ(bytes[16 + 2], 0xC0);
  EXPECT_EQ(bytes.back(), 0);
  EXPECT_EQ(deserialize_flow(bytes), f);
  auto bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(deserialize_flow(bad), Error);
  bad = bytes;
  bad.pop_back();
  EXPECT_THROW(deserialize_flow(bad), Error);
}
