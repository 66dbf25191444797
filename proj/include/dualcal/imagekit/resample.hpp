#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <type_traits>
#include <vector>

#include "dualcal/imagekit/image.hpp"

namespace dualcal {

namespace detail {

// Catmull-Rom (a = -0.5) weights for taps at offsets -1, 0, 1, 2 from floor(x).
inline std::array<double, 4> cubic_weights(double t) {
  const double t2 = t * t;
  const double t3 = t2 * t;
  return {-0.5 * t3 + t2 - 0.5 * t, 1.5 * t3 - 2.5 * t2 + 1.0, -1.5 * t3 + 2.0 * t2 + 0.5 * t,
          0.5 * t3 - 0.5 * t2};
}

// Clamp-to-edge bicubic sample of a single plane at continuous pixel-center
// coordinates (integer coordinates hit sample centers exactly).
template <typename T>
double bicubic_sample(const T* plane, int width, int height, double x, double y) {
  if (std::isnan(x) || std::isnan(y)) return 0.0;
  // Beyond one pixel outside the frame every tap clamps to the edge anyway.
  x = std::clamp(x, -2.0, double(width) + 1.0);
  y = std::clamp(y, -2.0, double(height) + 1.0);
  const double fx = std::floor(x);
  const double fy = std::floor(y);
  const int ix = static_cast<int>(fx);
  const int iy = static_cast<int>(fy);
  const auto wx = cubic_weights(x - fx);
  const auto wy = cubic_weights(y - fy);
  double acc = 0.0;
  for (int j = 0; j < 4; ++j) {
    if (wy[j] == 0.0) continue;
    const int yy = std::clamp(iy - 1 + j, 0, height - 1);
    const T* row = plane + static_cast<std::size_t>(yy) * width;
    double racc = 0.0;
    for (int i = 0; i < 4; ++i) {
      if (wx[i] == 0.0) continue;
      const int xx = std::clamp(ix - 1 + i, 0, width - 1);
      racc += wx[i] * static_cast<double>(row[xx]);
    }
    acc += wy[j] * racc;
  }
  return acc;
}

struct CubicTaps {
  int base = 0;
  std::array<double, 4> w{};
};

inline std::vector<CubicTaps> resample_taps(int in_size, int out_size) {
  std::vector<CubicTaps> taps(out_size);
  const double ratio = static_cast<double>(in_size) / out_size;
  for (int o = 0; o < out_size; ++o) {
    const double src = (o + 0.5) * ratio - 0.5;
    const double f = std::floor(src);
    taps[o].base = static_cast<int>(f) - 1;
    taps[o].w = cubic_weights(src - f);
  }
  return taps;
}

// Separable center-aligned bicubic resample of one plane, no output clamping.
template <typename T>
std::vector<double> resample_plane(const T* src, int in_w, int in_h, int out_w, int out_h) {
  const auto tx = resample_taps(in_w, out_w);
  const auto ty = resample_taps(in_h, out_h);
  std::vector<double> horiz(static_cast<std::size_t>(out_w) * in_h);
  for (int y = 0; y < in_h; ++y) {
    const T* row = src + static_cast<std::size_t>(y) * in_w;
    double* out = horiz.data() + static_cast<std::size_t>(y) * out_w;
    for (int x = 0; x < out_w; ++x) {
      double acc = 0.0;
      for (int i = 0; i < 4; ++i) {
        if (tx[x].w[i] == 0.0) continue;
        acc += tx[x].w[i] * static_cast<double>(row[std::clamp(tx[x].base + i, 0, in_w - 1)]);
      }
      out[x] = acc;
    }
  }
  std::vector<double> out(static_cast<std::size_t>(out_w) * out_h);
  for (int y = 0; y < out_h; ++y) {
    double* orow = out.data() + static_cast<std::size_t>(y) * out_w;
    for (int i = 0; i < 4; ++i) {
      const double w = ty[y].w[i];
      if (w == 0.0) continue;
      const double* hrow =
          horiz.data() + static_cast<std::size_t>(std::clamp(ty[y].base + i, 0, in_h - 1)) * out_w;
      for (int x = 0; x < out_w; ++x) orow[x] += w * hrow[x];
    }
  }
  return out;
}

template <typename T>
T store_sample(double v) {
  if constexpr (std::is_same_v<T, std::uint8_t>) {
    return saturate_u8(v);
  } else {
    return static_cast<float>(std::clamp(v, 0.0, 1.0));
  }
}

}  // namespace detail

// Catmull-Rom bicubic resize with center-aligned coordinates and clamp-to-edge
// sampling; output saturated to the depth's range.
template <typename T>
Image<T> resample_bicubic(const Image<T>& img, int out_w, int out_h) {
  detail::require(out_w >= 1 && out_h >= 1, "resample target must be at least 1x1");
  Image<T> out(out_w, out_h, img.channels());
  for (int c = 0; c < img.channels(); ++c) {
    const auto plane = detail::resample_plane(img.plane(c).data(), img.width(), img.height(), out_w, out_h);
    auto dst = out.plane(c);
    for (std::size_t i = 0; i < plane.size(); ++i) dst[i] = detail::store_sample<T>(plane[i]);
  }
  return out;
}

}  // namespace dualcal
