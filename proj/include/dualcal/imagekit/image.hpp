#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "dualcal/error.hpp"

namespace dualcal {

enum class Depth { U8, F32 };

template <typename T>
struct depth_of;
template <>
struct depth_of<std::uint8_t> {
  static constexpr Depth value = Depth::U8;
};
template <>
struct depth_of<float> {
  static constexpr Depth value = Depth::F32;
};

// Planar, row-major image buffer. Plane c occupies
// data[c * width * height, (c + 1) * width * height).
//
// U8 samples span [0, 255]; F32 samples are normalized so that 1.0 corresponds
// to 255 in U8 (derived maps such as gradient magnitudes may exceed 1).
template <typename T>
class Image {
  static_assert(std::is_same_v<T, std::uint8_t> || std::is_same_v<T, float>,
                "Image samples are either uint8_t or float");

 public:
  using value_type = T;

  Image() = default;

  Image(int width, int height, int channels, T fill = T{})
      : width_(width), height_(height), channels_(channels) {
    detail::require(width >= 1 && height >= 1, "image dimensions must be at least 1x1");
    detail::require(channels == 1 || channels == 3, "image must have 1 or 3 channels");
    data_.assign(static_cast<std::size_t>(width) * height * channels, fill);
  }

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  int channels() const noexcept { return channels_; }
  static constexpr Depth depth() noexcept { return depth_of<T>::value; }
  bool empty() const noexcept { return data_.empty(); }
  std::size_t pixel_count() const noexcept { return static_cast<std::size_t>(width_) * height_; }

  T& at(int c, int y, int x) { return data_[index(c, y, x)]; }
  const T& at(int c, int y, int x) const { return data_[index(c, y, x)]; }

  // Clamp-to-edge read.
  const T& clamped(int c, int y, int x) const {
    return at(c, std::clamp(y, 0, height_ - 1), std::clamp(x, 0, width_ - 1));
  }

  std::span<T> plane(int c) { return {data_.data() + c * pixel_count(), pixel_count()}; }
  std::span<const T> plane(int c) const {
    return {data_.data() + c * pixel_count(), pixel_count()};
  }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }

  template <typename U>
  bool same_shape(const Image<U>& other) const noexcept {
    return width_ == other.width() && height_ == other.height() && channels_ == other.channels();
  }
  template <typename U>
  bool same_size(const Image<U>& other) const noexcept {
    return width_ == other.width() && height_ == other.height();
  }

  friend bool operator==(const Image&, const Image&) = default;

 private:
  std::size_t index(int c, int y, int x) const noexcept {
    return (static_cast<std::size_t>(c) * height_ + y) * width_ + x;
  }

  int width_ = 0;
  int height_ = 0;
  int channels_ = 0;
  std::vector<T> data_;
};

using Raster = Image<std::uint8_t>;
using RasterF = Image<float>;

// 1-channel U8 raster; 0 marks a valid pixel, 255 a problematic one.
using Mask = Image<std::uint8_t>;
inline constexpr std::uint8_t kMaskValid = 0;
inline constexpr std::uint8_t kMaskProblem = 255;

inline bool is_binary_mask(const Mask& m) {
  if (m.channels() != 1) return false;
  return std::all_of(m.data().begin(), m.data().end(),
                     [](std::uint8_t v) { return v == kMaskValid || v == kMaskProblem; });
}

// Round half-to-even (default FP environment) and saturate.
inline std::uint8_t saturate_u8(double v) {
  if (!(v > 0.0)) return 0;  // also maps NaN to 0
  if (v >= 255.0) return 255;
  return static_cast<std::uint8_t>(std::nearbyint(v));
}

inline RasterF to_float(const Raster& img) {
  RasterF out(img.width(), img.height(), img.channels());
  auto src = img.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = static_cast<float>(src[i]) / 255.0f;
  return out;
}

inline Raster to_u8(const RasterF& img) {
  Raster out(img.width(), img.height(), img.channels());
  auto src = img.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = saturate_u8(double(src[i]) * 255.0);
  return out;
}

// BT.601 luma on normalized float samples.
template <typename T>
RasterF luma(const Image<T>& img) {
  constexpr float scale = std::is_same_v<T, std::uint8_t> ? 1.0f / 255.0f : 1.0f;
  RasterF out(img.width(), img.height(), 1);
  auto dst = out.data();
  if (img.channels() == 1) {
    auto p = img.plane(0);
    for (std::size_t i = 0; i < p.size(); ++i) dst[i] = static_cast<float>(p[i]) * scale;
    return out;
  }
  auto r = img.plane(0);
  auto g = img.plane(1);
  auto b = img.plane(2);
  for (std::size_t i = 0; i < dst.size(); ++i) {
    dst[i] = (0.299f * static_cast<float>(r[i]) + 0.587f * static_cast<float>(g[i]) +
              0.114f * static_cast<float>(b[i])) *
             scale;
  }
  return out;
}

}  // namespace dualcal
