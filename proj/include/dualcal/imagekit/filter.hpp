#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "dualcal/imagekit/image.hpp"
#include "dualcal/imagekit/resample.hpp"

namespace dualcal {

struct Kernel2D {
  int size = 0;
  std::vector<double> weights;  // row-major size x size

  double at(int row, int col) const { return weights[static_cast<std::size_t>(row) * size + col]; }
};

inline int kernel_size_for_sigma(double sigma) {
  return 2 * static_cast<int>(std::ceil(3.0 * sigma)) + 1;
}

// Sampled Gaussian exp(-x^2 / 2 sigma^2) on integer offsets, normalized to sum 1.
inline std::vector<double> gaussian_kernel_1d(int size, double sigma) {
  detail::require(size >= 1 && size % 2 == 1, "Gaussian kernel size must be odd");
  detail::require(sigma > 0.0, "Gaussian sigma must be positive");
  const int r = size / 2;
  std::vector<double> k(size);
  double sum = 0.0;
  for (int i = -r; i <= r; ++i) {
    k[i + r] = std::exp(-(i * i) / (2.0 * sigma * sigma));
    sum += k[i + r];
  }
  for (double& v : k) v /= sum;
  return k;
}

inline Kernel2D gaussian_kernel(int size, double sigma) {
  const auto k = gaussian_kernel_1d(size, sigma);
  Kernel2D out{size, std::vector<double>(static_cast<std::size_t>(size) * size)};
  for (int r = 0; r < size; ++r) {
    for (int c = 0; c < size; ++c) out.weights[static_cast<std::size_t>(r) * size + c] = k[r] * k[c];
  }
  return out;
}

namespace detail {

// Separable convolution of one plane with a symmetric 1D kernel, clamp-to-edge.
template <typename T>
std::vector<double> convolve_separable(const T* src, int w, int h, const std::vector<double>& k) {
  const int r = static_cast<int>(k.size()) / 2;
  std::vector<double> tmp(static_cast<std::size_t>(w) * h);
  for (int y = 0; y < h; ++y) {
    const T* row = src + static_cast<std::size_t>(y) * w;
    double* out = tmp.data() + static_cast<std::size_t>(y) * w;
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -r; i <= r; ++i) acc += k[i + r] * static_cast<double>(row[std::clamp(x + i, 0, w - 1)]);
      out[x] = acc;
    }
  }
  std::vector<double> out(static_cast<std::size_t>(w) * h, 0.0);
  for (int y = 0; y < h; ++y) {
    double* orow = out.data() + static_cast<std::size_t>(y) * w;
    for (int i = -r; i <= r; ++i) {
      const double* trow = tmp.data() + static_cast<std::size_t>(std::clamp(y + i, 0, h - 1)) * w;
      const double wk = k[i + r];
      for (int x = 0; x < w; ++x) orow[x] += wk * trow[x];
    }
  }
  return out;
}

inline RasterF blur_float(const RasterF& img, int size, double sigma) {
  const auto k = gaussian_kernel_1d(size, sigma);
  RasterF out(img.width(), img.height(), img.channels());
  for (int c = 0; c < img.channels(); ++c) {
    const auto p = convolve_separable(img.plane(c).data(), img.width(), img.height(), k);
    auto dst = out.plane(c);
    for (std::size_t i = 0; i < p.size(); ++i) dst[i] = static_cast<float>(p[i]);
  }
  return out;
}

}  // namespace detail

template <typename T>
Image<T> gaussian_blur(const Image<T>& img, int size, double sigma) {
  detail::require(size % 2 == 1 && size >= 1, "gaussian_blur: kernel size must be odd");
  detail::require(sigma > 0.0, "gaussian_blur: sigma must be positive");
  const auto k = gaussian_kernel_1d(size, sigma);
  Image<T> out(img.width(), img.height(), img.channels());
  for (int c = 0; c < img.channels(); ++c) {
    const auto p = detail::convolve_separable(img.plane(c).data(), img.width(), img.height(), k);
    auto dst = out.plane(c);
    for (std::size_t i = 0; i < p.size(); ++i) {
      if constexpr (std::is_same_v<T, std::uint8_t>) {
        dst[i] = saturate_u8(p[i]);
      } else {
        dst[i] = static_cast<float>(p[i]);
      }
    }
  }
  return out;
}

// Sobel gradient magnitude of the BT.601 luma (normalized units), clamp-to-edge.
template <typename T>
RasterF sobel_magnitude(const Image<T>& img) {
  const RasterF y = luma(img);
  const int w = y.width();
  const int h = y.height();
  RasterF out(w, h, 1);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      auto p = [&](int dy, int dx) { return static_cast<double>(y.clamped(0, r + dy, c + dx)); };
      const double gx = (p(-1, 1) + 2.0 * p(0, 1) + p(1, 1)) - (p(-1, -1) + 2.0 * p(0, -1) + p(1, -1));
      const double gy = (p(1, -1) + 2.0 * p(1, 0) + p(1, 1)) - (p(-1, -1) + 2.0 * p(-1, 0) + p(-1, 1));
      out.at(0, r, c) = static_cast<float>(std::sqrt(gx * gx + gy * gy));
    }
  }
  return out;
}

template <typename T>
Image<T> center_crop(const Image<T>& img, int out_w, int out_h) {
  detail::require(out_w >= 1 && out_h >= 1, "center_crop: target must be at least 1x1");
  detail::require(out_w <= img.width() && out_h <= img.height(),
                  "center_crop: crop " + std::to_string(out_w) + "x" + std::to_string(out_h) +
                      " exceeds image " + std::to_string(img.width()) + "x" +
                      std::to_string(img.height()));
  const int x0 = (img.width() - out_w) / 2;
  const int y0 = (img.height() - out_h) / 2;
  Image<T> out(out_w, out_h, img.channels());
  for (int c = 0; c < img.channels(); ++c) {
    for (int y = 0; y < out_h; ++y) {
      for (int x = 0; x < out_w; ++x) out.at(c, y, x) = img.at(c, y + y0, x + x0);
    }
  }
  return out;
}

}  // namespace dualcal
