#pragma once

#include <cmath>

#include "dualcal/imagekit/image.hpp"
#include "dualcal/imagekit/resample.hpp"
#include "dualcal/registration/homography.hpp"

namespace dualcal {

template <typename T>
struct WarpResult {
  Image<T> image;
  Mask coverage;  // kMaskValid where covered, kMaskProblem elsewhere
};

namespace detail {

// True when every tap carrying non-zero bicubic weight at coordinate v lies in
// [0, size - 1]. Integer coordinates touch a single tap.
inline bool footprint_inside(double v, int size) {
  const double f = std::floor(v);
  const int i = static_cast<int>(f);
  if (v - f == 0.0) return i >= 0 && i <= size - 1;
  return i - 1 >= 0 && i + 2 <= size - 1;
}

}  // namespace detail

// Inverse-mapping warp: out(p) = img(H^-1 p). H maps source pixel-center
// coordinates to destination ones. Uncovered pixels are 0.
template <typename T>
WarpResult<T> warp_projective(const Image<T>& img, const Homography& h, int out_w, int out_h) {
  detail::require(out_w >= 1 && out_h >= 1, "warp target must be at least 1x1");
  const Homography inv = h.inverse();
  WarpResult<T> out{Image<T>(out_w, out_h, img.channels()), Mask(out_w, out_h, 1, kMaskProblem)};
  for (int y = 0; y < out_h; ++y) {
    for (int x = 0; x < out_w; ++x) {
      const Point2 p{double(x), double(y)};
      if (!(inv.depth(p) > 0.0)) continue;
      const Point2 s = inv.apply(p);
      if (!std::isfinite(s.x) || !std::isfinite(s.y)) continue;
      if (!detail::footprint_inside(s.x, img.width()) || !detail::footprint_inside(s.y, img.height())) continue;
      out.coverage.at(0, y, x) = kMaskValid;
      for (int c = 0; c < img.channels(); ++c) {
        const double v = detail::bicubic_sample(img.plane(c).data(), img.width(), img.height(), s.x, s.y);
        out.image.at(c, y, x) = detail::store_sample<T>(v);
      }
    }
  }
  return out;
}

// out(p) = img(m p) with clamp-to-edge bicubic sampling everywhere; m maps
// output pixel centers to source pixel centers.
template <typename T>
Image<T> resample_projective(const Image<T>& img, const Homography& m, int out_w, int out_h) {
  detail::require(out_w >= 1 && out_h >= 1, "resample target must be at least 1x1");
  Image<T> out(out_w, out_h, img.channels());
  for (int y = 0; y < out_h; ++y) {
    for (int x = 0; x < out_w; ++x) {
      const Point2 s = m.apply({double(x), double(y)});
      for (int c = 0; c < img.channels(); ++c) {
        const double v = detail::bicubic_sample(img.plane(c).data(), img.width(), img.height(), s.x, s.y);
        out.at(c, y, x) = detail::store_sample<T>(v);
      }
    }
  }
  return out;
}

}  // namespace dualcal
