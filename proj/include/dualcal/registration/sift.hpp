#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "dualcal/imagekit/filter.hpp"
#include "dualcal/imagekit/image.hpp"

// Difference-of-Gaussians keypoints with gradient-histogram descriptors.

namespace dualcal {

struct SiftParams {
  int octaves = 4;
  int levels = 3;                     // sampled scales per octave
  double sigma = 1.6;                 // base blur of each octave
  double init_sigma = 0.5;            // blur assumed present in the input
  double contrast_threshold = 0.03;   // on |D(x^)|, scaled by 1/levels
  double edge_ratio = 10.0;
  int border = 5;
};

struct Keypoint {
  double x = 0.0;            // full-resolution pixel-center coordinates
  double y = 0.0;
  double scale = 0.0;        // blur sigma in full-resolution pixels
  double orientation = 0.0;  // radians in [0, 2 pi), image (y-down) convention
  double response = 0.0;     // |D| at the refined extremum
  int octave = 0;
};

inline constexpr int kDescriptorSize = 128;

struct Descriptor {
  std::array<float, kDescriptorSize> v{};
};

struct Feature {
  Keypoint keypoint;
  Descriptor descriptor;
};

namespace detail {

struct Plane {
  int w = 0;
  int h = 0;
  std::vector<float> px;

  float at(int y, int x) const { return px[static_cast<std::size_t>(y) * w + x]; }
};

inline Plane blur_plane(const Plane& in, double sigma) {
  const auto k = gaussian_kernel_1d(kernel_size_for_sigma(sigma), sigma);
  const auto out = convolve_separable(in.px.data(), in.w, in.h, k);
  Plane p{in.w, in.h, std::vector<float>(out.size())};
  for (std::size_t i = 0; i < out.size(); ++i) p.px[i] = static_cast<float>(out[i]);
  return p;
}

inline Plane decimate(const Plane& in) {
  Plane p{(in.w + 1) / 2, (in.h + 1) / 2, {}};
  p.px.resize(static_cast<std::size_t>(p.w) * p.h);
  for (int y = 0; y < p.h; ++y)
    for (int x = 0; x < p.w; ++x) p.px[static_cast<std::size_t>(y) * p.w + x] = in.at(2 * y, 2 * x);
  return p;
}

constexpr int kOriBins = 36;
constexpr int kDescWidth = 4;
constexpr int kDescBins = 8;
constexpr double kOriSigmaFactor = 1.5;
constexpr double kOriRadiusFactor = 3.0 * kOriSigmaFactor;
constexpr double kOriPeakRatio = 0.8;
constexpr double kDescScaleFactor = 3.0;
constexpr double kDescMagThreshold = 0.2;

inline std::vector<double> orientation_peaks(const Plane& img, int xi, int yi, double scale_oct) {
  const int radius = static_cast<int>(std::lround(kOriRadiusFactor * scale_oct));
  const double weight_scale = -1.0 / (2.0 * (kOriSigmaFactor * scale_oct) * (kOriSigmaFactor * scale_oct));
  std::array<double, kOriBins> hist{};
  for (int dy = -radius; dy <= radius; ++dy) {
    const int y = yi + dy;
    if (y <= 0 || y >= img.h - 1) continue;
    for (int dx = -radius; dx <= radius; ++dx) {
      const int x = xi + dx;
      if (x <= 0 || x >= img.w - 1) continue;
      const double gx = double(img.at(y, x + 1)) - img.at(y, x - 1);
      const double gy = double(img.at(y + 1, x)) - img.at(y - 1, x);
      const double mag = std::sqrt(gx * gx + gy * gy);
      double ang = std::atan2(gy, gx);
      if (ang < 0) ang += 2 * M_PI;
      int bin = static_cast<int>(std::lround(kOriBins * ang / (2 * M_PI)));
      bin = ((bin % kOriBins) + kOriBins) % kOriBins;
      hist[bin] += std::exp((dx * dx + dy * dy) * weight_scale) * mag;
    }
  }
  std::array<double, kOriBins> smooth{};
  for (int i = 0; i < kOriBins; ++i) {
    auto h = [&](int k) { return hist[((i + k) % kOriBins + kOriBins) % kOriBins]; };
    smooth[i] = (h(-2) + h(2)) * (1.0 / 16) + (h(-1) + h(1)) * (4.0 / 16) + h(0) * (6.0 / 16);
  }
  const double max_val = *std::max_element(smooth.begin(), smooth.end());
  std::vector<double> peaks;
  if (max_val <= 0.0) return peaks;
  for (int i = 0; i < kOriBins; ++i) {
    const double l = smooth[(i + kOriBins - 1) % kOriBins];
    const double r = smooth[(i + 1) % kOriBins];
    const double c = smooth[i];
    if (c > l && c > r && c >= kOriPeakRatio * max_val) {
      double bin = i + 0.5 * (l - r) / (l - 2 * c + r);
      if (bin < 0) bin += kOriBins;
      if (bin >= kOriBins) bin -= kOriBins;
      peaks.push_back(2 * M_PI * bin / kOriBins);
    }
  }
  return peaks;
}

inline bool compute_descriptor(const Plane& img, double x, double y, double ori, double scale_oct, Descriptor& out) {
  constexpr int d = kDescWidth;
  constexpr int n = kDescBins;
  const double cos_t = std::cos(ori);
  const double sin_t = std::sin(ori);
  const double bins_per_rad = n / (2 * M_PI);
  const double exp_scale = -1.0 / (d * d * 0.5);
  const double hist_width = kDescScaleFactor * scale_oct;
  int radius = static_cast<int>(std::lround(hist_width * std::sqrt(2.0) * (d + 1) * 0.5));
  radius = std::min(radius, static_cast<int>(std::sqrt(double(img.w) * img.w + double(img.h) * img.h)));
  const int xi = static_cast<int>(std::lround(x));
  const int yi = static_cast<int>(std::lround(y));

  std::array<double, (d + 2) * (d + 2) * (n + 2)> hist{};
  auto cell = [&](int r, int c, int o) -> double& { return hist[(static_cast<std::size_t>(r) * (d + 2) + c) * (n + 2) + o]; };

  for (int i = -radius; i <= radius; ++i) {
    for (int j = -radius; j <= radius; ++j) {
      // Rotate the sample offset into the keypoint frame.
      const double c_rot = (j * cos_t + i * sin_t) / hist_width;
      const double r_rot = (-j * sin_t + i * cos_t) / hist_width;
      const double rbin = r_rot + d / 2.0 - 0.5;
      const double cbin = c_rot + d / 2.0 - 0.5;
      const int r = yi + i;
      const int c = xi + j;
      if (!(rbin > -1 && rbin < d && cbin > -1 && cbin < d)) continue;
      if (r <= 0 || r >= img.h - 1 || c <= 0 || c >= img.w - 1) continue;
      const double gx = double(img.at(r, c + 1)) - img.at(r, c - 1);
      const double gy = double(img.at(r + 1, c)) - img.at(r - 1, c);
      const double mag = std::sqrt(gx * gx + gy * gy) * std::exp((c_rot * c_rot + r_rot * r_rot) * exp_scale);
      double obin = (std::atan2(gy, gx) - ori) * bins_per_rad;
      obin = std::fmod(obin, double(n));
      if (obin < 0) obin += n;

      const int r0 = static_cast<int>(std::floor(rbin));
      const int c0 = static_cast<int>(std::floor(cbin));
      int o0 = static_cast<int>(std::floor(obin));
      const double fr = rbin - r0;
      const double fc = cbin - c0;
      const double fo = obin - o0;
      o0 = o0 % n;
      for (int a = 0; a <= 1; ++a) {
        const double wr = a ? fr : 1.0 - fr;
        for (int b = 0; b <= 1; ++b) {
          const double wc = b ? fc : 1.0 - fc;
          for (int e = 0; e <= 1; ++e) {
            const double wo = e ? fo : 1.0 - fo;
            cell(r0 + 1 + a, c0 + 1 + b, (o0 + e) % n) += mag * wr * wc * wo;
          }
        }
      }
    }
  }

  std::array<double, kDescriptorSize> v{};
  for (int r = 0; r < d; ++r)
    for (int c = 0; c < d; ++c)
      for (int o = 0; o < n; ++o) v[(r * d + c) * n + o] = cell(r + 1, c + 1, o);

  double norm = 0.0;
  for (double e : v) norm += e * e;
  norm = std::sqrt(norm);
  if (norm <= 0.0) return false;
  const double clip = kDescMagThreshold * norm;
  norm = 0.0;
  for (double& e : v) {
    e = std::min(e, clip);
    norm += e * e;
  }
  norm = std::sqrt(norm);
  for (int k = 0; k < kDescriptorSize; ++k) out.v[k] = static_cast<float>(v[k] / norm);
  return true;
}

}  // namespace detail

// Keypoints are ordered by octave, then scan order within each DoG layer.
// Images too small to hold a descriptor patch yield an empty list.
template <typename T>
std::vector<Feature> detect_and_describe(const Image<T>& img, const SiftParams& params = {}) {
  using detail::Plane;
  std::vector<Feature> features;
  const int min_side = 2 * (params.border + 3);
  if (std::min(img.width(), img.height()) < min_side) return features;

  Plane base{img.width(), img.height(), {}};
  {
    const RasterF y = luma(img);
    base.px.assign(y.data().begin(), y.data().end());
  }
  const double base_blur = std::sqrt(std::max(0.01, params.sigma * params.sigma - params.init_sigma * params.init_sigma));
  base = detail::blur_plane(base, base_blur);

  const int s = params.levels;
  std::vector<double> sig_incr(s + 3);
  sig_incr[0] = params.sigma;
  for (int i = 1; i < s + 3; ++i) {
    const double prev = params.sigma * std::pow(2.0, double(i - 1) / s);
    const double total = prev * std::pow(2.0, 1.0 / s);
    sig_incr[i] = std::sqrt(total * total - prev * prev);
  }

  const double prefilter = 0.5 * params.contrast_threshold / s;
  const double contrast = params.contrast_threshold / s;
  const double edge_limit = (params.edge_ratio + 1) * (params.edge_ratio + 1) / params.edge_ratio;

  for (int o = 0; o < params.octaves; ++o) {
    if (std::min(base.w, base.h) < min_side) break;
    std::vector<Plane> gauss(s + 3);
    gauss[0] = base;
    for (int i = 1; i < s + 3; ++i) gauss[i] = detail::blur_plane(gauss[i - 1], sig_incr[i]);
    std::vector<Plane> dog(s + 2);
    for (int i = 0; i < s + 2; ++i) {
      dog[i] = Plane{base.w, base.h, std::vector<float>(gauss[i].px.size())};
      for (std::size_t k = 0; k < dog[i].px.size(); ++k) dog[i].px[k] = gauss[i + 1].px[k] - gauss[i].px[k];
    }
    const int w = base.w;
    const int h = base.h;
    const int bd = params.border;

    for (int layer = 1; layer <= s; ++layer) {
      for (int y = bd; y < h - bd; ++y) {
        for (int x = bd; x < w - bd; ++x) {
          const float v = dog[layer].at(y, x);
          if (std::abs(v) <= prefilter) continue;
          bool is_max = true;
          bool is_min = true;
          for (int dl = -1; dl <= 1 && (is_max || is_min); ++dl) {
            for (int dy = -1; dy <= 1; ++dy) {
              for (int dx = -1; dx <= 1; ++dx) {
                if (dl == 0 && dy == 0 && dx == 0) continue;
                const float nb = dog[layer + dl].at(y + dy, x + dx);
                is_max = is_max && v > nb;
                is_min = is_min && v < nb;
              }
            }
          }
          if (!is_max && !is_min) continue;

          // Quadratic sub-pixel/sub-scale refinement.
          int xi = x;
          int yi = y;
          int li = layer;
          Eigen::Vector3d offset;
          Eigen::Vector3d grad;
          bool converged = false;
          for (int iter = 0; iter < 5; ++iter) {
            auto D = [&](int l, int yy, int xx) { return double(dog[l].at(yy, xx)); };
            grad << (D(li, yi, xi + 1) - D(li, yi, xi - 1)) * 0.5, (D(li, yi + 1, xi) - D(li, yi - 1, xi)) * 0.5,
                (D(li + 1, yi, xi) - D(li - 1, yi, xi)) * 0.5;
            const double c2 = 2 * D(li, yi, xi);
            const double dxx = D(li, yi, xi + 1) + D(li, yi, xi - 1) - c2;
            const double dyy = D(li, yi + 1, xi) + D(li, yi - 1, xi) - c2;
            const double dss = D(li + 1, yi, xi) + D(li - 1, yi, xi) - c2;
            const double dxy = (D(li, yi + 1, xi + 1) - D(li, yi + 1, xi - 1) - D(li, yi - 1, xi + 1) +
                                D(li, yi - 1, xi - 1)) * 0.25;
            const double dxs = (D(li + 1, yi, xi + 1) - D(li + 1, yi, xi - 1) - D(li - 1, yi, xi + 1) +
                                D(li - 1, yi, xi - 1)) * 0.25;
            const double dys = (D(li + 1, yi + 1, xi) - D(li + 1, yi - 1, xi) - D(li - 1, yi + 1, xi) +
                                D(li - 1, yi - 1, xi)) * 0.25;
            Eigen::Matrix3d hess;
            hess << dxx, dxy, dxs, dxy, dyy, dys, dxs, dys, dss;
            const auto lu = hess.fullPivLu();
            if (!lu.isInvertible()) break;
            offset = -lu.solve(grad);
            if (std::abs(offset.x()) < 0.5 && std::abs(offset.y()) < 0.5 && std::abs(offset.z()) < 0.5) {
              converged = true;
              break;
            }
            if (std::abs(offset.x()) > 1e4 || std::abs(offset.y()) > 1e4 || std::abs(offset.z()) > 1e4) break;
            xi += static_cast<int>(std::lround(offset.x()));
            yi += static_cast<int>(std::lround(offset.y()));
            li += static_cast<int>(std::lround(offset.z()));
            if (li < 1 || li > s || xi < bd || xi >= w - bd || yi < bd || yi >= h - bd) break;
          }
          if (!converged) continue;

          const double peak = double(dog[li].at(yi, xi)) + 0.5 * grad.dot(offset);
          if (std::abs(peak) < contrast) continue;
          {
            auto D = [&](int yy, int xx) { return double(dog[li].at(yy, xx)); };
            const double c2 = 2 * D(yi, xi);
            const double dxx = D(yi, xi + 1) + D(yi, xi - 1) - c2;
            const double dyy = D(yi + 1, xi) + D(yi - 1, xi) - c2;
            const double dxy = (D(yi + 1, xi + 1) - D(yi + 1, xi - 1) - D(yi - 1, xi + 1) + D(yi - 1, xi - 1)) * 0.25;
            const double tr = dxx + dyy;
            const double det = dxx * dyy - dxy * dxy;
            if (det <= 0 || tr * tr * params.edge_ratio >= edge_limit * params.edge_ratio * det) continue;
          }

          const double x_oct = xi + offset.x();
          const double y_oct = yi + offset.y();
          const double scale_oct = params.sigma * std::pow(2.0, (li + offset.z()) / s);
          const double factor = std::ldexp(1.0, o);
          const Plane& g = gauss[li];
          for (double ori : detail::orientation_peaks(g, xi, yi, scale_oct)) {
            Feature f;
            f.keypoint = {x_oct * factor, y_oct * factor, scale_oct * factor, ori, std::abs(peak), o};
            if (f.keypoint.x < 0 || f.keypoint.y < 0 || f.keypoint.x >= img.width() || f.keypoint.y >= img.height()) {
              continue;
            }
            if (!detail::compute_descriptor(g, x_oct, y_oct, ori, scale_oct, f.descriptor)) continue;
            features.push_back(f);
          }
        }
      }
    }
    base = detail::decimate(gauss[s]);
  }
  return features;
}

}  // namespace dualcal
