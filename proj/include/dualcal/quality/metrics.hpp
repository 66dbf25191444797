#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include "json.hpp"

#include "dualcal/error.hpp"
#include "dualcal/imagekit/filter.hpp"
#include "dualcal/imagekit/image.hpp"

namespace dualcal {

inline constexpr double kPsnrCap = 99.0;

struct SsimParams {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double range = 255.0;
};

struct MetricsReport {
  double psnr_db = 0.0;
  double ssim = 0.0;
  double lowfreq_l1 = 0.0;
  double valid_pixel_fraction = 0.0;
};

namespace detail {

inline void check_pair(const Raster& a, const Raster& b, const Mask* mask, const char* op) {
  require(a.same_shape(b), std::string(op) + ": image dimensions differ");
  if (mask) require(mask->channels() == 1 && mask->same_size(a), std::string(op) + ": mask dimensions differ");
}

// BT.601 luma in [0, 255], double precision.
inline std::vector<double> luma255(const Raster& img) {
  std::vector<double> out(img.pixel_count());
  if (img.channels() == 1) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = img.plane(0)[i];
    return out;
  }
  const auto r = img.plane(0), g = img.plane(1), b = img.plane(2);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = 0.299 * r[i] + 0.587 * g[i] + 0.114 * b[i];
  return out;
}

// Separable filtering restricted to windows fully inside the image; the
// result is (w - k + 1) x (h - k + 1).
inline std::vector<double> filter_valid(const std::vector<double>& src, int w, int h, const std::vector<double>& k) {
  const int n = static_cast<int>(k.size());
  const int ow = w - n + 1;
  const int oh = h - n + 1;
  std::vector<double> tmp(std::size_t(ow) * h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int i = 0; i < n; ++i) acc += k[i] * src[std::size_t(y) * w + x + i];
      tmp[std::size_t(y) * ow + x] = acc;
    }
  std::vector<double> out(std::size_t(ow) * oh);
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int j = 0; j < n; ++j) acc += k[j] * tmp[std::size_t(y + j) * ow + x];
      out[std::size_t(y) * ow + x] = acc;
    }
  return out;
}

}  // namespace detail

// RGB PSNR over mask-valid pixels (all channels), MAX = 255, capped at 99 dB.
inline double psnr(const Raster& a, const Raster& b, const Mask* mask = nullptr) {
  detail::check_pair(a, b, mask, "psnr");
  std::uint64_t sse = 0;
  std::uint64_t n = 0;
  for (int c = 0; c < a.channels(); ++c) {
    const auto pa = a.plane(c);
    const auto pb = b.plane(c);
    for (std::size_t i = 0; i < pa.size(); ++i) {
      if (mask && mask->data()[i] != kMaskValid) continue;
      const int d = int(pa[i]) - int(pb[i]);
      sse += std::uint64_t(d * d);
      ++n;
    }
  }
  if (n == 0) throw Error(ErrorCode::no_statistics, "psnr: mask leaves no valid pixels");
  if (sse == 0) return kPsnrCap;
  const double mse = double(sse) / double(n);
  return std::min(kPsnrCap, 10.0 * std::log10(255.0 * 255.0 / mse));
}

// Single-scale SSIM on luma, averaged over window centres whose whole window
// is mask-valid.
inline double ssim(const Raster& a, const Raster& b, const Mask* mask = nullptr, const SsimParams& p = {}) {
  detail::check_pair(a, b, mask, "ssim");
  const int w = a.width();
  const int h = a.height();
  detail::require(w >= p.window && h >= p.window, "ssim: images must be at least window x window");
  const auto la = detail::luma255(a);
  const auto lb = detail::luma255(b);
  std::vector<double> aa(la.size()), bb(la.size()), ab(la.size());
  for (std::size_t i = 0; i < la.size(); ++i) {
    aa[i] = la[i] * la[i];
    bb[i] = lb[i] * lb[i];
    ab[i] = la[i] * lb[i];
  }
  const auto k = gaussian_kernel_1d(p.window, p.sigma);
  const auto mu_a = detail::filter_valid(la, w, h, k);
  const auto mu_b = detail::filter_valid(lb, w, h, k);
  const auto e_aa = detail::filter_valid(aa, w, h, k);
  const auto e_bb = detail::filter_valid(bb, w, h, k);
  const auto e_ab = detail::filter_valid(ab, w, h, k);

  const int ow = w - p.window + 1;
  const int oh = h - p.window + 1;
  // Invalid-pixel counts per window via a summed-area table.
  std::vector<std::uint32_t> sat(std::size_t(w + 1) * (h + 1), 0);
  if (mask) {
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        sat[std::size_t(y + 1) * (w + 1) + x + 1] = (mask->at(0, y, x) != kMaskValid) +
                                                    sat[std::size_t(y) * (w + 1) + x + 1] +
                                                    sat[std::size_t(y + 1) * (w + 1) + x] -
                                                    sat[std::size_t(y) * (w + 1) + x];
  }
  const double c1 = (p.k1 * p.range) * (p.k1 * p.range);
  const double c2 = (p.k2 * p.range) * (p.k2 * p.range);
  double sum = 0.0;
  std::size_t n = 0;
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      if (mask) {
        const auto at = [&](int yy, int xx) { return sat[std::size_t(yy) * (w + 1) + xx]; };
        const int n_bad = int(at(y + p.window, x + p.window)) - int(at(y, x + p.window)) - int(at(y + p.window, x)) +
                          int(at(y, x));
        if (n_bad != 0) continue;
      }
      const std::size_t i = std::size_t(y) * ow + x;
      const double ma = mu_a[i];
      const double mb = mu_b[i];
      const double va = e_aa[i] - ma * ma;
      const double vb = e_bb[i] - mb * mb;
      const double cov = e_ab[i] - ma * mb;
      sum += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
      ++n;
    }
  }
  if (n == 0) throw Error(ErrorCode::no_statistics, "ssim: no fully valid window");
  return sum / double(n);
}

// Mean absolute difference of the 3x3 (sigma 0.5) blurred images, normalized
// units, all channels.
inline double lowfreq_fidelity(const Raster& a, const Raster& b) {
  detail::check_pair(a, b, nullptr, "lowfreq_fidelity");
  const RasterF ba = detail::blur_float(to_float(a), 3, 0.5);
  const RasterF bb = detail::blur_float(to_float(b), 3, 0.5);
  double acc = 0.0;
  for (std::size_t i = 0; i < ba.data().size(); ++i) acc += std::abs(double(ba.data()[i]) - double(bb.data()[i]));
  return acc / double(ba.data().size());
}

inline double valid_fraction(const Mask* mask, std::size_t pixels) {
  if (!mask) return 1.0;
  std::size_t n = 0;
  for (auto v : mask->data()) n += v == kMaskValid;
  return double(n) / double(pixels);
}

inline MetricsReport evaluate_pair(const Raster& out, const Raster& gt, const Mask* mask = nullptr) {
  MetricsReport r;
  r.psnr_db = psnr(out, gt, mask);
  r.ssim = ssim(out, gt, mask);
  r.lowfreq_l1 = lowfreq_fidelity(out, gt);
  r.valid_pixel_fraction = valid_fraction(mask, out.pixel_count());
  return r;
}

inline nlohmann::json to_json(const MetricsReport& r) {
  return {{"psnr_db", r.psnr_db}, {"ssim", r.ssim}, {"lowfreq_l1", r.lowfreq_l1},
          {"valid_pixel_fraction", r.valid_pixel_fraction}};
}

inline std::string format_table_header() {
  char buf[128];
  std::snprintf(buf, sizeof buf, "%-24s %10s %8s", "method", "PSNR(dB)", "SSIM");
  return buf;
}

inline std::string format_table_row(const std::string& name, double psnr_db, double ssim_value) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-24s %10.4f %8.4f", name.c_str(), psnr_db, ssim_value);
  return buf;
}

}  // namespace dualcal
