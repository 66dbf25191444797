#pragma once

#include <array>
#include <cmath>
#include <vector>

#include "dualcal/colormap/lut.hpp"
#include "dualcal/error.hpp"
#include "dualcal/imagekit/image.hpp"

namespace dualcal {

struct Lut3DCell {
  std::array<double, 3> src_mean{};
  std::array<double, 3> target_mean{};
  std::size_t count = 0;
};

// Joint-RGB binned statistics. Application adds the trilinearly interpolated
// per-cell mean offset (target - src) to each pixel, which keeps an identity
// pair exact instead of snapping colours to cell means.
struct Lut3D {
  int bins = 32;
  std::vector<Lut3DCell> cells;  // index (r * bins + g) * bins + b
  ColorLUT fallback;             // per-channel table for empty neighbourhoods

  const Lut3DCell& cell(int r, int g, int b) const { return cells[(std::size_t(r) * bins + g) * bins + b]; }
};

inline bool valid_lut3d_bins(int bins) { return bins >= 1 && bins <= 64 && (bins & (bins - 1)) == 0; }

inline Lut3D build_lut3d(const Raster& src, const Raster& target, int bins = 32, const Mask* roi = nullptr) {
  detail::require(src.same_shape(target), "build_lut3d: src and target dimensions differ");
  detail::require(src.channels() == 3, "build_lut3d: RGB input required");
  detail::require(valid_lut3d_bins(bins), "build_lut3d: bins must be a power of two in [1, 64]");
  Lut3D lut;
  lut.bins = bins;
  lut.fallback = build_intensity_lut(src, target, roi);
  lut.cells.resize(std::size_t(bins) * bins * bins);
  const int shift = 8 - static_cast<int>(std::log2(bins));
  const auto sr = src.plane(0), sg = src.plane(1), sb = src.plane(2);
  const auto tr = target.plane(0), tg = target.plane(1), tb = target.plane(2);
  for (std::size_t i = 0; i < src.pixel_count(); ++i) {
    if (!detail::in_roi(roi, i)) continue;
    auto& c = lut.cells[(std::size_t(sr[i] >> shift) * bins + (sg[i] >> shift)) * bins + (sb[i] >> shift)];
    c.src_mean[0] += sr[i];
    c.src_mean[1] += sg[i];
    c.src_mean[2] += sb[i];
    c.target_mean[0] += tr[i];
    c.target_mean[1] += tg[i];
    c.target_mean[2] += tb[i];
    ++c.count;
  }
  for (auto& c : lut.cells) {
    if (c.count == 0) continue;
    for (int k = 0; k < 3; ++k) {
      c.src_mean[k] /= double(c.count);
      c.target_mean[k] /= double(c.count);
    }
  }
  return lut;
}

namespace detail {

struct AxisTaps {
  int i0 = 0;
  int i1 = 0;
  double f = 0.0;
};

// Cell centres sit at (i + 0.5) * 256 / bins - 0.5.
inline AxisTaps axis_taps(int v, int bins) {
  const double p = (v + 0.5) * bins / 256.0 - 0.5;
  if (p <= 0.0) return {0, 0, 0.0};
  if (p >= bins - 1) return {bins - 1, bins - 1, 0.0};
  const int i0 = static_cast<int>(std::floor(p));
  return {i0, i0 + 1, p - i0};
}

}  // namespace detail

inline Raster apply_lut3d(const Raster& img, const Lut3D& lut) {
  detail::require(img.channels() == 3, "apply_lut3d: RGB input required");
  Raster out(img.width(), img.height(), 3);
  const auto r = img.plane(0), g = img.plane(1), b = img.plane(2);
  for (std::size_t i = 0; i < img.pixel_count(); ++i) {
    const std::array<int, 3> v{r[i], g[i], b[i]};
    const auto tr = detail::axis_taps(v[0], lut.bins);
    const auto tg = detail::axis_taps(v[1], lut.bins);
    const auto tb = detail::axis_taps(v[2], lut.bins);
    std::array<double, 3> offset{};
    double wsum = 0.0;
    for (int dr = 0; dr < 2; ++dr) {
      const double wr = dr ? tr.f : 1.0 - tr.f;
      if (wr == 0.0) continue;
      for (int dg = 0; dg < 2; ++dg) {
        const double wg = dg ? tg.f : 1.0 - tg.f;
        if (wg == 0.0) continue;
        for (int db = 0; db < 2; ++db) {
          const double wb = db ? tb.f : 1.0 - tb.f;
          if (wb == 0.0) continue;
          const auto& c = lut.cell(dr ? tr.i1 : tr.i0, dg ? tg.i1 : tg.i0, db ? tb.i1 : tb.i0);
          if (c.count == 0) continue;
          const double w = wr * wg * wb;
          for (int k = 0; k < 3; ++k) offset[k] += w * (c.target_mean[k] - c.src_mean[k]);
          wsum += w;
        }
      }
    }
    for (int k = 0; k < 3; ++k) {
      const double val = wsum > 0.0 ? v[k] + offset[k] / wsum : lut.fallback.tables[k][v[k]].value;
      out.plane(k)[i] = saturate_u8(val);
    }
  }
  return out;
}

inline Raster build_apply_lut3d(const Raster& src, const Raster& target, int bins = 32, const Mask* roi = nullptr) {
  return apply_lut3d(src, build_lut3d(src, target, bins, roi));
}

}  // namespace dualcal
