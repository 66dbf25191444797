#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "dualcal/colormap/lut.hpp"
#include "dualcal/error.hpp"
#include "dualcal/flowalign/flow.hpp"
#include "dualcal/imagekit/filter.hpp"
#include "dualcal/imagekit/image.hpp"
#include "dualcal/registration/scale_align.hpp"
#include "dualcal/registration/warp.hpp"

namespace dualcal {

// Per-pixel gate in [0, 1], one channel, wide-frame dimensions.
using ConfidenceMap = RasterF;

struct FusionParams {
  double smooth_sigma = 1.5;
  double gain = 4.0;
  double highpass_sigma = 1.0;
  ScaleAlignConfig registration;
  FlowParams flow;
  bool refine_with_flow = true;
  bool color_match = true;
};

struct AlignedReference {
  Raster image;       // t in w's frame; 0 where uncovered
  Mask coverage;      // kMaskValid where image carries t content
  Homography h;       // t pixel -> w pixel
};

struct FusionResult {
  Raster fused;
  ConfidenceMap confidence;
  AlignedReference aligned;
};

namespace detail {

// Nearest-rank percentile of a copy of the samples.
inline double percentile(std::vector<float> v, double q) {
  if (v.empty()) return 0.0;
  const std::size_t rank = static_cast<std::size_t>(std::ceil(q * v.size()));
  const std::size_t idx = std::clamp<std::size_t>(rank, 1, v.size()) - 1;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(idx), v.end());
  return v[idx];
}

}  // namespace detail

inline ConfidenceMap edge_confidence(const Raster& w, double smooth_sigma = 1.5, double gain = 4.0) {
  detail::require(gain > 0.0, "edge_confidence: gain must be positive");
  detail::require(smooth_sigma > 0.0, "edge_confidence: smooth_sigma must be positive");
  const RasterF mag = detail::blur_float(sobel_magnitude(w), kernel_size_for_sigma(smooth_sigma), smooth_sigma);
  const auto m = mag.data();
  double norm = detail::percentile({m.begin(), m.end()}, 0.99);
  if (!(norm > 0.0)) norm = *std::max_element(m.begin(), m.end());
  ConfidenceMap c(w.width(), w.height(), 1);
  if (!(norm > 0.0)) return c;
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (!(m[i] > 0.0f)) continue;
    c.data()[i] = static_cast<float>(std::clamp(gain * (double(m[i]) / norm), 0.0, 1.0));
  }
  return c;
}

// Warps t into w's frame: projective registration, then dense-flow refinement.
inline AlignedReference align_reference(const Raster& w, const Raster& t, const FusionParams& p = {},
                                        const std::string& pair_name = "pair") {
  detail::require(w.channels() == t.channels(), "align_reference: channel count mismatch");
  const Registration reg = register_images(t, w, p.registration, pair_name);
  auto warped = warp_projective(t, reg.fit.h, w.width(), w.height());
  AlignedReference out{std::move(warped.image), std::move(warped.coverage), reg.fit.h};
  if (!p.refine_with_flow) return out;

  // Uncovered pixels borrow w so the zero fill does not read as motion.
  Raster mov = out.image;
  for (int c = 0; c < mov.channels(); ++c)
    for (std::size_t i = 0; i < mov.pixel_count(); ++i)
      if (out.coverage.data()[i] != kMaskValid) mov.plane(c)[i] = w.plane(c)[i];
  const FlowField flow = compute_flow(w, mov, p.flow);
  Raster refined = warp_with_flow(out.image, flow);
  Mask cov = out.coverage;
  for (int y = 0; y < w.height(); ++y) {
    for (int x = 0; x < w.width(); ++x) {
      const std::size_t i = flow.index(y, x);
      if (!flow.valid[i] || out.coverage.at(0, y, x) != kMaskValid) continue;
      // The bicubic footprint around the flow target must be covered too.
      const double sx = x + double(flow.u[i]);
      const double sy = y + double(flow.v[i]);
      const int x0 = static_cast<int>(std::floor(sx));
      const int y0 = static_cast<int>(std::floor(sy));
      bool ok = true;
      for (int dy = -1; dy <= 2 && ok; ++dy)
        for (int dx = -1; dx <= 2 && ok; ++dx) ok = out.coverage.clamped(0, y0 + dy, x0 + dx) == kMaskValid;
      if (!ok) cov.at(0, y, x) = kMaskProblem;
    }
  }
  for (int c = 0; c < refined.channels(); ++c)
    for (std::size_t i = 0; i < cov.pixel_count(); ++i)
      if (cov.data()[i] != kMaskValid) refined.plane(c)[i] = 0;
  out.image = std::move(refined);
  out.coverage = std::move(cov);
  return out;
}

// out = w + C * (t - blur(t)); pixels with C == 0 or outside coverage copy w.
inline Raster detail_transfer(const Raster& w, const Raster& t_aligned, const ConfidenceMap& c,
                              double highpass_sigma = 1.0, const Mask* coverage = nullptr) {
  detail::require(w.same_shape(t_aligned), "detail_transfer: w and t dimensions differ");
  detail::require(c.channels() == 1 && c.same_size(w), "detail_transfer: confidence map dimensions differ");
  detail::require(!coverage || (coverage->channels() == 1 && coverage->same_size(w)),
                  "detail_transfer: coverage mask dimensions differ");
  detail::require(highpass_sigma > 0.0, "detail_transfer: highpass_sigma must be positive");
  const auto k = gaussian_kernel_1d(kernel_size_for_sigma(highpass_sigma), highpass_sigma);
  Raster out = w;
  for (int ch = 0; ch < w.channels(); ++ch) {
    const auto tp = t_aligned.plane(ch);
    const auto low = detail::convolve_separable(tp.data(), w.width(), w.height(), k);
    const auto wp = w.plane(ch);
    auto op = out.plane(ch);
    for (std::size_t i = 0; i < wp.size(); ++i) {
      const double g = c.data()[i];
      if (!(g > 0.0)) continue;
      if (coverage && coverage->data()[i] != kMaskValid) continue;
      op[i] = saturate_u8(double(wp[i]) + g * (double(tp[i]) - low[i]));
    }
  }
  return out;
}

inline FusionResult fuse(const Raster& w, const Raster& t, const FusionParams& p = {},
                         const std::string& pair_name = "pair") {
  FusionResult r;
  r.aligned = align_reference(w, t, p, pair_name);
  Raster ref = r.aligned.image;
  if (p.color_match) {
    try {
      ref = apply_lut(ref, build_intensity_lut(ref, w, &r.aligned.coverage));
    } catch (const Error& e) {
      if (e.code() != ErrorCode::no_statistics) throw;
    }
  }
  // Keep the high-pass of covered pixels near the coverage edge free of the zero fill.
  for (int c = 0; c < ref.channels(); ++c)
    for (std::size_t i = 0; i < ref.pixel_count(); ++i)
      if (r.aligned.coverage.data()[i] != kMaskValid) ref.plane(c)[i] = w.plane(c)[i];
  r.confidence = edge_confidence(w, p.smooth_sigma, p.gain);
  r.fused = detail_transfer(w, ref, r.confidence, p.highpass_sigma, &r.aligned.coverage);
  return r;
}

}  // namespace dualcal
