#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "json.hpp"

#include "dualcal/error.hpp"
#include "dualcal/imagekit/image.hpp"
#include "dualcal/registration/homography.hpp"
#include "dualcal/registration/match.hpp"
#include "dualcal/registration/sift.hpp"
#include "dualcal/registration/warp.hpp"

namespace dualcal {

// Which frame the calibrated pair lives in: the telephoto GT frame (wide
// overlap upsampled to GT size) or the wide frame (GT warped onto the wide
// overlap at wide resolution).
enum class GtFrame { tele, wide };

struct ScaleAlignConfig {
  SiftParams sift;
  double ratio_threshold = 0.75;
  RansacParams ransac;
  int min_matches = 50;     // RANSAC-verified matches required
  int min_overlap_px = 32;  // minimum overlap rectangle side, wide pixels
  GtFrame gt_frame = GtFrame::tele;
};

// Axis-aligned rectangle in pixel-edge coordinates of the wide frame: pixel i
// spans [i - 0.5, i + 0.5].
struct OverlapRect {
  double x0 = 0.0;
  double y0 = 0.0;
  double x1 = 0.0;
  double y1 = 0.0;

  double width() const { return x1 - x0; }
  double height() const { return y1 - y0; }
};

struct ScaleAlignResult {
  Raster w_cal;
  Raster gt_cal;
  Raster t_cal;
  Homography h_tele_to_wide;     // GT (t1) frame -> wide (w2) frame
  Homography w_transform;        // calibrated pixel -> wide-source pixel
  Homography t_transform;        // calibrated pixel -> tele-source pixel
  OverlapRect overlap;
  std::size_t match_count = 0;
  std::size_t inlier_count = 0;
  double magnification = 1.0;    // local wide->GT scale at the GT center
};

namespace detail {

inline double cross(Point2 o, Point2 a, Point2 b) { return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x); }

// Point in convex quad (either winding), boundary included.
inline bool inside_convex(const std::array<Point2, 4>& q, Point2 p) {
  bool pos = false;
  bool neg = false;
  for (int i = 0; i < 4; ++i) {
    const double c = cross(q[i], q[(i + 1) % 4], p);
    pos = pos || c > 1e-9;
    neg = neg || c < -1e-9;
  }
  return !(pos && neg);
}

inline bool convex(const std::array<Point2, 4>& q) {
  bool pos = false;
  bool neg = false;
  for (int i = 0; i < 4; ++i) {
    const double c = cross(q[i], q[(i + 1) % 4], q[(i + 2) % 4]);
    pos = pos || c > 0;
    neg = neg || c < 0;
  }
  return !(pos && neg);
}

}  // namespace detail

// Interior axis-aligned rectangle of the quad obtained by projecting the GT
// frame (gt_w x gt_h) into the wide frame, clipped to the wide frame.
inline OverlapRect overlap_rectangle(const Homography& h_tele_to_wide, int gt_w, int gt_h, int wide_w, int wide_h) {
  const std::array<Point2, 4> corners{Point2{-0.5, -0.5}, Point2{gt_w - 0.5, -0.5}, Point2{gt_w - 0.5, gt_h - 0.5},
                                      Point2{-0.5, gt_h - 0.5}};
  std::array<Point2, 4> q{};
  for (int i = 0; i < 4; ++i) {
    if (!(h_tele_to_wide.depth(corners[i]) > 0.0)) {
      throw Error(ErrorCode::alignment_failed, "projected GT frame crosses the horizon");
    }
    q[i] = h_tele_to_wide.apply(corners[i]);
  }
  if (!detail::convex(q)) throw Error(ErrorCode::alignment_failed, "projected GT frame is not convex");

  OverlapRect r{std::max(q[0].x, q[3].x), std::max(q[0].y, q[1].y), std::min(q[1].x, q[2].x),
                std::min(q[2].y, q[3].y)};
  r.x0 = std::max(r.x0, -0.5);
  r.y0 = std::max(r.y0, -0.5);
  r.x1 = std::min(r.x1, wide_w - 0.5);
  r.y1 = std::min(r.y1, wide_h - 0.5);
  if (r.x1 <= r.x0 || r.y1 <= r.y0) return {0, 0, 0, 0};

  auto fits = [&](const OverlapRect& c) {
    return detail::inside_convex(q, {c.x0, c.y0}) && detail::inside_convex(q, {c.x1, c.y0}) &&
           detail::inside_convex(q, {c.x1, c.y1}) && detail::inside_convex(q, {c.x0, c.y1});
  };
  if (fits(r)) return r;
  // Shrink uniformly about the center until all corners lie inside the quad.
  const double cx = 0.5 * (r.x0 + r.x1);
  const double cy = 0.5 * (r.y0 + r.y1);
  auto scaled = [&](double s) {
    return OverlapRect{cx + (r.x0 - cx) * s, cy + (r.y0 - cy) * s, cx + (r.x1 - cx) * s, cy + (r.y1 - cy) * s};
  };
  double lo = 0.0;
  double hi = 1.0;
  for (int it = 0; it < 60; ++it) {
    const double mid = 0.5 * (lo + hi);
    (fits(scaled(mid)) ? lo : hi) = mid;
  }
  return scaled(lo);
}

// Maps calibrated pixel (u, v) of an out_w x out_h raster onto the rectangle.
inline Homography rect_transform(const OverlapRect& r, int out_w, int out_h) {
  const double sx = r.width() / out_w;
  const double sy = r.height() / out_h;
  return Homography::from_rows({sx, 0, r.x0 + 0.5 * sx, 0, sy, r.y0 + 0.5 * sy, 0, 0, 1});
}

inline std::vector<Correspondence> correspondences(std::span<const Feature> src, std::span<const Feature> dst,
                                                   std::span<const Match> matches) {
  std::vector<Correspondence> out;
  out.reserve(matches.size());
  for (const auto& m : matches) {
    out.push_back({{src[m.idx_a].keypoint.x, src[m.idx_a].keypoint.y}, {dst[m.idx_b].keypoint.x, dst[m.idx_b].keypoint.y}});
  }
  return out;
}

struct Registration {
  HomographyFit fit;
  std::size_t match_count = 0;
};

// Feature-based projective registration of src onto dst (the fit maps src
// pixel centres to dst pixel centres). Throws alignment_failed when fewer than
// cfg.min_matches matches survive either the ratio test or RANSAC.
template <typename T>
Registration register_images(const Image<T>& src, const Image<T>& dst, const ScaleAlignConfig& cfg,
                             const std::string& pair_name) {
  const auto fs = detect_and_describe(src, cfg.sift);
  const auto fd = detect_and_describe(dst, cfg.sift);
  const auto matches = match_features(fs, fd, cfg.ratio_threshold);
  auto fail = [&](const std::string& why) {
    return Error(ErrorCode::alignment_failed, "alignment failed for " + pair_name + ": " + why);
  };
  if (matches.size() < 4 || matches.size() < static_cast<std::size_t>(cfg.min_matches)) {
    throw fail(std::to_string(matches.size()) + " matches, need " + std::to_string(cfg.min_matches));
  }
  const auto corr = correspondences(fs, fd, matches);
  Registration reg;
  reg.match_count = matches.size();
  try {
    reg.fit = estimate_homography(corr, HomographyMethod::ransac, cfg.ransac);
  } catch (const Error& e) {
    throw fail(e.what());
  }
  if (reg.fit.inlier_count < static_cast<std::size_t>(cfg.min_matches)) {
    throw fail(std::to_string(reg.fit.inlier_count) + " verified matches, need " + std::to_string(cfg.min_matches));
  }
  return reg;
}

// Registers the GT capture (t1) against the wide capture (w2) and
// resamples the shared field of view; the identical rectangle and transform
// are applied to the input telephoto capture (t2) so the W/T field-of-view
// ratio survives calibration.
inline ScaleAlignResult scale_align(const Raster& w2, const Raster& t1, const Raster& t2,
                                    const ScaleAlignConfig& cfg = {}, const std::string& pair_name = "pair") {
  const Registration reg = register_images(t1, w2, cfg, pair_name);
  const HomographyFit& fit = reg.fit;
  auto fail = [&](const std::string& why) {
    return Error(ErrorCode::alignment_failed, "alignment failed for " + pair_name + ": " + why);
  };

  ScaleAlignResult res;
  res.h_tele_to_wide = fit.h;
  res.match_count = reg.match_count;
  res.inlier_count = fit.inlier_count;
  const Point2 gt_center{0.5 * (t1.width() - 1), 0.5 * (t1.height() - 1)};
  res.magnification = 1.0 / fit.h.local_scale(gt_center);

  res.overlap = overlap_rectangle(fit.h, t1.width(), t1.height(), w2.width(), w2.height());
  if (res.overlap.width() < cfg.min_overlap_px || res.overlap.height() < cfg.min_overlap_px) {
    throw fail("overlap rectangle too small");
  }

  int out_w = t1.width();
  int out_h = t1.height();
  if (cfg.gt_frame == GtFrame::wide) {
    out_w = std::max(1, static_cast<int>(std::lround(res.overlap.width())));
    out_h = std::max(1, static_cast<int>(std::lround(res.overlap.height())));
  }
  res.w_transform = rect_transform(res.overlap, out_w, out_h);
  res.t_transform = res.w_transform;
  const Homography gt_transform = fit.h.inverse() * res.w_transform;

  res.w_cal = resample_projective(w2, res.w_transform, out_w, out_h);
  res.t_cal = resample_projective(t2, res.t_transform, out_w, out_h);
  res.gt_cal = resample_projective(t1, gt_transform, out_w, out_h);
  return res;
}

inline nlohmann::json homography_to_json(const Homography& h) {
  return nlohmann::json(std::vector<double>(h.rows().begin(), h.rows().end()));
}

inline Homography homography_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 9) throw Error(ErrorCode::validation, "homography must be 9 numbers");
  std::array<double, 9> rows{};
  for (int i = 0; i < 9; ++i) rows[i] = j.at(i).get<double>();
  return Homography::from_rows(rows);
}

inline nlohmann::json to_json(const ScaleAlignResult& r) {
  return {
      {"h_tele_to_wide", homography_to_json(r.h_tele_to_wide)},
      {"overlap_transform", homography_to_json(r.w_transform)},
      {"overlap", {{"x0", r.overlap.x0}, {"y0", r.overlap.y0}, {"x1", r.overlap.x1}, {"y1", r.overlap.y1}}},
      {"match_count", r.match_count},
      {"inlier_count", r.inlier_count},
      {"magnification", r.magnification},
      {"output", {{"width", r.w_cal.width()}, {"height", r.w_cal.height()}}},
  };
}

}  // namespace dualcal
