#pragma once

#include <algorithm>
#include <array>
#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "dualcal/error.hpp"
#include "dualcal/imagekit/image.hpp"
#include "dualcal/pipeline/manifest.hpp"

namespace dualcal {

enum class RegionLabel { motion, defocus, calibration_error, other };

inline std::string to_string(RegionLabel l) {
  switch (l) {
    case RegionLabel::motion: return "motion";
    case RegionLabel::defocus: return "defocus";
    case RegionLabel::calibration_error: return "calibration_error";
    case RegionLabel::other: return "other";
  }
  return "?";
}

inline RegionLabel label_from_string(const std::string& s) {
  for (auto l : {RegionLabel::motion, RegionLabel::defocus, RegionLabel::calibration_error, RegionLabel::other})
    if (to_string(l) == s) return l;
  throw Error(ErrorCode::validation, "unknown region label '" + s + "'");
}

struct PolyPoint {
  double x = 0.0;
  double y = 0.0;
};

struct Polygon {
  RegionLabel label = RegionLabel::other;
  std::vector<PolyPoint> points;  // calibrated-image pixel coordinates
};

struct AnnotationSet {
  std::string entry_id;
  std::vector<Polygon> polygons;
  std::string author;
  int revision = 0;
};

enum class Decision { keep, reject };

struct Verdict {
  std::string entry_id;
  Decision decision = Decision::keep;
  std::optional<VerdictReason> reason;
  std::string author;
};

// Polygon vertices lie in [0, width] x [0, height]: pixel (x, y) covers
// [x, x + 1) x [y, y + 1). Problems come back one line per offending point.
inline std::vector<std::string> validate_polygons(const std::vector<Polygon>& polys, int width, int height) {
  std::vector<std::string> issues;
  for (std::size_t i = 0; i < polys.size(); ++i) {
    const auto& pts = polys[i].points;
    if (pts.size() < 3) {
      issues.push_back("polygon " + std::to_string(i) + ": " + std::to_string(pts.size()) + " points, need at least 3");
    }
    for (std::size_t k = 0; k < pts.size(); ++k) {
      const auto& p = pts[k];
      if (p.x >= 0.0 && p.x <= width && p.y >= 0.0 && p.y <= height) continue;
      char buf[160];
      std::snprintf(buf, sizeof buf, "polygon %zu point %zu (%g, %g) outside [0, %d] x [0, %d]", i, k, p.x, p.y, width,
                    height);
      issues.push_back(buf);
    }
  }
  return issues;
}

// Even-odd fill over all polygons together, sampled at pixel centres:
// overlapping regions cancel. Inside pixels get kMaskProblem.
inline Mask rasterize_even_odd(const std::vector<Polygon>& polys, int width, int height) {
  detail::require(width >= 1 && height >= 1, "rasterize: empty raster");
  Mask m(width, height, 1, kMaskValid);
  std::vector<double> xs;
  for (int y = 0; y < height; ++y) {
    const double ty = y + 0.5;
    xs.clear();
    for (const auto& poly : polys) {
      const auto& p = poly.points;
      for (std::size_t i = 0, j = p.size() - 1; i < p.size(); j = i++) {
        if ((p[i].y > ty) == (p[j].y > ty)) continue;
        xs.push_back((p[j].x - p[i].x) * (ty - p[i].y) / (p[j].y - p[i].y) + p[i].x);
      }
    }
    if (xs.empty()) continue;
    std::sort(xs.begin(), xs.end());
    // A centre is inside when an odd number of crossings lie strictly right of it.
    std::size_t right = 0;  // first crossing > centre
    for (int x = 0; x < width; ++x) {
      const double tx = x + 0.5;
      while (right < xs.size() && !(tx < xs[right])) ++right;
      if ((xs.size() - right) % 2 == 1) m.at(0, y, x) = kMaskProblem;
    }
  }
  return m;
}

inline nlohmann::json to_json(const AnnotationSet& a) {
  nlohmann::json polys = nlohmann::json::array();
  for (const auto& p : a.polygons) {
    nlohmann::json pts = nlohmann::json::array();
    for (const auto& q : p.points) pts.push_back({{"x", q.x}, {"y", q.y}});
    polys.push_back({{"label", to_string(p.label)}, {"points", pts}});
  }
  return {{"entry_id", a.entry_id}, {"revision", a.revision}, {"author", a.author}, {"polygons", polys}};
}

// Accepts points as {"x": .., "y": ..} or [x, y].
inline std::vector<Polygon> polygons_from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw Error(ErrorCode::validation, "polygons must be an array");
  std::vector<Polygon> out;
  std::vector<std::string> issues;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const auto& pj = j[i];
    Polygon p;
    try {
      p.label = label_from_string(pj.value("label", std::string("other")));
      for (const auto& q : pj.at("points")) {
        if (q.is_array()) p.points.push_back({q.at(0).get<double>(), q.at(1).get<double>()});
        else p.points.push_back({q.at("x").get<double>(), q.at("y").get<double>()});
      }
    } catch (const nlohmann::json::exception& e) {
      issues.push_back("polygon " + std::to_string(i) + ": " + e.what());
    } catch (const Error& e) {
      issues.push_back("polygon " + std::to_string(i) + ": " + e.what());
    }
    out.push_back(std::move(p));
  }
  if (!issues.empty()) throw Error(ErrorCode::validation, "malformed polygons", issues);
  return out;
}

inline AnnotationSet annotation_from_json(const nlohmann::json& j) {
  try {
    AnnotationSet a;
    a.entry_id = j.value("entry_id", std::string());
    a.revision = j.value("revision", 0);
    a.author = j.value("author", std::string());
    a.polygons = polygons_from_json(j.at("polygons"));
    return a;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::validation, std::string("malformed annotation: ") + e.what());
  }
}

}  // namespace dualcal
