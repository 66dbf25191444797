#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <vector>

#include "dualcal/error.hpp"

namespace dualcal {

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

struct Correspondence {
  Point2 src;
  Point2 dst;
};

// 3x3 projective transform on pixel-center coordinates, stored row-major with
// h[2][2] normalized to exactly 1.
class Homography {
 public:
  Homography() : h_{1, 0, 0, 0, 1, 0, 0, 0, 1} {}

  static Homography identity() { return {}; }

  static Homography from_rows(const std::array<double, 9>& rows) {
    for (double v : rows) {
      if (!std::isfinite(v)) throw Error(ErrorCode::degenerate_configuration, "homography has non-finite entries");
    }
    if (std::abs(rows[8]) < 1e-12) {
      throw Error(ErrorCode::degenerate_configuration, "homography h22 vanishes; cannot normalize");
    }
    Homography out;
    for (int i = 0; i < 9; ++i) out.h_[i] = rows[i] / rows[8];
    out.h_[8] = 1.0;
    for (double v : out.h_) {
      if (!std::isfinite(v)) throw Error(ErrorCode::degenerate_configuration, "homography has non-finite entries");
    }
    if (std::abs(out.determinant()) <= 1e-12) {
      throw Error(ErrorCode::degenerate_configuration, "homography is singular");
    }
    return out;
  }

  static Homography translation(double tx, double ty) { return from_rows({1, 0, tx, 0, 1, ty, 0, 0, 1}); }

  double operator()(int r, int c) const { return h_[r * 3 + c]; }
  const std::array<double, 9>& rows() const { return h_; }

  Point2 apply(Point2 p) const {
    const double w = h_[6] * p.x + h_[7] * p.y + h_[8];
    return {(h_[0] * p.x + h_[1] * p.y + h_[2]) / w, (h_[3] * p.x + h_[4] * p.y + h_[5]) / w};
  }

  // Projective denominator at p; positive for points in front of the map.
  double depth(Point2 p) const { return h_[6] * p.x + h_[7] * p.y + h_[8]; }

  double determinant() const {
    return h_[0] * (h_[4] * h_[8] - h_[5] * h_[7]) - h_[1] * (h_[3] * h_[8] - h_[5] * h_[6]) +
           h_[2] * (h_[3] * h_[7] - h_[4] * h_[6]);
  }

  Homography inverse() const {
    const double det = determinant();
    if (!(std::abs(det) > 1e-12)) throw Error(ErrorCode::degenerate_configuration, "homography is not invertible");
    const auto& m = h_;
    std::array<double, 9> inv{m[4] * m[8] - m[5] * m[7], m[2] * m[7] - m[1] * m[8], m[1] * m[5] - m[2] * m[4],
                              m[5] * m[6] - m[3] * m[8], m[0] * m[8] - m[2] * m[6], m[2] * m[3] - m[0] * m[5],
                              m[3] * m[7] - m[4] * m[6], m[1] * m[6] - m[0] * m[7], m[0] * m[4] - m[1] * m[3]};
    return from_rows(inv);
  }

  // (a * b).apply(p) == a.apply(b.apply(p))
  friend Homography operator*(const Homography& a, const Homography& b) {
    std::array<double, 9> r{};
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        for (int k = 0; k < 3; ++k) r[i * 3 + j] += a.h_[i * 3 + k] * b.h_[k * 3 + j];
    return from_rows(r);
  }

  // Local areal scale factor sqrt|det J| of the map at p.
  double local_scale(Point2 p) const {
    const double w = depth(p);
    const Point2 q = apply(p);
    const double j00 = (h_[0] - h_[6] * q.x) / w;
    const double j01 = (h_[1] - h_[7] * q.x) / w;
    const double j10 = (h_[3] - h_[6] * q.y) / w;
    const double j11 = (h_[4] - h_[7] * q.y) / w;
    return std::sqrt(std::abs(j00 * j11 - j01 * j10));
  }

  friend bool operator==(const Homography&, const Homography&) = default;

 private:
  std::array<double, 9> h_;
};

namespace detail {

// Hartley isotropic normalization: centroid to origin, mean distance sqrt(2).
inline Eigen::Matrix3d normalizing_transform(std::span<const Point2> pts) {
  double cx = 0.0;
  double cy = 0.0;
  for (const auto& p : pts) {
    cx += p.x;
    cy += p.y;
  }
  cx /= pts.size();
  cy /= pts.size();
  double mean_dist = 0.0;
  for (const auto& p : pts) mean_dist += std::hypot(p.x - cx, p.y - cy);
  mean_dist /= pts.size();
  const double s = mean_dist > 0.0 ? std::sqrt(2.0) / mean_dist : 1.0;
  Eigen::Matrix3d t;
  t << s, 0, -s * cx, 0, s, -s * cy, 0, 0, 1;
  return t;
}

inline bool collinear(Point2 a, Point2 b, Point2 c) {
  const double abx = b.x - a.x;
  const double aby = b.y - a.y;
  const double acx = c.x - a.x;
  const double acy = c.y - a.y;
  const double cross = abx * acy - aby * acx;
  const double scale = std::hypot(abx, aby) * std::hypot(acx, acy);
  return scale == 0.0 || std::abs(cross) <= 1e-6 * scale;
}

inline bool sample_degenerate(std::span<const Point2> p) {
  for (std::size_t i = 0; i < p.size(); ++i)
    for (std::size_t j = i + 1; j < p.size(); ++j)
      for (std::size_t k = j + 1; k < p.size(); ++k)
        if (collinear(p[i], p[j], p[k])) return true;
  return false;
}

}  // namespace detail

// Normalized DLT over all correspondences (>= 4).
inline Homography fit_homography_dlt(std::span<const Correspondence> corr) {
  if (corr.size() < 4) {
    throw Error(ErrorCode::insufficient_data,
                "homography needs at least 4 correspondences, got " + std::to_string(corr.size()));
  }
  std::vector<Point2> src(corr.size());
  std::vector<Point2> dst(corr.size());
  for (std::size_t i = 0; i < corr.size(); ++i) {
    src[i] = corr[i].src;
    dst[i] = corr[i].dst;
  }
  const Eigen::Matrix3d ts = detail::normalizing_transform(src);
  const Eigen::Matrix3d td = detail::normalizing_transform(dst);

  Eigen::MatrixXd a(2 * corr.size(), 9);
  for (std::size_t i = 0; i < corr.size(); ++i) {
    const Eigen::Vector3d p = ts * Eigen::Vector3d(src[i].x, src[i].y, 1.0);
    const Eigen::Vector3d q = td * Eigen::Vector3d(dst[i].x, dst[i].y, 1.0);
    const double x = p.x();
    const double y = p.y();
    const double u = q.x();
    const double v = q.y();
    a.row(2 * i) << -x, -y, -1, 0, 0, 0, u * x, u * y, u;
    a.row(2 * i + 1) << 0, 0, 0, -x, -y, -1, v * x, v * y, v;
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  const Eigen::VectorXd h = svd.matrixV().col(8);
  Eigen::Matrix3d hn;
  hn << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), h(8);
  const Eigen::Matrix3d full = td.inverse() * hn * ts;
  std::array<double, 9> rows{};
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) rows[r * 3 + c] = full(r, c);
  return Homography::from_rows(rows);
}

enum class HomographyMethod { dlt_exact, ransac };

struct RansacParams {
  double inlier_px = 2.0;
  int max_iters = 2000;
  std::uint64_t seed = 0;
  double confidence = 0.9999;
};

struct HomographyFit {
  Homography h;
  std::vector<bool> inliers;
  std::size_t inlier_count = 0;
  int iterations = 0;
};

// d(dst, H src)^2 + d(src, H^-1 dst)^2
inline double symmetric_transfer_error(const Homography& h, const Homography& h_inv, const Correspondence& c) {
  const Point2 f = h.apply(c.src);
  const Point2 b = h_inv.apply(c.dst);
  const double ef = (f.x - c.dst.x) * (f.x - c.dst.x) + (f.y - c.dst.y) * (f.y - c.dst.y);
  const double eb = (b.x - c.src.x) * (b.x - c.src.x) + (b.y - c.src.y) * (b.y - c.src.y);
  const double e = ef + eb;
  return std::isfinite(e) ? e : std::numeric_limits<double>::infinity();
}

namespace detail {

struct Consensus {
  std::size_t count = 0;
  double error = 0.0;
};

inline Consensus score(const Homography& h, std::span<const Correspondence> corr, double thr2,
                       std::vector<bool>* mask) {
  Homography h_inv;
  try {
    h_inv = h.inverse();
  } catch (const Error&) {
    return {};
  }
  Consensus out;
  if (mask) mask->assign(corr.size(), false);
  for (std::size_t i = 0; i < corr.size(); ++i) {
    const double e = symmetric_transfer_error(h, h_inv, corr[i]);
    if (e < thr2) {
      ++out.count;
      out.error += e;
      if (mask) (*mask)[i] = true;
    }
  }
  return out;
}

inline std::size_t draw_index(std::mt19937_64& rng, std::size_t n) { return static_cast<std::size_t>(rng() % n); }

}  // namespace detail

inline HomographyFit estimate_homography(std::span<const Correspondence> corr, HomographyMethod method,
                                         const RansacParams& params = {}) {
  if (corr.size() < 4) {
    throw Error(ErrorCode::insufficient_data,
                "homography needs at least 4 correspondences, got " + std::to_string(corr.size()));
  }
  if (method == HomographyMethod::dlt_exact) {
    std::vector<Point2> src;
    for (const auto& c : corr) src.push_back(c.src);
    bool all_collinear = true;
    for (std::size_t k = 2; k < src.size() && all_collinear; ++k) {
      all_collinear = detail::collinear(src[0], src[1], src[k]);
    }
    if (all_collinear) throw Error(ErrorCode::degenerate_configuration, "all correspondences are collinear");
    HomographyFit fit{fit_homography_dlt(corr), std::vector<bool>(corr.size(), true), corr.size(), 1};
    return fit;
  }

  const double thr2 = params.inlier_px * params.inlier_px;
  std::mt19937_64 rng(params.seed);
  Homography best;
  detail::Consensus best_score;
  bool have_model = false;
  long long needed = params.max_iters;
  int it = 0;
  std::array<Correspondence, 4> sample;
  std::array<Point2, 4> ps;
  std::array<Point2, 4> pd;
  for (; it < params.max_iters && it < needed; ++it) {
    std::array<std::size_t, 4> idx{};
    for (int k = 0; k < 4; ++k) {
      bool fresh = false;
      while (!fresh) {
        idx[k] = detail::draw_index(rng, corr.size());
        fresh = true;
        for (int j = 0; j < k; ++j) fresh = fresh && idx[j] != idx[k];
      }
      sample[k] = corr[idx[k]];
      ps[k] = sample[k].src;
      pd[k] = sample[k].dst;
    }
    if (detail::sample_degenerate(ps) || detail::sample_degenerate(pd)) continue;
    Homography h;
    try {
      h = fit_homography_dlt(sample);
    } catch (const Error&) {
      continue;
    }
    const auto s = detail::score(h, corr, thr2, nullptr);
    if (!have_model || s.count > best_score.count ||
        (s.count == best_score.count && s.error < best_score.error)) {
      best = h;
      best_score = s;
      have_model = true;
      const double w = static_cast<double>(s.count) / corr.size();
      const double p_good = w * w * w * w;
      if (p_good >= 1.0) {
        needed = it + 1;
      } else if (p_good > 0.0) {
        needed = static_cast<long long>(std::ceil(std::log(1.0 - params.confidence) / std::log(1.0 - p_good)));
      }
    }
  }
  if (!have_model) {
    throw Error(ErrorCode::degenerate_configuration,
                "no non-degenerate minimal sample found in " + std::to_string(params.max_iters) + " iterations");
  }

  HomographyFit fit{best, {}, 0, it};
  detail::score(best, corr, thr2, &fit.inliers);
  // Refit on the consensus set until it stops changing.
  for (int round = 0; round < 10; ++round) {
    std::vector<Correspondence> in;
    for (std::size_t i = 0; i < corr.size(); ++i)
      if (fit.inliers[i]) in.push_back(corr[i]);
    if (in.size() < 4) break;
    Homography refit;
    try {
      refit = fit_homography_dlt(in);
    } catch (const Error&) {
      break;
    }
    std::vector<bool> mask;
    const auto s = detail::score(refit, corr, thr2, &mask);
    if (s.count < in.size()) break;
    fit.h = refit;
    const bool stable = mask == fit.inliers;
    fit.inliers = std::move(mask);
    if (stable) break;
  }
  fit.inlier_count = static_cast<std::size_t>(std::count(fit.inliers.begin(), fit.inliers.end(), true));
  return fit;
}

}  // namespace dualcal
