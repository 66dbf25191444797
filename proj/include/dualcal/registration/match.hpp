#pragma once

#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "dualcal/error.hpp"
#include "dualcal/registration/sift.hpp"

namespace dualcal {

struct Match {
  std::size_t idx_a = 0;
  std::size_t idx_b = 0;
  double distance = 0.0;
  double ratio = 0.0;  // best / second-best distance
};

namespace detail {

inline double squared_distance(const Descriptor& a, const Descriptor& b) {
  double acc = 0.0;
  for (int k = 0; k < kDescriptorSize; ++k) {
    const double d = double(a.v[k]) - double(b.v[k]);
    acc += d * d;
  }
  return acc;
}

struct Nearest {
  std::size_t best = 0;
  double d1 = std::numeric_limits<double>::infinity();
  double d2 = std::numeric_limits<double>::infinity();
};

}  // namespace detail

// Lowe ratio test plus mutual-best filtering. Ties resolve to the lowest index.
inline std::vector<Match> match_descriptors(std::span<const Descriptor> a, std::span<const Descriptor> b,
                                            double ratio_threshold = 0.75) {
  detail::require(ratio_threshold > 0.0 && ratio_threshold < 1.0, "ratio threshold must lie in (0, 1)");
  std::vector<Match> matches;
  if (a.empty() || b.size() < 2) return matches;

  std::vector<double> dist(a.size() * b.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j) dist[i * b.size() + j] = detail::squared_distance(a[i], b[j]);

  std::vector<std::size_t> best_a_for_b(b.size(), 0);
  for (std::size_t j = 0; j < b.size(); ++j) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (dist[i * b.size() + j] < best) {
        best = dist[i * b.size() + j];
        best_a_for_b[j] = i;
      }
    }
  }

  for (std::size_t i = 0; i < a.size(); ++i) {
    detail::Nearest nn;
    for (std::size_t j = 0; j < b.size(); ++j) {
      const double d = dist[i * b.size() + j];
      if (d < nn.d1) {
        nn.d2 = nn.d1;
        nn.d1 = d;
        nn.best = j;
      } else if (d < nn.d2) {
        nn.d2 = d;
      }
    }
    const double d1 = std::sqrt(nn.d1);
    const double d2 = std::sqrt(nn.d2);
    const double ratio = d2 > 0.0 ? d1 / d2 : 1.0;
    if (ratio >= ratio_threshold) continue;
    if (best_a_for_b[nn.best] != i) continue;
    matches.push_back({i, nn.best, d1, ratio});
  }
  return matches;
}

inline std::vector<Match> match_features(std::span<const Feature> a, std::span<const Feature> b,
                                         double ratio_threshold = 0.75) {
  std::vector<Descriptor> da;
  std::vector<Descriptor> db;
  da.reserve(a.size());
  db.reserve(b.size());
  for (const auto& f : a) da.push_back(f.descriptor);
  for (const auto& f : b) db.push_back(f.descriptor);
  return match_descriptors(da, db, ratio_threshold);
}

}  // namespace dualcal
