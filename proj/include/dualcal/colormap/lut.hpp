#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "json.hpp"

#include "dualcal/error.hpp"
#include "dualcal/imagekit/image.hpp"

namespace dualcal {

struct LutEntry {
  double value = 0.0;
  bool populated = false;
  std::size_t count = 0;

  friend bool operator==(const LutEntry&, const LutEntry&) = default;
};

using LutTable = std::array<LutEntry, 256>;

// One 256-entry table per channel: value[k] is the mean target level over the
// pixels whose src level is k.
struct ColorLUT {
  std::vector<LutTable> tables;

  int channels() const { return static_cast<int>(tables.size()); }
  friend bool operator==(const ColorLUT&, const ColorLUT&) = default;
};

namespace detail {

inline void check_roi(const Raster& src, const Mask* roi) {
  if (!roi) return;
  require(roi->channels() == 1 && roi->same_size(src), "roi mask must be 1-channel with the image dimensions");
}

inline bool in_roi(const Mask* roi, std::size_t i) { return !roi || roi->data()[i] == kMaskValid; }

// Linear interpolation between populated neighbours, ends held constant.
inline void fill_gaps(LutTable& t) {
  int prev = -1;
  for (int k = 0; k < 256; ++k) {
    if (!t[k].populated) continue;
    if (prev < 0) {
      for (int j = 0; j < k; ++j) t[j].value = t[k].value;
    } else {
      for (int j = prev + 1; j < k; ++j) {
        t[j].value = t[prev].value + (t[k].value - t[prev].value) * double(j - prev) / double(k - prev);
      }
    }
    prev = k;
  }
  for (int j = prev + 1; j < 256; ++j) t[j].value = t[prev].value;
}

}  // namespace detail

// src plays the GT capture, target the wide capture. roi pixels equal to
// kMaskValid contribute; everything else is ignored.
inline ColorLUT build_intensity_lut(const Raster& src, const Raster& target, const Mask* roi = nullptr) {
  detail::require(src.same_shape(target), "build_intensity_lut: src and target dimensions differ");
  detail::check_roi(src, roi);
  const std::size_t n = src.pixel_count();
  std::size_t used = 0;
  for (std::size_t i = 0; i < n; ++i) used += detail::in_roi(roi, i);
  if (used == 0) throw Error(ErrorCode::no_statistics, "build_intensity_lut: roi selects no pixels");

  ColorLUT lut;
  lut.tables.resize(src.channels());
  for (int c = 0; c < src.channels(); ++c) {
    std::array<double, 256> sum{};
    auto& t = lut.tables[c];
    const auto s = src.plane(c);
    const auto g = target.plane(c);
    for (std::size_t i = 0; i < n; ++i) {
      if (!detail::in_roi(roi, i)) continue;
      sum[s[i]] += static_cast<double>(g[i]);
      ++t[s[i]].count;
    }
    for (int k = 0; k < 256; ++k) {
      if (t[k].count == 0) continue;
      t[k].populated = true;
      t[k].value = sum[k] / static_cast<double>(t[k].count);
    }
    detail::fill_gaps(t);
  }
  return lut;
}

inline ColorLUT identity_lut(int channels) {
  ColorLUT lut;
  lut.tables.resize(channels);
  for (auto& t : lut.tables)
    for (int k = 0; k < 256; ++k) t[k] = {double(k), true, 1};
  return lut;
}

inline Raster apply_lut(const Raster& img, const ColorLUT& lut) {
  detail::require(lut.channels() == img.channels(), "apply_lut: channel count mismatch");
  Raster out(img.width(), img.height(), img.channels());
  for (int c = 0; c < img.channels(); ++c) {
    std::array<std::uint8_t, 256> map{};
    for (int k = 0; k < 256; ++k) map[k] = saturate_u8(lut.tables[c][k].value);
    const auto s = img.plane(c);
    auto d = out.plane(c);
    for (std::size_t i = 0; i < s.size(); ++i) d[i] = map[s[i]];
  }
  return out;
}

inline nlohmann::json to_json(const ColorLUT& lut) {
  nlohmann::json channels = nlohmann::json::array();
  for (const auto& t : lut.tables) {
    std::vector<double> values;
    std::vector<std::size_t> counts;
    std::vector<bool> populated;
    for (const auto& e : t) {
      values.push_back(e.value);
      counts.push_back(e.count);
      populated.push_back(e.populated);
    }
    channels.push_back({{"values", values}, {"counts", counts}, {"populated", populated}});
  }
  return {{"kind", "intensity_lut"}, {"channels", channels}};
}

inline ColorLUT color_lut_from_json(const nlohmann::json& j) {
  ColorLUT lut;
  try {
    for (const auto& ch : j.at("channels")) {
      const auto values = ch.at("values").get<std::vector<double>>();
      const auto counts = ch.at("counts").get<std::vector<std::size_t>>();
      const auto populated = ch.at("populated").get<std::vector<bool>>();
      if (values.size() != 256 || counts.size() != 256 || populated.size() != 256) {
        throw Error(ErrorCode::validation, "color LUT channel must have 256 entries");
      }
      LutTable t;
      for (int k = 0; k < 256; ++k) t[k] = {values[k], populated[k], counts[k]};
      lut.tables.push_back(t);
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::validation, std::string("malformed color LUT: ") + e.what());
  }
  return lut;
}

}  // namespace dualcal
