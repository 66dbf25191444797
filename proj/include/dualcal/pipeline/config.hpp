#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "dualcal/colormap/lut3d.hpp"
#include "dualcal/error.hpp"
#include "dualcal/flowalign/flow.hpp"
#include "dualcal/fusion/fusion.hpp"
#include "dualcal/registration/scale_align.hpp"

namespace dualcal {

enum class LutMode { intensity, lut3d, none };
// Which calibrated image the residual flow warps. gt keeps the wide input
// pristine; wide inverts the roles; off skips the flow stage.
enum class FlowWarp { gt, wide, off };

inline constexpr std::uint64_t kDefaultSeed = 2024;

struct PipelineConfig {
  int crop_width = 3496;
  int crop_height = 2472;
  ScaleAlignConfig scale;
  FlowParams flow;
  FlowWarp flow_warp = FlowWarp::gt;
  LutMode lut_mode = LutMode::intensity;
  int lut3d_bins = 32;
  std::uint64_t seed = kDefaultSeed;
  double train_fraction = 0.728;  // 182 of 250
  double occlusion_sigma = 1.0;
  int workers = 1;
  FusionParams fusion;
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

struct ConfigField {
  std::function<void(PipelineConfig&, const std::string&)> set;
  std::function<std::string(const PipelineConfig&)> get;
};

inline double parse_double(const std::string& v) {
  std::size_t used = 0;
  const double d = std::stod(v, &used);
  if (used != v.size()) throw std::invalid_argument(v);
  return d;
}

inline long long parse_int(const std::string& v) {
  std::size_t used = 0;
  const long long d = std::stoll(v, &used);
  if (used != v.size()) throw std::invalid_argument(v);
  return d;
}

inline std::string fmt_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

template <typename T>
ConfigField int_field(T PipelineConfig::*outer, int T::*member, long long lo, long long hi) {
  return {[=](PipelineConfig& c, const std::string& v) {
            const long long x = parse_int(v);
            if (x < lo || x > hi) throw std::out_of_range(v);
            (c.*outer).*member = static_cast<int>(x);
          },
          [=](const PipelineConfig& c) { return std::to_string((c.*outer).*member); }};
}

template <typename T>
ConfigField double_field(T PipelineConfig::*outer, double T::*member, double lo, double hi) {
  return {[=](PipelineConfig& c, const std::string& v) {
            const double x = parse_double(v);
            if (!(x >= lo && x <= hi)) throw std::out_of_range(v);
            (c.*outer).*member = x;
          },
          [=](const PipelineConfig& c) { return fmt_double((c.*outer).*member); }};
}

inline ConfigField top_int(int PipelineConfig::*member, long long lo, long long hi) {
  return {[=](PipelineConfig& c, const std::string& v) {
            const long long x = parse_int(v);
            if (x < lo || x > hi) throw std::out_of_range(v);
            c.*member = static_cast<int>(x);
          },
          [=](const PipelineConfig& c) { return std::to_string(c.*member); }};
}

inline ConfigField top_double(double PipelineConfig::*member, double lo, double hi) {
  return {[=](PipelineConfig& c, const std::string& v) {
            const double x = parse_double(v);
            if (!(x >= lo && x <= hi)) throw std::out_of_range(v);
            c.*member = x;
          },
          [=](const PipelineConfig& c) { return fmt_double(c.*member); }};
}

template <typename E>
ConfigField enum_field(E PipelineConfig::*member, std::map<std::string, E> names) {
  return {[=](PipelineConfig& c, const std::string& v) {
            const auto it = names.find(v);
            if (it == names.end()) throw std::out_of_range(v);
            c.*member = it->second;
          },
          [=](const PipelineConfig& c) {
            for (const auto& [k, e] : names)
              if (e == c.*member) return k;
            return std::string();
          }};
}

// Every PipelineConfig knob, keyed by its config-file name, in file order.
inline const std::vector<std::pair<std::string, ConfigField>>& config_fields() {
  static const std::vector<std::pair<std::string, ConfigField>> fields = [] {
    using P = PipelineConfig;
    std::vector<std::pair<std::string, ConfigField>> f;
    f.emplace_back("crop_width", top_int(&P::crop_width, 1, 65535));
    f.emplace_back("crop_height", top_int(&P::crop_height, 1, 65535));
    f.emplace_back("gt_frame", ConfigField{[](P& c, const std::string& v) {
                                             if (v == "tele") c.scale.gt_frame = GtFrame::tele;
                                             else if (v == "wide") c.scale.gt_frame = GtFrame::wide;
                                             else throw std::out_of_range(v);
                                           },
                                           [](const P& c) {
                                             return std::string(c.scale.gt_frame == GtFrame::tele ? "tele" : "wide");
                                           }});
    f.emplace_back("min_matches", int_field(&P::scale, &ScaleAlignConfig::min_matches, 4, 1000000));
    f.emplace_back("min_overlap_px", int_field(&P::scale, &ScaleAlignConfig::min_overlap_px, 1, 65535));
    f.emplace_back("ratio_threshold", double_field(&P::scale, &ScaleAlignConfig::ratio_threshold, 0.01, 0.99));
    f.emplace_back("sift.octaves", ConfigField{[](P& c, const std::string& v) {
                                                 const auto x = parse_int(v);
                                                 if (x < 1 || x > 8) throw std::out_of_range(v);
                                                 c.scale.sift.octaves = int(x);
                                               },
                                               [](const P& c) { return std::to_string(c.scale.sift.octaves); }});
    f.emplace_back("sift.contrast_threshold",
                   ConfigField{[](P& c, const std::string& v) {
                                 const double x = parse_double(v);
                                 if (!(x > 0.0 && x < 1.0)) throw std::out_of_range(v);
                                 c.scale.sift.contrast_threshold = x;
                               },
                               [](const P& c) { return fmt_double(c.scale.sift.contrast_threshold); }});
    f.emplace_back("ransac.inlier_px", ConfigField{[](P& c, const std::string& v) {
                                                     const double x = parse_double(v);
                                                     if (!(x > 0.0 && x <= 100.0)) throw std::out_of_range(v);
                                                     c.scale.ransac.inlier_px = x;
                                                   },
                                                   [](const P& c) { return fmt_double(c.scale.ransac.inlier_px); }});
    f.emplace_back("ransac.max_iters", ConfigField{[](P& c, const std::string& v) {
                                                     const auto x = parse_int(v);
                                                     if (x < 1 || x > 10000000) throw std::out_of_range(v);
                                                     c.scale.ransac.max_iters = int(x);
                                                   },
                                                   [](const P& c) { return std::to_string(c.scale.ransac.max_iters); }});
    f.emplace_back("ransac.confidence", ConfigField{[](P& c, const std::string& v) {
                                                      const double x = parse_double(v);
                                                      if (!(x > 0.0 && x < 1.0)) throw std::out_of_range(v);
                                                      c.scale.ransac.confidence = x;
                                                    },
                                                    [](const P& c) { return fmt_double(c.scale.ransac.confidence); }});
    f.emplace_back("flow.levels", int_field(&P::flow, &FlowParams::levels, 1, 8));
    f.emplace_back("flow.window", ConfigField{[](P& c, const std::string& v) {
                                                const auto x = parse_int(v);
                                                if (x < 5 || x > 101 || x % 2 == 0) throw std::out_of_range(v);
                                                c.flow.window = int(x);
                                              },
                                              [](const P& c) { return std::to_string(c.flow.window); }});
    f.emplace_back("flow.iters", int_field(&P::flow, &FlowParams::iters, 1, 100));
    f.emplace_back("flow.min_eigen", double_field(&P::flow, &FlowParams::min_eigen, 0.0, 1.0));
    f.emplace_back("flow.warp", enum_field(&P::flow_warp, std::map<std::string, FlowWarp>{
                                                              {"gt", FlowWarp::gt}, {"wide", FlowWarp::wide}, {"off", FlowWarp::off}}));
    f.emplace_back("lut_mode", enum_field(&P::lut_mode, std::map<std::string, LutMode>{{"intensity", LutMode::intensity},
                                                                                       {"lut3d", LutMode::lut3d},
                                                                                       {"none", LutMode::none}}));
    f.emplace_back("lut3d_bins", ConfigField{[](P& c, const std::string& v) {
                                               const auto x = parse_int(v);
                                               if (!valid_lut3d_bins(int(std::clamp<long long>(x, 0, 1024))))
                                                 throw std::out_of_range(v);
                                               c.lut3d_bins = int(x);
                                             },
                                             [](const P& c) { return std::to_string(c.lut3d_bins); }});
    f.emplace_back("seed", ConfigField{[](P& c, const std::string& v) {
                                         std::size_t used = 0;
                                         const auto x = std::stoull(v, &used);
                                         if (used != v.size() || v.front() == '-') throw std::invalid_argument(v);
                                         c.seed = x;
                                       },
                                       [](const P& c) { return std::to_string(c.seed); }});
    f.emplace_back("train_fraction", top_double(&P::train_fraction, 0.0, 1.0));
    f.emplace_back("occlusion_sigma", top_double(&P::occlusion_sigma, 0.1, 20.0));
    f.emplace_back("workers", top_int(&P::workers, 1, 256));
    f.emplace_back("fusion.smooth_sigma", double_field(&P::fusion, &FusionParams::smooth_sigma, 0.1, 20.0));
    f.emplace_back("fusion.gain", double_field(&P::fusion, &FusionParams::gain, 1e-6, 1e6));
    f.emplace_back("fusion.highpass_sigma", double_field(&P::fusion, &FusionParams::highpass_sigma, 0.1, 20.0));
    return f;
  }();
  return fields;
}

}  // namespace detail

// The RANSAC seed follows the pipeline seed so one knob fixes every draw.
inline void sync_seeds(PipelineConfig& cfg) {
  cfg.scale.ransac.seed = cfg.seed;
  cfg.fusion.registration.ransac.seed = cfg.seed;
}

// Flat "key = value" text; '#' starts a comment. Unknown keys, duplicate keys
// and out-of-range values are validation errors naming the line.
inline PipelineConfig parse_config(const std::string& text, const std::string& source = "<config>") {
  PipelineConfig cfg;
  std::map<std::string, int> seen;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const std::string where = source + ":" + std::to_string(lineno);
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw Error(ErrorCode::validation, where + ": expected key = value");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    if (seen.count(key)) throw Error(ErrorCode::validation, where + ": duplicate key '" + key + "'");
    seen[key] = lineno;
    const auto& fields = detail::config_fields();
    auto it = std::find_if(fields.begin(), fields.end(), [&](const auto& f) { return f.first == key; });
    if (it == fields.end()) throw Error(ErrorCode::validation, where + ": unknown key '" + key + "'");
    try {
      it->second.set(cfg, value);
    } catch (const std::exception&) {
      throw Error(ErrorCode::validation, where + ": invalid value '" + value + "' for " + key);
    }
  }
  sync_seeds(cfg);
  return cfg;
}

inline PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::io, "cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.string());
}

inline std::string config_to_text(const PipelineConfig& cfg) {
  std::string out;
  for (const auto& [key, field] : detail::config_fields()) out += key + " = " + field.get(cfg) + "\n";
  return out;
}

inline PipelineConfig default_config() {
  PipelineConfig cfg;
  sync_seeds(cfg);
  return cfg;
}

}  // namespace dualcal
