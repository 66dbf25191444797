#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "dualcal/error.hpp"
#include "dualcal/imagekit/png_io.hpp"
#include "dualcal/imagekit/resample.hpp"
#include "dualcal/pipeline/manifest.hpp"
#include "dualcal/pipeline/workspace.hpp"
#include "dualcal/quality/metrics.hpp"

namespace dualcal {

enum class Protocol { realistic, theoretical };

inline std::string to_string(Protocol p) { return p == Protocol::realistic ? "realistic" : "theoretical"; }

inline Protocol protocol_from_string(const std::string& s) {
  if (s == "realistic") return Protocol::realistic;
  if (s == "theoretical") return Protocol::theoretical;
  throw Error(ErrorCode::validation, "unknown protocol '" + s + "'");
}

struct Degraded {
  Raster intermediate;  // floor(w / factor) x floor(h / factor)
  Raster output;        // back at the original size
};

// Theoretical-protocol input: bicubic down by factor, bicubic back up.
inline Degraded degrade_theoretical(const Raster& w, int factor) {
  detail::require(factor >= 2, "degrade_theoretical: factor must be at least 2");
  detail::require(w.width() >= factor && w.height() >= factor,
                  "degrade_theoretical: image smaller than the factor");
  Degraded d;
  d.intermediate = resample_bicubic(w, w.width() / factor, w.height() / factor);
  d.output = resample_bicubic(d.intermediate, w.width(), w.height());
  return d;
}

// Brings a method output onto the GT grid for the given protocol. Returns
// nullopt with a reason when the output cannot be evaluated.
inline std::optional<Raster> prepare_output(const Raster& out, const Raster& gt, Protocol protocol,
                                            std::string* reason = nullptr) {
  auto reject = [&](const std::string& why) -> std::optional<Raster> {
    if (reason) *reason = why;
    return std::nullopt;
  };
  const std::string dims = std::to_string(out.width()) + "x" + std::to_string(out.height()) + " vs GT " +
                           std::to_string(gt.width()) + "x" + std::to_string(gt.height());
  if (out.channels() != gt.channels()) return reject("channel count differs from GT");
  if (out.same_size(gt)) return out;
  if (protocol == Protocol::realistic && out.width() >= gt.width() && out.height() >= gt.height()) {
    return resample_bicubic(out, gt.width(), gt.height());
  }
  return reject("output size " + dims);
}

struct EntryScore {
  std::string method;
  std::string id;
  int eval_width = 0;  // dims the metric saw
  int eval_height = 0;
  MetricsReport metrics;
};

struct MethodRow {
  std::string method;
  double psnr = 0.0;
  double ssim = 0.0;
  std::size_t count = 0;
};

struct MetricsTable {
  Protocol protocol = Protocol::realistic;
  std::vector<MethodRow> rows;
  std::vector<EntryScore> entries;
  std::vector<std::string> diagnostics;
};

inline std::string format_metrics_table(const MetricsTable& t) {
  std::string s = format_table_header() + "\n";
  for (const auto& r : t.rows) s += format_table_row(r.method, r.psnr, r.ssim) + "\n";
  return s;
}

inline nlohmann::json to_json(const MetricsTable& t) {
  nlohmann::json j;
  j["protocol"] = to_string(t.protocol);
  j["rows"] = nlohmann::json::array();
  for (const auto& r : t.rows) j["rows"].push_back({{"method", r.method}, {"psnr", r.psnr}, {"ssim", r.ssim}, {"count", r.count}});
  j["entries"] = nlohmann::json::array();
  for (const auto& e : t.entries) {
    auto m = to_json(e.metrics);
    m["method"] = e.method;
    m["id"] = e.id;
    m["width"] = e.eval_width;
    m["height"] = e.eval_height;
    j["entries"].push_back(m);
  }
  j["diagnostics"] = t.diagnostics;
  return j;
}

// outputs_dir holds one subdirectory per method with <id>.png files; a
// directory of PNGs with no subdirectories is one method named after it.
// Only ACCEPTED entries are scored, against gt_cal under the entry's mask.
inline MetricsTable evaluate(const std::filesystem::path& outputs_dir, const std::vector<ManifestEntry>& entries,
                             Protocol protocol, const Workspace& ws) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(outputs_dir)) throw Error(ErrorCode::io, "evaluate: not a directory: " + outputs_dir.string());
  std::vector<std::pair<std::string, fs::path>> methods;
  for (const auto& d : fs::directory_iterator(outputs_dir))
    if (d.is_directory()) methods.emplace_back(d.path().filename().string(), d.path());
  if (methods.empty()) methods.emplace_back(fs::absolute(outputs_dir).lexically_normal().filename().string(), outputs_dir);
  std::sort(methods.begin(), methods.end());

  std::vector<ManifestEntry> accepted;
  for (const auto& e : entries)
    if (e.stage == Stage::accepted) accepted.push_back(e);
  std::sort(accepted.begin(), accepted.end(), [](const auto& a, const auto& b) { return a.id < b.id; });

  MetricsTable table;
  table.protocol = protocol;
  for (const auto& [method, dir] : methods) {
    MethodRow row{method};
    std::vector<std::string> known;
    for (const auto& e : accepted) {
      known.push_back(e.id + ".png");
      const fs::path out_path = dir / (e.id + ".png");
      const std::string tag = method + "/" + e.id + ": ";
      if (!fs::exists(out_path)) {
        table.diagnostics.push_back(tag + "no output");
        continue;
      }
      try {
        const Raster gt = load_png(ws.resolve(e.paths.gt_cal));
        std::optional<Mask> mask;
        if (!e.paths.mask.empty()) mask = load_png(ws.resolve(e.paths.mask));
        std::string why;
        const auto out = prepare_output(load_png(out_path), gt, protocol, &why);
        if (!out) {
          table.diagnostics.push_back(tag + why);
          continue;
        }
        if (mask && (mask->channels() != 1 || !mask->same_size(gt))) {
          table.diagnostics.push_back(tag + "mask size differs from GT");
          continue;
        }
        EntryScore s{method, e.id, out->width(), out->height(), evaluate_pair(*out, gt, mask ? &*mask : nullptr)};
        row.psnr += s.metrics.psnr_db;
        row.ssim += s.metrics.ssim;
        ++row.count;
        table.entries.push_back(std::move(s));
      } catch (const Error& err) {
        table.diagnostics.push_back(tag + err.what());
      }
    }
    // Files that match no accepted entry.
    std::vector<std::string> extra;
    for (const auto& f : fs::directory_iterator(dir)) {
      const std::string fn = f.path().filename().string();
      if (f.is_regular_file() && f.path().extension() == ".png" &&
          std::find(known.begin(), known.end(), fn) == known.end())
        extra.push_back(fn);
    }
    std::sort(extra.begin(), extra.end());
    for (const auto& fn : extra) table.diagnostics.push_back(method + "/" + fn + ": no accepted entry with this id");
    if (row.count == 0) continue;
    row.psnr /= double(row.count);
    row.ssim /= double(row.count);
    table.rows.push_back(row);
  }
  if (table.rows.empty()) {
    throw Error(ErrorCode::no_statistics, "evaluate: no evaluable entries", table.diagnostics);
  }
  return table;
}

}  // namespace dualcal
