#pragma once

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <filesystem>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

#include "dualcal/colormap/lut.hpp"
#include "dualcal/colormap/lut3d.hpp"
#include "dualcal/error.hpp"
#include "dualcal/flowalign/flow.hpp"
#include "dualcal/fusion/fusion.hpp"
#include "dualcal/imagekit/filter.hpp"
#include "dualcal/imagekit/png_io.hpp"
#include "dualcal/pipeline/config.hpp"
#include "dualcal/pipeline/manifest.hpp"
#include "dualcal/pipeline/workspace.hpp"
#include "dualcal/registration/scale_align.hpp"

namespace dualcal {

struct IngestReport {
  std::vector<ManifestEntry> added;    // new entries, ACQUIRED
  std::vector<std::string> existing;   // ids already present, left untouched
  std::vector<std::string> diagnostics;
  int warnings = 0;
};

// Content id: first 16 hex chars of SHA-256 over the three raw files.
inline std::string entry_id(const std::filesystem::path& wide, const std::filesystem::path& tele,
                            const std::filesystem::path& gt) {
  return sha256_hex({read_file_bytes(wide), read_file_bytes(tele), read_file_bytes(gt)}).substr(0, 16);
}

// Each subfolder of session_dir holding wide.png, tele.png and gt.png becomes
// one ACQUIRED entry. Incomplete captures are skipped with a diagnostic.
inline IngestReport ingest(const std::filesystem::path& session_dir, Manifest& manifest) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(session_dir)) {
    throw Error(ErrorCode::io, "ingest: not a directory: " + session_dir.string());
  }
  std::vector<fs::path> captures;
  for (const auto& d : fs::directory_iterator(session_dir))
    if (d.is_directory()) captures.push_back(d.path());
  std::sort(captures.begin(), captures.end());

  IngestReport rep;
  if (captures.empty()) {
    rep.diagnostics.push_back("no capture folders in " + session_dir.string());
    ++rep.warnings;
    return rep;
  }
  for (const auto& dir : captures) {
    const std::string name = dir.filename().string();
    std::vector<std::string> missing;
    for (const char* f : {"wide.png", "tele.png", "gt.png"})
      if (!fs::is_regular_file(dir / f)) missing.push_back(f);
    if (!missing.empty()) {
      std::string msg = name + ": missing";
      for (const auto& m : missing) msg += " " + m;
      rep.diagnostics.push_back(msg + ", skipped");
      ++rep.warnings;
      continue;
    }
    const fs::path abs = fs::absolute(dir).lexically_normal();
    const std::string id = entry_id(abs / "wide.png", abs / "tele.png", abs / "gt.png");
    if (manifest.contains(id)) {
      rep.existing.push_back(id);
      continue;
    }
    ManifestEntry e;
    e.id = id;
    e.capture = name;
    e.paths.wide = (abs / "wide.png").string();
    e.paths.tele = (abs / "tele.png").string();
    e.paths.gt_raw = (abs / "gt.png").string();
    manifest.put(e);
    rep.added.push_back(*manifest.find(id));
  }
  return rep;
}

// 99th percentile (nearest rank) of the blurred luma residual, in [0, 1].
inline double occlusion_score(const Raster& w_cal, const Raster& gt_cal, double sigma = 1.0) {
  if (!w_cal.same_shape(gt_cal)) {
    throw Error(ErrorCode::contract_violation, "occlusion_score: dimension mismatch");
  }
  const RasterF r = residual_map(w_cal, gt_cal, sigma);
  const auto d = r.data();
  return std::clamp(detail::percentile({d.begin(), d.end()}, 0.99), 0.0, 1.0);
}

struct CalibrationOutput {
  Raster w_cal;
  Raster t_cal;
  Raster gt_cal;
  ScaleAlignResult scale;  // pre-flow, pre-crop rasters
  FlowField flow;          // empty when the flow stage is off
  ColorLUT lut;            // intensity mode only
  double occlusion = 0.0;
  std::vector<std::string> diagnostics;
};

// The calibration chain on in-memory rasters: scale alignment, residual flow,
// colour mapping of GT toward the wide frame, centre crop.
inline CalibrationOutput calibrate_images(const Raster& wide, const Raster& tele, const Raster& gt,
                                          const PipelineConfig& cfg, const std::string& name = "pair") {
  CalibrationOutput out;
  out.scale = scale_align(wide, gt, tele, cfg.scale, name);
  Raster w = out.scale.w_cal;
  Raster t = out.scale.t_cal;
  Raster g = out.scale.gt_cal;

  // LK assumes brightness constancy, so the moving image is matched to the
  // reference with a provisional LUT for estimation only; the warp applies to
  // the original pixels.
  auto matched = [](const Raster& mov, const Raster& ref) { return apply_lut(mov, build_intensity_lut(mov, ref)); };
  if (cfg.flow_warp == FlowWarp::gt) {
    out.flow = compute_flow(w, matched(g, w), cfg.flow);
    g = warp_with_flow(g, out.flow);
  } else if (cfg.flow_warp == FlowWarp::wide) {
    out.flow = compute_flow(g, matched(w, g), cfg.flow);
    w = warp_with_flow(w, out.flow);
  }
  if (!out.flow.valid.empty()) {
    const auto n = std::count(out.flow.valid.begin(), out.flow.valid.end(), std::uint8_t{1});
    char buf[96];
    std::snprintf(buf, sizeof buf, "flow valid fraction %.4f", double(n) / double(out.flow.valid.size()));
    out.diagnostics.push_back(buf);
  }

  if (cfg.lut_mode == LutMode::intensity) {
    out.lut = build_intensity_lut(g, w);
    g = apply_lut(g, out.lut);
  } else if (cfg.lut_mode == LutMode::lut3d) {
    g = build_apply_lut3d(g, w, cfg.lut3d_bins);
  }

  if (w.width() >= cfg.crop_width && w.height() >= cfg.crop_height) {
    w = center_crop(w, cfg.crop_width, cfg.crop_height);
    t = center_crop(t, cfg.crop_width, cfg.crop_height);
    g = center_crop(g, cfg.crop_width, cfg.crop_height);
  } else {
    out.diagnostics.push_back("crop skipped: calibrated size " + std::to_string(w.width()) + "x" +
                              std::to_string(w.height()) + " is smaller than " + std::to_string(cfg.crop_width) +
                              "x" + std::to_string(cfg.crop_height));
  }
  out.occlusion = occlusion_score(w, g, cfg.occlusion_sigma);
  out.w_cal = std::move(w);
  out.t_cal = std::move(t);
  out.gt_cal = std::move(g);
  return out;
}

namespace detail {

inline nlohmann::json calibration_record(const CalibrationOutput& c, const PipelineConfig& cfg) {
  nlohmann::json j;
  j["scale_align"] = to_json(c.scale);
  j["lut_mode"] = cfg.lut_mode == LutMode::intensity ? "intensity" : cfg.lut_mode == LutMode::lut3d ? "lut3d" : "none";
  if (cfg.lut_mode == LutMode::intensity) j["lut"] = to_json(c.lut);
  j["occlusion_score"] = c.occlusion;
  j["output"] = {{"width", c.w_cal.width()}, {"height", c.w_cal.height()}};
  j["diagnostics"] = c.diagnostics;
  return j;
}

inline PipelineConfig seeded(PipelineConfig cfg) {
  sync_seeds(cfg);
  return cfg;
}

}  // namespace detail

// Runs the chain for one ACQUIRED entry and writes its calibrated files.
// Alignment failure leaves the stage at ACQUIRED with the error recorded.
inline ManifestEntry calibrate(const ManifestEntry& entry, const PipelineConfig& config, const Workspace& ws) {
  if (entry.stage != Stage::acquired) {
    throw Error(ErrorCode::stage_order, "entry " + entry.id + ": calibrate requires ACQUIRED, found " +
                                            to_string(entry.stage));
  }
  const PipelineConfig cfg = detail::seeded(config);
  ManifestEntry e = entry;
  e.diagnostics.clear();
  CalibrationOutput c;
  try {
    c = calibrate_images(load_png(ws.resolve(e.paths.wide)), load_png(ws.resolve(e.paths.tele)),
                         load_png(ws.resolve(e.paths.gt_raw)), cfg, e.id);
  } catch (const Error& err) {
    if (err.code() != ErrorCode::alignment_failed) throw;
    e.error = err.what();
    return e;
  }
  e.paths.wide_cal = Workspace::calibrated_rel(e.id, "wide_cal");
  e.paths.tele_cal = Workspace::calibrated_rel(e.id, "tele_cal");
  e.paths.gt_cal = Workspace::calibrated_rel(e.id, "gt_cal");
  write_png(c.w_cal, ws.resolve(e.paths.wide_cal));
  write_png(c.t_cal, ws.resolve(e.paths.tele_cal));
  write_png(c.gt_cal, ws.resolve(e.paths.gt_cal));
  if (!c.flow.valid.empty()) save_flow(c.flow, ws.resolve(Workspace::flow_cache_rel(e.id)));
  const std::string record = detail::calibration_record(c, cfg).dump(2) + "\n";
  write_file_bytes(ws.resolve(Workspace::calibration_record_rel(e.id)), {record.begin(), record.end()});

  e.homography = c.scale.h_tele_to_wide;
  e.magnification = c.scale.magnification;
  e.occlusion_score = c.occlusion;
  e.diagnostics = c.diagnostics;
  e.error.clear();
  advance_stage(e, Stage::calibrated);
  return e;
}

inline ManifestEntry calibrate_id(Manifest& manifest, const std::string& id, const PipelineConfig& cfg,
                                  const Workspace& ws) {
  const auto found = manifest.find(id);
  if (!found) throw Error(ErrorCode::not_found, "unknown entry " + id);
  ManifestEntry e = calibrate(*found, cfg, ws);
  manifest.put(e);
  return *manifest.find(id);
}

struct CalibrateSummary {
  std::vector<std::string> calibrated;
  std::vector<std::string> failed;  // error recorded on the entry
};

// Calibrates every ACQUIRED entry on cfg.workers threads. Entries write to
// disjoint files; the manifest serializes its own writes. The manifest is
// compacted at the end so the file order never depends on scheduling.
inline CalibrateSummary calibrate_all(Manifest& manifest, const PipelineConfig& cfg, const Workspace& ws) {
  std::vector<ManifestEntry> todo;
  for (auto& e : manifest.entries())
    if (e.stage == Stage::acquired) todo.push_back(std::move(e));

  std::vector<int> ok(todo.size(), 0);
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < todo.size(); i = next++) {
      ManifestEntry e;
      try {
        e = calibrate(todo[i], cfg, ws);
      } catch (const Error& err) {
        e = todo[i];
        e.error = std::string(to_string(err.code())) + ": " + err.what();
      }
      ok[i] = e.stage == Stage::calibrated;
      manifest.put(std::move(e));
    }
  };
  const int n = std::max(1, std::min<int>(cfg.workers, static_cast<int>(todo.size())));
  std::vector<std::thread> pool;
  for (int k = 1; k < n; ++k) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  manifest.compact();

  CalibrateSummary s;
  for (std::size_t i = 0; i < todo.size(); ++i) (ok[i] ? s.calibrated : s.failed).push_back(todo[i].id);
  return s;
}

}  // namespace dualcal
