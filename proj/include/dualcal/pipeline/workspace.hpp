#pragma once

#include <filesystem>
#include <string>

#include "dualcal/error.hpp"

namespace dualcal {

// On-disk layout rooted at one directory. Paths recorded in the manifest for
// derived files are relative to the root so a workspace can be moved.
//
//   manifest.jsonl
//   calibrated/<id>/{wide_cal,tele_cal,gt_cal}.png, calibration.json
//   annotations/<id>.json
//   masks/<id>.png
//   cache/<id>.flow, cache/<id>.residual.png
class Workspace {
 public:
  Workspace() = default;
  explicit Workspace(std::filesystem::path root) : root_(std::move(root)) {}

  const std::filesystem::path& root() const { return root_; }
  std::filesystem::path manifest_path() const { return root_ / "manifest.jsonl"; }

  std::filesystem::path resolve(const std::string& p) const {
    detail::require(!p.empty(), "workspace: empty path");
    const std::filesystem::path path(p);
    return path.is_absolute() ? path : root_ / path;
  }

  static std::string calibrated_rel(const std::string& id, const std::string& role) {
    return "calibrated/" + id + "/" + role + ".png";
  }
  static std::string calibration_record_rel(const std::string& id) { return "calibrated/" + id + "/calibration.json"; }
  static std::string mask_rel(const std::string& id) { return "masks/" + id + ".png"; }
  static std::string annotation_rel(const std::string& id) { return "annotations/" + id + ".json"; }
  static std::string flow_cache_rel(const std::string& id) { return "cache/" + id + ".flow"; }
  static std::string residual_cache_rel(const std::string& id) { return "cache/" + id + ".residual.png"; }

 private:
  std::filesystem::path root_;
};

}  // namespace dualcal
