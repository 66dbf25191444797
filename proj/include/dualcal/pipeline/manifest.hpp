#pragma once

#include <array>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <openssl/evp.h>

#include "json.hpp"

#include "dualcal/error.hpp"
#include "dualcal/registration/homography.hpp"
#include "dualcal/registration/scale_align.hpp"

namespace dualcal {

inline constexpr int kManifestSchema = 1;

enum class Stage { acquired, calibrated, annotated, accepted, rejected };
enum class VerdictReason { misaligned, blur, shaking, motion, defocus, other };
enum class Split { train, test };

inline const std::array<Stage, 5>& all_stages() {
  static const std::array<Stage, 5> s{Stage::acquired, Stage::calibrated, Stage::annotated, Stage::accepted,
                                      Stage::rejected};
  return s;
}

inline std::string to_string(Stage s) {
  switch (s) {
    case Stage::acquired: return "ACQUIRED";
    case Stage::calibrated: return "CALIBRATED";
    case Stage::annotated: return "ANNOTATED";
    case Stage::accepted: return "ACCEPTED";
    case Stage::rejected: return "REJECTED";
  }
  return "?";
}

inline Stage stage_from_string(const std::string& s) {
  for (Stage st : all_stages())
    if (to_string(st) == s) return st;
  throw Error(ErrorCode::validation, "unknown stage '" + s + "'");
}

inline std::string to_string(VerdictReason r) {
  switch (r) {
    case VerdictReason::misaligned: return "misaligned";
    case VerdictReason::blur: return "blur";
    case VerdictReason::shaking: return "shaking";
    case VerdictReason::motion: return "motion";
    case VerdictReason::defocus: return "defocus";
    case VerdictReason::other: return "other";
  }
  return "?";
}

inline const std::array<VerdictReason, 6>& all_reasons() {
  static const std::array<VerdictReason, 6> r{VerdictReason::misaligned, VerdictReason::blur, VerdictReason::shaking,
                                               VerdictReason::motion,     VerdictReason::defocus, VerdictReason::other};
  return r;
}

inline VerdictReason reason_from_string(const std::string& s) {
  for (auto r : all_reasons())
    if (to_string(r) == s) return r;
  throw Error(ErrorCode::validation, "unknown verdict reason '" + s + "'");
}

inline std::string to_string(Split s) { return s == Split::train ? "train" : "test"; }

inline Split split_from_string(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "test") return Split::test;
  throw Error(ErrorCode::validation, "unknown split '" + s + "'");
}

// Stage rank along the forward chain; the two verdict outcomes share a rank.
inline int stage_rank(Stage s) {
  switch (s) {
    case Stage::acquired: return 0;
    case Stage::calibrated: return 1;
    case Stage::annotated: return 2;
    case Stage::accepted:
    case Stage::rejected: return 3;
  }
  return -1;
}

inline bool transition_allowed(Stage from, Stage to) {
  if (from == Stage::acquired) return to == Stage::calibrated;
  if (from == Stage::calibrated) return to == Stage::annotated;
  if (from == Stage::annotated) return to == Stage::annotated || to == Stage::accepted || to == Stage::rejected;
  return false;
}

struct EntryPaths {
  std::string wide;
  std::string tele;
  std::string gt_raw;
  std::string wide_cal;
  std::string tele_cal;
  std::string gt_cal;
  std::string mask;

  friend bool operator==(const EntryPaths&, const EntryPaths&) = default;
};

struct ManifestEntry {
  std::string id;
  std::string capture;  // source subfolder name
  EntryPaths paths;
  Stage stage = Stage::acquired;
  std::optional<VerdictReason> verdict_reason;
  std::string verdict_author;
  std::optional<Split> split;
  std::optional<Homography> homography;
  std::optional<double> occlusion_score;
  std::optional<double> magnification;
  int annotation_revision = 0;
  std::string error;
  std::vector<std::string> diagnostics;
  std::string created;
  std::string updated;
};

inline void advance_stage(ManifestEntry& e, Stage to) {
  if (!transition_allowed(e.stage, to)) {
    throw Error(ErrorCode::stage_order, "entry " + e.id + ": cannot move from " + to_string(e.stage) + " to " +
                                            to_string(to));
  }
  if (to == Stage::rejected && !e.verdict_reason) {
    throw Error(ErrorCode::validation, "entry " + e.id + ": rejection requires a reason");
  }
  e.stage = to;
}

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline std::string sha256_hex(const std::vector<std::vector<std::uint8_t>>& parts) {
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (!ctx) throw Error(ErrorCode::io, "sha256: context allocation failed");
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  for (const auto& p : parts) {
    // Length prefix keeps part boundaries unambiguous.
    std::uint8_t len[8];
    for (int i = 0; i < 8; ++i) len[i] = static_cast<std::uint8_t>(std::uint64_t(p.size()) >> (8 * i));
    EVP_DigestUpdate(ctx, len, 8);
    EVP_DigestUpdate(ctx, p.data(), p.size());
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int n = 0;
  EVP_DigestFinal_ex(ctx, md, &n);
  EVP_MD_CTX_free(ctx);
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < n; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 15];
  }
  return out;
}

namespace detail {

inline nlohmann::json opt_str(const std::string& s) { return s.empty() ? nlohmann::json() : nlohmann::json(s); }
inline std::string get_str(const nlohmann::json& j, const char* key) {
  return j.contains(key) && j[key].is_string() ? j[key].get<std::string>() : std::string();
}

}  // namespace detail

inline nlohmann::json to_json(const ManifestEntry& e, bool with_timestamps = true) {
  nlohmann::json j;
  j["schema"] = kManifestSchema;
  j["id"] = e.id;
  j["capture"] = e.capture;
  j["paths"] = {{"wide", detail::opt_str(e.paths.wide)},         {"tele", detail::opt_str(e.paths.tele)},
                {"gt_raw", detail::opt_str(e.paths.gt_raw)},     {"wide_cal", detail::opt_str(e.paths.wide_cal)},
                {"tele_cal", detail::opt_str(e.paths.tele_cal)}, {"gt_cal", detail::opt_str(e.paths.gt_cal)},
                {"mask", detail::opt_str(e.paths.mask)}};
  j["stage"] = to_string(e.stage);
  j["verdict_reason"] = e.verdict_reason ? nlohmann::json(to_string(*e.verdict_reason)) : nlohmann::json();
  j["verdict_author"] = detail::opt_str(e.verdict_author);
  j["split"] = e.split ? nlohmann::json(to_string(*e.split)) : nlohmann::json();
  j["homography"] = e.homography ? homography_to_json(*e.homography) : nlohmann::json();
  j["occlusion_score"] = e.occlusion_score ? nlohmann::json(*e.occlusion_score) : nlohmann::json();
  j["magnification"] = e.magnification ? nlohmann::json(*e.magnification) : nlohmann::json();
  j["annotation_revision"] = e.annotation_revision;
  j["error"] = detail::opt_str(e.error);
  j["diagnostics"] = e.diagnostics;
  if (with_timestamps) j["timestamps"] = {{"created", e.created}, {"updated", e.updated}};
  return j;
}

inline ManifestEntry entry_from_json(const nlohmann::json& j) {
  try {
    if (j.at("schema").get<int>() != kManifestSchema) {
      throw Error(ErrorCode::validation, "unsupported manifest schema " + j.at("schema").dump());
    }
    ManifestEntry e;
    e.id = j.at("id").get<std::string>();
    e.capture = detail::get_str(j, "capture");
    const auto& p = j.at("paths");
    e.paths = {detail::get_str(p, "wide"),     detail::get_str(p, "tele"),   detail::get_str(p, "gt_raw"),
               detail::get_str(p, "wide_cal"), detail::get_str(p, "tele_cal"), detail::get_str(p, "gt_cal"),
               detail::get_str(p, "mask")};
    e.stage = stage_from_string(j.at("stage").get<std::string>());
    if (j.contains("verdict_reason") && j["verdict_reason"].is_string())
      e.verdict_reason = reason_from_string(j["verdict_reason"].get<std::string>());
    e.verdict_author = detail::get_str(j, "verdict_author");
    if (j.contains("split") && j["split"].is_string()) e.split = split_from_string(j["split"].get<std::string>());
    if (j.contains("homography") && !j["homography"].is_null()) e.homography = homography_from_json(j["homography"]);
    if (j.contains("occlusion_score") && j["occlusion_score"].is_number())
      e.occlusion_score = j["occlusion_score"].get<double>();
    if (j.contains("magnification") && j["magnification"].is_number()) e.magnification = j["magnification"].get<double>();
    e.annotation_revision = j.value("annotation_revision", 0);
    e.error = detail::get_str(j, "error");
    if (j.contains("diagnostics")) e.diagnostics = j["diagnostics"].get<std::vector<std::string>>();
    if (j.contains("timestamps")) {
      e.created = detail::get_str(j["timestamps"], "created");
      e.updated = detail::get_str(j["timestamps"], "updated");
    }
    return e;
  } catch (const nlohmann::json::exception& ex) {
    throw Error(ErrorCode::validation, std::string("malformed manifest entry: ") + ex.what());
  }
}

// JSON Lines store: one entry per line, appended on every change; the last
// line for an id wins. compact() rewrites the file sorted by id. All mutation
// goes through one mutex.
class Manifest {
 public:
  Manifest() = default;
  explicit Manifest(std::filesystem::path path) : path_(std::move(path)) { reload(); }

  const std::filesystem::path& path() const { return path_; }

  void reload() {
    std::lock_guard lock(mu_);
    entries_.clear();
    skipped_lines_ = 0;
    if (path_.empty() || !std::filesystem::exists(path_)) return;
    std::ifstream in(path_);
    if (!in) throw Error(ErrorCode::io, "cannot open manifest " + path_.string());
    std::string line;
    while (std::getline(in, line)) {
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
      if (j.is_discarded()) {
        ++skipped_lines_;  // torn write
        continue;
      }
      ManifestEntry e = entry_from_json(j);
      entries_[e.id] = std::move(e);
    }
  }

  std::size_t skipped_lines() const { return skipped_lines_; }

  std::vector<ManifestEntry> entries() const {
    std::lock_guard lock(mu_);
    std::vector<ManifestEntry> out;
    out.reserve(entries_.size());
    for (const auto& [id, e] : entries_) out.push_back(e);
    return out;
  }

  std::optional<ManifestEntry> find(const std::string& id) const {
    std::lock_guard lock(mu_);
    const auto it = entries_.find(id);
    if (it == entries_.end()) return std::nullopt;
    return it->second;
  }

  bool contains(const std::string& id) const {
    std::lock_guard lock(mu_);
    return entries_.count(id) != 0;
  }

  std::size_t size() const {
    std::lock_guard lock(mu_);
    return entries_.size();
  }

  void put(ManifestEntry e) {
    std::lock_guard lock(mu_);
    put_locked(std::move(e));
  }

  // Read-modify-write under the writer lock; fn may throw to abort.
  template <typename Fn>
  ManifestEntry update(const std::string& id, Fn&& fn) {
    std::lock_guard lock(mu_);
    const auto it = entries_.find(id);
    if (it == entries_.end()) throw Error(ErrorCode::not_found, "unknown entry " + id);
    ManifestEntry e = it->second;
    fn(e);
    put_locked(e);
    return e;
  }

  void compact() {
    std::lock_guard lock(mu_);
    if (path_.empty()) return;
    std::filesystem::create_directories(path_.parent_path().empty() ? "." : path_.parent_path());
    const auto tmp = path_.string() + ".tmp";
    {
      std::ofstream out(tmp, std::ios::trunc);
      if (!out) throw Error(ErrorCode::io, "cannot write " + tmp);
      for (const auto& [id, e] : entries_) out << to_json(e).dump() << "\n";
      out.flush();
      if (!out) throw Error(ErrorCode::io, "short write to " + tmp);
    }
    std::filesystem::rename(tmp, path_);
  }

  // Sorted, timestamp-free rendering used for determinism checks.
  std::string canonical_text() const {
    std::lock_guard lock(mu_);
    std::string out;
    for (const auto& [id, e] : entries_) out += to_json(e, false).dump() + "\n";
    return out;
  }

 private:
  void put_locked(ManifestEntry e) {
    e.updated = utc_timestamp();
    if (e.created.empty()) e.created = e.updated;
    if (!path_.empty()) {
      if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
      std::ofstream out(path_, std::ios::app);
      if (!out) throw Error(ErrorCode::io, "cannot append to manifest " + path_.string());
      out << to_json(e).dump() << "\n";
      out.flush();
      if (!out) throw Error(ErrorCode::io, "short write to manifest " + path_.string());
    }
    entries_[e.id] = std::move(e);
  }

  std::filesystem::path path_;
  mutable std::mutex mu_;
  std::map<std::string, ManifestEntry> entries_;
  std::size_t skipped_lines_ = 0;
};

}  // namespace dualcal
