#pragma once

#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "httplib.h"
#include "json.hpp"

#include "dualcal/annosvc/annotation.hpp"
#include "dualcal/error.hpp"
#include "dualcal/flowalign/flow.hpp"
#include "dualcal/imagekit/png_io.hpp"
#include "dualcal/pipeline/manifest.hpp"
#include "dualcal/pipeline/stats.hpp"
#include "dualcal/pipeline/workspace.hpp"

namespace dualcal {

inline int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::not_found: return 404;
    case ErrorCode::conflict:
    case ErrorCode::stage_order: return 409;
    case ErrorCode::validation:
    case ErrorCode::contract_violation: return 400;
    default: return 500;
  }
}

inline nlohmann::json error_body(const Error& e) {
  return {{"code", std::string(to_string(e.code()))}, {"message", e.what()}, {"details", e.details()}};
}

namespace detail {

// Readers never see a partial file: write next to the target, then rename.
inline void write_file_atomic(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ostringstream tmp;
  tmp << path.string() << ".tmp." << std::this_thread::get_id();
  write_file_bytes(tmp.str(), bytes);
  std::filesystem::rename(tmp.str(), path);
}

inline nlohmann::json parse_body(const std::string& body) {
  nlohmann::json j = nlohmann::json::parse(body, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw Error(ErrorCode::validation, "request body must be a JSON object");
  return j;
}

}  // namespace detail

struct ServiceOptions {
  std::string host = "127.0.0.1";
  int port = 0;                     // 0 picks a free port
  std::filesystem::path static_dir;  // served at / when set
};

// Review service over one workspace. All state lives in the manifest and the
// sidecar files, so a restart reconstructs everything.
class AnnotationService {
 public:
  explicit AnnotationService(Workspace ws, ServiceOptions opt = {})
      : ws_(std::move(ws)), opt_(std::move(opt)), manifest_(ws_.manifest_path()) {
    routes();
  }
  ~AnnotationService() { stop(); }
  AnnotationService(const AnnotationService&) = delete;
  AnnotationService& operator=(const AnnotationService&) = delete;

  Manifest& manifest() { return manifest_; }
  const Workspace& workspace() const { return ws_; }

  // Binds and serves on a background thread; returns the bound port.
  int start() {
    port_ = opt_.port > 0 ? (svr_.bind_to_port(opt_.host, opt_.port) ? opt_.port : -1)
                          : svr_.bind_to_any_port(opt_.host);
    if (port_ < 0) throw Error(ErrorCode::io, "cannot bind " + opt_.host + ":" + std::to_string(opt_.port));
    thread_ = std::thread([this] { svr_.listen_after_bind(); });
    svr_.wait_until_ready();
    return port_;
  }

  // Blocking variant for the CLI.
  void run() {
    if (!svr_.listen(opt_.host, opt_.port)) {
      throw Error(ErrorCode::io, "cannot listen on " + opt_.host + ":" + std::to_string(opt_.port));
    }
  }

  void stop() {
    svr_.stop();
    if (thread_.joinable()) thread_.join();
  }

  int port() const { return port_; }

  // ------------------------------------------------------------ operations

  nlohmann::json list_pairs(const std::optional<Stage>& filter) const {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& e : manifest_.entries()) {  // sorted by id
      if (filter && e.stage != *filter) continue;
      out.push_back(summary(e));
    }
    return out;
  }

  nlohmann::json get_pair(const std::string& id) const {
    const ManifestEntry e = entry(id);
    nlohmann::json j = to_json(e);
    j["has_annotation"] = has_annotation(e);
    j["verdict"] = verdict_json(e);
    const auto sidecar = ws_.resolve(Workspace::annotation_rel(id));
    if (std::filesystem::exists(sidecar)) {
      const auto bytes = read_file_bytes(sidecar);
      j["annotation"] = nlohmann::json::parse(bytes.begin(), bytes.end());
    } else {
      j["annotation"] = nullptr;
    }
    return j;
  }

  std::vector<std::uint8_t> get_asset(const std::string& id, const std::string& role) const {
    const ManifestEntry e = entry(id);
    auto missing = [&](const std::string& what) {
      return Error(ErrorCode::conflict, "asset '" + role + "' of " + id + " is not available",
                   {what, "stage is " + to_string(e.stage)});
    };
    std::string path;
    if (role == "wide") path = e.paths.wide;
    else if (role == "tele") path = e.paths.tele;
    else if (role == "gt") path = e.paths.gt_raw;
    else if (role == "wide_cal") path = e.paths.wide_cal;
    else if (role == "tele_cal") path = e.paths.tele_cal;
    else if (role == "gt_cal") path = e.paths.gt_cal;
    else if (role == "mask") path = e.paths.mask;
    else if (role == "residual") return residual(e, missing);
    else throw Error(ErrorCode::validation, "unknown asset role '" + role + "'");
    if (path.empty()) {
      throw missing(role == "mask" ? "no annotation saved yet" : "entry has not been calibrated");
    }
    const auto p = ws_.resolve(path);
    if (!std::filesystem::exists(p)) throw missing("file missing on disk: " + path);
    return read_file_bytes(p);
  }

  // Body: {"revision": base, "author": .., "polygons": [...]}. The base
  // revision must equal the stored one; the save becomes base + 1.
  nlohmann::json put_annotation(const std::string& id, const nlohmann::json& body) {
    AnnotationSet set = annotation_from_json(body);
    if (!body.contains("revision") || !body["revision"].is_number_integer()) {
      throw Error(ErrorCode::validation, "annotation needs the integer base revision it was drawn against");
    }
    std::lock_guard lock(writer_);
    ManifestEntry e = entry(id);
    if (stage_rank(e.stage) < stage_rank(Stage::calibrated)) {
      throw Error(ErrorCode::stage_order, "entry " + id + " is " + to_string(e.stage) + "; annotation needs CALIBRATED");
    }
    if (!transition_allowed(e.stage, Stage::annotated)) {
      throw Error(ErrorCode::stage_order, "entry " + id + " already has a verdict (" + to_string(e.stage) + ")");
    }
    if (set.revision != e.annotation_revision) {
      throw Error(ErrorCode::conflict, "stale revision",
                  {"base revision " + std::to_string(set.revision) + ", current " +
                   std::to_string(e.annotation_revision)});
    }
    const Raster gt = load_png(ws_.resolve(e.paths.gt_cal));
    const auto issues = validate_polygons(set.polygons, gt.width(), gt.height());
    if (!issues.empty()) throw Error(ErrorCode::validation, "invalid polygons", issues);

    set.entry_id = id;
    set.revision = e.annotation_revision + 1;
    const Mask mask = rasterize_even_odd(set.polygons, gt.width(), gt.height());
    const std::string sidecar = to_json(set).dump(2) + "\n";
    std::filesystem::create_directories(ws_.resolve(Workspace::annotation_rel(id)).parent_path());
    std::filesystem::create_directories(ws_.resolve(Workspace::mask_rel(id)).parent_path());
    detail::write_file_atomic(ws_.resolve(Workspace::annotation_rel(id)), {sidecar.begin(), sidecar.end()});
    detail::write_file_atomic(ws_.resolve(Workspace::mask_rel(id)), encode_png(mask));

    advance_stage(e, Stage::annotated);
    e.annotation_revision = set.revision;
    e.paths.mask = Workspace::mask_rel(id);
    manifest_.put(e);
    std::size_t problem = 0;
    for (auto v : mask.data()) problem += v == kMaskProblem;
    return {{"id", id}, {"revision", set.revision}, {"stage", to_string(e.stage)}, {"mask_problem_pixels", problem}};
  }

  // Body: {"decision": "keep"|"reject", "reason": .., "author": ..}.
  nlohmann::json put_verdict(const std::string& id, const nlohmann::json& body) {
    Verdict v;
    v.entry_id = id;
    const std::string decision = body.value("decision", std::string());
    if (decision == "keep") v.decision = Decision::keep;
    else if (decision == "reject") v.decision = Decision::reject;
    else throw Error(ErrorCode::validation, "decision must be 'keep' or 'reject'");
    if (body.contains("reason") && !body["reason"].is_null()) {
      if (!body["reason"].is_string()) throw Error(ErrorCode::validation, "reason must be a string");
      v.reason = reason_from_string(body["reason"].get<std::string>());
    }
    if (v.decision == Decision::reject && !v.reason) throw Error(ErrorCode::validation, "reject requires a reason");
    v.author = body.value("author", std::string());

    std::lock_guard lock(writer_);
    ManifestEntry e = entry(id);
    if (e.stage != Stage::annotated) {
      throw Error(ErrorCode::stage_order, "entry " + id + " is " + to_string(e.stage) + "; verdict needs ANNOTATED");
    }
    e.verdict_reason = v.decision == Decision::reject ? v.reason : std::nullopt;
    e.verdict_author = v.author;
    advance_stage(e, v.decision == Decision::keep ? Stage::accepted : Stage::rejected);
    manifest_.put(e);
    return summary(e);
  }

  nlohmann::json stats() const { return to_json(stage_report(manifest_.entries())); }

 private:
  ManifestEntry entry(const std::string& id) const {
    auto e = manifest_.find(id);
    if (!e) throw Error(ErrorCode::not_found, "unknown entry " + id);
    return *e;
  }

  bool has_annotation(const ManifestEntry& e) const { return e.annotation_revision > 0; }

  static nlohmann::json verdict_json(const ManifestEntry& e) {
    if (e.stage == Stage::accepted) return {{"decision", "keep"}, {"reason", nullptr}, {"author", e.verdict_author}};
    if (e.stage == Stage::rejected) {
      return {{"decision", "reject"},
              {"reason", e.verdict_reason ? nlohmann::json(to_string(*e.verdict_reason)) : nlohmann::json()},
              {"author", e.verdict_author}};
    }
    return nullptr;
  }

  nlohmann::json summary(const ManifestEntry& e) const {
    return {{"id", e.id},
            {"stage", to_string(e.stage)},
            {"occlusion_score", e.occlusion_score ? nlohmann::json(*e.occlusion_score) : nlohmann::json()},
            {"has_annotation", has_annotation(e)},
            {"verdict", verdict_json(e)}};
  }

  template <typename Missing>
  std::vector<std::uint8_t> residual(const ManifestEntry& e, Missing&& missing) const {
    if (e.paths.wide_cal.empty() || e.paths.gt_cal.empty()) throw missing("entry has not been calibrated");
    const auto cached = ws_.resolve(Workspace::residual_cache_rel(e.id));
    if (std::filesystem::exists(cached)) return read_file_bytes(cached);
    const RasterF r = residual_map(load_png(ws_.resolve(e.paths.wide_cal)), load_png(ws_.resolve(e.paths.gt_cal)));
    const auto bytes = encode_png(to_u8(r));
    std::filesystem::create_directories(cached.parent_path());
    detail::write_file_atomic(cached, bytes);
    return bytes;
  }

  template <typename Fn>
  static void handle(httplib::Response& res, Fn&& fn) {
    try {
      fn();
    } catch (const Error& e) {
      res.status = http_status(e.code());
      res.set_content(error_body(e).dump(), "application/json");
    } catch (const std::exception& e) {
      res.status = 500;
      res.set_content(error_body(Error(ErrorCode::io, e.what())).dump(), "application/json");
    }
  }

  static void send_json(httplib::Response& res, const nlohmann::json& j) {
    res.status = 200;
    res.set_content(j.dump(), "application/json");
  }

  void routes() {
    svr_.Get("/api/pairs", [this](const httplib::Request& req, httplib::Response& res) {
      handle(res, [&] {
        std::optional<Stage> filter;
        if (req.has_param("stage")) filter = stage_from_string(req.get_param_value("stage"));
        send_json(res, list_pairs(filter));
      });
    });
    svr_.Get("/api/pairs/:id", [this](const httplib::Request& req, httplib::Response& res) {
      handle(res, [&] { send_json(res, get_pair(req.path_params.at("id"))); });
    });
    svr_.Get("/api/pairs/:id/asset/:role", [this](const httplib::Request& req, httplib::Response& res) {
      handle(res, [&] {
        const auto bytes = get_asset(req.path_params.at("id"), req.path_params.at("role"));
        res.status = 200;
        res.set_content(reinterpret_cast<const char*>(bytes.data()), bytes.size(), "image/png");
      });
    });
    svr_.Put("/api/pairs/:id/annotation", [this](const httplib::Request& req, httplib::Response& res) {
      handle(res, [&] { send_json(res, put_annotation(req.path_params.at("id"), detail::parse_body(req.body))); });
    });
    svr_.Put("/api/pairs/:id/verdict", [this](const httplib::Request& req, httplib::Response& res) {
      handle(res, [&] { send_json(res, put_verdict(req.path_params.at("id"), detail::parse_body(req.body))); });
    });
    svr_.Get("/api/stats", [this](const httplib::Request&, httplib::Response& res) {
      handle(res, [&] { send_json(res, stats()); });
    });
    if (!opt_.static_dir.empty() && std::filesystem::is_directory(opt_.static_dir)) {
      svr_.set_mount_point("/", opt_.static_dir.string());
    }
  }

  Workspace ws_;
  ServiceOptions opt_;
  Manifest manifest_;
  std::mutex writer_;
  httplib::Server svr_;
  std::thread thread_;
  int port_ = -1;
};

}  // namespace dualcal
