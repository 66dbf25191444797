// Command-line front end: dataset ingest, calibration, protocols, review service.

#include <csignal>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "dualcal/annosvc.hpp"
#include "dualcal/fusion.hpp"
#include "dualcal/pipeline.hpp"

namespace fs = std::filesystem;
using namespace dualcal;

namespace {

struct Globals {
  std::string workspace = ".";
  std::string config_path;
  int workers = 0;
};

PipelineConfig effective_config(const Globals& g) {
  PipelineConfig cfg = default_config();
  if (!g.config_path.empty()) {
    cfg = load_config(g.config_path);
  } else if (fs::exists(fs::path(g.workspace) / "pipeline.cfg")) {
    cfg = load_config(fs::path(g.workspace) / "pipeline.cfg");
  }
  if (g.workers > 0) cfg.workers = g.workers;
  return cfg;
}

int run_ingest(const Globals& g, const std::string& dir) {
  const Workspace ws(g.workspace);
  Manifest m(ws.manifest_path());
  const auto r = ingest(dir, m);
  for (const auto& d : r.diagnostics) std::cerr << "warning: " << d << "\n";
  for (const auto& e : r.added) std::cout << e.id << "  " << e.capture << "\n";
  m.compact();
  std::cout << "ingested " << r.added.size() << ", already present " << r.existing.size() << ", warnings "
            << r.warnings << "\n";
  return 0;
}

int run_calibrate(const Globals& g, const std::vector<std::string>& ids, bool all) {
  const Workspace ws(g.workspace);
  const PipelineConfig cfg = effective_config(g);
  Manifest m(ws.manifest_path());
  if (all || ids.empty()) {
    const auto s = calibrate_all(m, cfg, ws);
    for (const auto& id : s.failed) std::cerr << "failed: " << id << ": " << m.find(id)->error << "\n";
    std::cout << "calibrated " << s.calibrated.size() << ", failed " << s.failed.size() << "\n";
    return s.failed.empty() ? 0 : 1;
  }
  int status = 0;
  for (const auto& id : ids) {
    const auto e = calibrate_id(m, id, cfg, ws);
    if (e.stage == Stage::calibrated) {
      std::printf("%s  occlusion %.4f  magnification %.4f\n", id.c_str(), *e.occlusion_score, *e.magnification);
    } else {
      std::cerr << "failed: " << id << ": " << e.error << "\n";
      status = 1;
    }
  }
  m.compact();
  return status;
}

int run_stats(const Globals& g, bool as_json) {
  const Manifest m(Workspace(g.workspace).manifest_path());
  const auto r = stage_report(m.entries());
  if (as_json) std::cout << to_json(r).dump(2) << "\n";
  else std::cout << format_stage_report(r);
  return 0;
}

int run_split(const Globals& g, std::uint64_t seed, double fraction) {
  Manifest m(Workspace(g.workspace).manifest_path());
  const auto r = stats_and_split(m, seed, fraction);
  std::cout << "train " << r.split.train.size() << ", test " << r.split.test.size() << " (seed " << seed << ")\n";
  return 0;
}

int run_degrade(const Globals& g, int factor, const std::string& input, const std::string& output,
                const std::string& out_dir) {
  if (!input.empty()) {
    if (output.empty()) throw Error(ErrorCode::validation, "--input needs --output");
    const auto d = degrade_theoretical(load_png(input), factor);
    write_png(d.output, output);
    std::cout << d.intermediate.width() << "x" << d.intermediate.height() << " -> " << d.output.width() << "x"
              << d.output.height() << "\n";
    return 0;
  }
  const Workspace ws(g.workspace);
  const Manifest m(ws.manifest_path());
  const fs::path dir = out_dir.empty() ? ws.root() / ("theoretical_x" + std::to_string(factor)) : fs::path(out_dir);
  std::size_t n = 0;
  for (const auto& e : m.entries()) {
    if (e.stage != Stage::accepted) continue;
    const auto d = degrade_theoretical(load_png(ws.resolve(e.paths.wide_cal)), factor);
    write_png(d.output, dir / (e.id + ".png"));
    ++n;
  }
  std::cout << "wrote " << n << " inputs to " << dir.string() << "\n";
  return 0;
}

int run_eval(const Globals& g, const std::string& protocol, const std::string& outputs, bool as_json) {
  const Workspace ws(g.workspace);
  const Manifest m(ws.manifest_path());
  const auto t = evaluate(outputs, m.entries(), protocol_from_string(protocol), ws);
  for (const auto& d : t.diagnostics) std::cerr << "note: " << d << "\n";
  if (as_json) std::cout << to_json(t).dump(2) << "\n";
  else std::cout << format_metrics_table(t);
  return 0;
}

int run_fuse(const Globals& g, const std::string& wide, const std::string& tele, const std::string& out,
             const std::string& confidence_out) {
  const PipelineConfig cfg = effective_config(g);
  const auto r = fuse(load_png(wide), load_png(tele), cfg.fusion, fs::path(tele).filename().string());
  write_png(r.fused, out);
  if (!confidence_out.empty()) write_png(to_u8(r.confidence), confidence_out);
  std::size_t covered = 0;
  for (auto v : r.aligned.coverage.data()) covered += v == kMaskValid;
  std::printf("coverage %.4f\n", double(covered) / double(r.aligned.coverage.pixel_count()));
  return 0;
}

AnnotationService* g_service = nullptr;

int run_serve(const Globals& g, const std::string& host, int port, const std::string& static_dir) {
  AnnotationService svc(Workspace(g.workspace), ServiceOptions{host, port, static_dir});
  g_service = &svc;
  std::signal(SIGINT, [](int) {
    if (g_service) g_service->stop();
  });
  std::cerr << "serving " << g.workspace << " on http://" << host << ":" << port << "\n";
  svc.run();
  g_service = nullptr;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Wide/telephoto dataset calibration and review tool"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("-w,--workspace", g.workspace, "Workspace directory (manifest and derived files)");
  app.add_option("-c,--config", g.config_path, "Pipeline config file (key = value)")->check(CLI::ExistingFile);
  app.add_option("-j,--workers", g.workers, "Calibration worker threads")->check(CLI::PositiveNumber);

  std::string ingest_dir;
  auto* ingest_cmd = app.add_subcommand("ingest", "Register capture folders holding wide.png, tele.png, gt.png");
  ingest_cmd->add_option("dir", ingest_dir, "Session directory")->required()->check(CLI::ExistingDirectory);

  std::vector<std::string> ids;
  bool all = false;
  auto* calib_cmd = app.add_subcommand("calibrate", "Calibrate ACQUIRED entries");
  calib_cmd->add_option("--id", ids, "Entry id (repeatable)");
  calib_cmd->add_flag("--all", all, "Every ACQUIRED entry (default)");

  bool stats_json = false;
  auto* stats_cmd = app.add_subcommand("stats", "Stage counts");
  stats_cmd->add_flag("--json", stats_json);

  std::uint64_t seed = kDefaultSeed;
  double train_frac = 0.728;
  auto* split_cmd = app.add_subcommand("split", "Seeded train/test split of ACCEPTED entries");
  split_cmd->add_option("--seed", seed, "Shuffle seed")->capture_default_str();
  split_cmd->add_option("--train-frac", train_frac, "Train fraction")->check(CLI::Range(0.0, 1.0))->capture_default_str();

  int factor = 4;
  std::string degrade_in, degrade_out, degrade_dir;
  auto* degrade_cmd = app.add_subcommand("degrade", "Theoretical-protocol inputs: bicubic down and back up");
  degrade_cmd->add_option("--factor", factor, "Scale factor")->check(CLI::Range(2, 64))->capture_default_str();
  degrade_cmd->add_option("--input", degrade_in, "Single image instead of the ACCEPTED wide_cal set");
  degrade_cmd->add_option("--output", degrade_out, "Output for --input");
  degrade_cmd->add_option("--out-dir", degrade_dir, "Output directory for the set");

  std::string protocol = "realistic", outputs;
  bool eval_json = false;
  auto* eval_cmd = app.add_subcommand("eval", "Score method outputs against gt_cal under the masks");
  eval_cmd->add_option("--protocol", protocol)->check(CLI::IsMember({"realistic", "theoretical"}))->capture_default_str();
  eval_cmd->add_option("--outputs", outputs, "Directory of <method>/<id>.png")->required();
  eval_cmd->add_flag("--json", eval_json);

  std::string fuse_w, fuse_t, fuse_out, fuse_conf;
  auto* fuse_cmd = app.add_subcommand("fuse", "Edge-gated detail transfer from tele into wide");
  fuse_cmd->add_option("--wide", fuse_w)->required()->check(CLI::ExistingFile);
  fuse_cmd->add_option("--tele", fuse_t)->required()->check(CLI::ExistingFile);
  fuse_cmd->add_option("--out", fuse_out)->required();
  fuse_cmd->add_option("--confidence", fuse_conf, "Also write the confidence map");

  std::string host = "127.0.0.1", static_dir;
  int port = 8080;
  auto* serve_cmd = app.add_subcommand("serve", "Annotation/review HTTP service");
  serve_cmd->add_option("--port", port)->check(CLI::Range(1, 65535))->capture_default_str();
  serve_cmd->add_option("--host", host)->capture_default_str();
  serve_cmd->add_option("--static", static_dir, "UI bundle served at /");

  auto* config_cmd = app.add_subcommand("config", "Print the effective configuration");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*ingest_cmd) return run_ingest(g, ingest_dir);
    if (*calib_cmd) return run_calibrate(g, ids, all);
    if (*stats_cmd) return run_stats(g, stats_json);
    if (*split_cmd) return run_split(g, seed, train_frac);
    if (*degrade_cmd) return run_degrade(g, factor, degrade_in, degrade_out, degrade_dir);
    if (*eval_cmd) return run_eval(g, protocol, outputs, eval_json);
    if (*fuse_cmd) return run_fuse(g, fuse_w, fuse_t, fuse_out, fuse_conf);
    if (*serve_cmd) return run_serve(g, host, port, static_dir);
    if (*config_cmd) {
      std::cout << config_to_text(effective_config(g));
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "error (" << to_string(e.code()) << "): " << e.what() << "\n";
    for (const auto& d : e.details()) std::cerr << "  " << d << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
