#include <gtest/gtest.h>

#include <array>
#include <cstdio>
#include <fstream>
#include <sys/wait.h>

#include "dualcal/pipeline.hpp"
#include "test_support.hpp"

using namespace dualcal;
namespace dt = dualcal::testing;
namespace fs = std::filesystem;

namespace {

struct Run {
  int status = -1;
  std::string out;  // stdout and stderr interleaved
};

Run cli(const std::string& args) {
  const std::string cmd = std::string(DUALCAL_CLI) + " " + args + " 2>&1";
  Run r;
  FILE* p = popen(cmd.c_str(), "r");
  if (!p) return r;
  std::array<char, 512> buf{};
  while (fgets(buf.data(), buf.size(), p)) r.out += buf.data();
  const int st = pclose(p);
  r.status = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
  return r;
}

}  // namespace

TEST(Cli, IngestCalibrateStatsSplit) {
  dt::TempDir tmp("cli");
  const fs::path session = tmp.path() / "session";
  for (int i = 0; i < 2; ++i) dt::write_capture(session / ("cap" + std::to_string(i)), dt::synthetic_triple(256, 80 + i));
  write_png(Raster(8, 8, 3), session / "broken" / "wide.png");
  std::ofstream(tmp.path() / "run.cfg") << "crop_width = 160\ncrop_height = 160\n";
  const std::string ws = "-w " + (tmp.path() / "ws").string();

  auto r = cli(ws + " ingest " + session.string());
  EXPECT_EQ(r.status, 0) << r.out;
  EXPECT_NE(r.out.find("ingested 2"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("broken: missing tele.png gt.png"), std::string::npos) << r.out;

  r = cli(ws + " -c " + (tmp.path() / "run.cfg").string() + " calibrate --all");
  EXPECT_EQ(r.status, 0) << r.out;
  EXPECT_NE(r.out.find("calibrated 2, failed 0"), std::string::npos) << r.out;

  r = cli(ws + " stats --json");
  EXPECT_EQ(r.status, 0) << r.out;
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_EQ(j["acquired"], 2);
  EXPECT_EQ(j["calibrated"], 2);

  r = cli(ws + " split --seed 5 --train-frac 0.5");
  EXPECT_EQ(r.status, 0) << r.out;
  EXPECT_NE(r.out.find("train 0, test 0"), std::string::npos);

  const Manifest m(tmp.path() / "ws" / "manifest.jsonl");
  ASSERT_EQ(m.size(), 2u);
  const auto e = m.entries()[0];
  EXPECT_EQ(load_png(tmp.path() / "ws" / e.paths.gt_cal).width(), 160);

  r = cli(ws + " degrade --factor 4 --input " + (tmp.path() / "ws" / e.paths.wide_cal).string() + " --output " +
          (tmp.path() / "deg.png").string());
  EXPECT_EQ(r.status, 0) << r.out;
  EXPECT_NE(r.out.find("40x40 -> 160x160"), std::string::npos) << r.out;
}

TEST(Cli, ErrorsAndConfig) {
  dt::TempDir tmp("cli_err");
  auto r = cli("config");
  EXPECT_EQ(r.status, 0);
  EXPECT_EQ(r.out, config_to_text(default_config()));
  std::ofstream(tmp.path() / "bad.cfg") << "crop_width = -4\n";
  r = cli("-c " + (tmp.path() / "bad.cfg").string() + " config");
  EXPECT_EQ(r.status, 1);
  EXPECT_NE(r.out.find("bad.cfg:1"), std::string::npos) << r.out;
  r = cli("-w " + tmp.path().string() + " eval --protocol realistic --outputs " + (tmp.path() / "nothing").string());
  EXPECT_EQ(r.status, 1);
  r = cli("eval --protocol sideways --outputs x");
  EXPECT_NE(r.status, 0);
  EXPECT_NE(cli("").status, 0);
}

TEST(Cli, Fuse) {
  dt::TempDir tmp("cli_fuse");
  const auto s = dt::synthetic_triple(256, 90);
  write_png(s.wide, tmp.path() / "w.png");
  write_png(s.tele, tmp.path() / "t.png");
  const auto r = cli("fuse --wide " + (tmp.path() / "w.png").string() + " --tele " + (tmp.path() / "t.png").string() +
                     " --out " + (tmp.path() / "f.png").string() + " --confidence " + (tmp.path() / "c.png").string());
  EXPECT_EQ(r.status, 0) << r.out;
  EXPECT_TRUE(load_png(tmp.path() / "f.png").same_shape(s.wide));
  EXPECT_EQ(load_png(tmp.path() / "c.png").channels(), 1);
}
