#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include <opencv2/imgcodecs.hpp>

#include "faceoff/cli.hpp"
#include "faceoff/data.hpp"
#include "support/fixtures.hpp"

using namespace faceoff;
using namespace faceoff::cli;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code;
  std::string out, err;
};

Outcome run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = dispatch(args, out, err);
  return {code, out.str(), err.str()};
}

void write_text(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

}  // namespace

TEST(Cli, HelpAndUsageErrors) {
  EXPECT_EQ(run({"--help"}).code, kExitOk);
  EXPECT_EQ(run({}).code, kExitUsage);
  EXPECT_EQ(run({"bogus"}).code, kExitUsage);
  EXPECT_EQ(run({"infer", "--checkpoint", "x"}).code, kExitUsage);
  EXPECT_EQ(run({"infer", "--checkpoint", "x", "--frames", "f", "--out", "o", "--direction", "up"}).code, kExitUsage);
  EXPECT_EQ(run({"make-video", "--frames", "f", "--out", "o", "--fps", "-1"}).code, kExitUsage);
  EXPECT_EQ(run({"gen-masks", "--landmarks", "l", "--out", "o", "--size", "32"}).code, kExitUsage);
}

TEST(Cli, ShowConfigAppliesOverridesInOrder) {
  const auto dir = testkit::fresh_dir("cli_cfg");
  write_text(dir / "c.cfg", "gan_mode = wgan\nseed = 4\n");
  auto r = run({"show-config", "--config", (dir / "c.cfg").string(), "--set", "seed=5", "--set", "cycle_weight=3",
                "--out", "elsewhere"});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_NE(r.out.find("gan_mode = wgan"), std::string::npos);
  EXPECT_NE(r.out.find("seed = 5"), std::string::npos);
  EXPECT_NE(r.out.find("cycle_weight = 3"), std::string::npos);
  EXPECT_NE(r.out.find("train.out_dir = elsewhere"), std::string::npos);
  EXPECT_EQ(run({"show-config", "--set", "nonsense=1"}).code, kExitUsage);
  EXPECT_EQ(run({"show-config", "--config", (dir / "missing.cfg").string()}).code, kExitUsage);
  fs::remove_all(dir);
}

TEST(Cli, RuntimeFailuresExitOne) {
  auto r = run({"infer", "--checkpoint", "/nonexistent.bin", "--frames", "f", "--out", "o"});
  EXPECT_EQ(r.code, kExitFailure);
  EXPECT_FALSE(r.err.empty());
}

TEST(Cli, TrainInferAndPlotEndToEnd) {
  const auto dir = testkit::fresh_dir("cli_e2e");
  const auto cfg = testkit::tiny_run(dir);
  write_text(dir / "run.cfg", serialize_config(cfg));
  auto t = run({"train", "--config", (dir / "run.cfg").string(), "--set", "epochs=1"});
  ASSERT_EQ(t.code, kExitOk) << t.err;
  const auto ckpt = fs::path(cfg.train.out_dir) / "ckpt_latest.bin";
  ASSERT_TRUE(fs::exists(ckpt));

  auto i = run({"infer", "--checkpoint", ckpt.string(), "--frames", cfg.data.domain_a_dir, "--direction", "a2b",
                "--out", (dir / "translated").string()});
  ASSERT_EQ(i.code, kExitOk) << i.err;
  EXPECT_EQ(data::list_frames(dir / "translated").size(), 4u);

  const auto csv = fs::path(cfg.train.out_dir) / "losses.csv";
  auto p = run({"plot-losses", csv.string()});
  ASSERT_EQ(p.code, kExitOk) << p.err;
  EXPECT_TRUE(fs::exists(fs::path(cfg.train.out_dir) / "losses.png"));
  EXPECT_NE(p.out.find("Cycle-consistency Loss"), std::string::npos);
  fs::remove_all(dir);
}

TEST(LossLog, ReadsColumnsInAnyOrder) {
  const auto dir = testkit::fresh_dir("losslog");
  write_text(dir / "l.csv", "loss_cyc,step,epoch,loss_d,loss_g\n0.5,1,1,0.2,0.3\n0.25,2,1,0.1,0.4\n");
  auto log = read_loss_log(dir / "l.csv");
  ASSERT_EQ(log.rows(), 2u);
  EXPECT_DOUBLE_EQ(log.loss_cyc[1], 0.25);
  EXPECT_DOUBLE_EQ(log.step[1], 2);
  EXPECT_DOUBLE_EQ(log.loss_g[0], 0.3);
  fs::remove_all(dir);
}

TEST(LossLog, RejectsMalformedFiles) {
  const auto dir = testkit::fresh_dir("losslog_bad");
  write_text(dir / "empty.csv", "");
  write_text(dir / "nocol.csv", "step,epoch,loss_g,loss_d\n1,1,1,1\n");
  write_text(dir / "short.csv", "step,epoch,loss_g,loss_d,loss_cyc\n1,1,1,1\n");
  write_text(dir / "nan.csv", "step,epoch,loss_g,loss_d,loss_cyc\n1,1,x,1,1\n");
  write_text(dir / "norows.csv", "step,epoch,loss_g,loss_d,loss_cyc\n");
  for (const char* f : {"empty.csv", "nocol.csv", "short.csv", "nan.csv", "norows.csv", "absent.csv"}) {
    EXPECT_THROW(read_loss_log(dir / f), Error) << f;
  }
  EXPECT_EQ(run({"plot-losses", (dir / "nocol.csv").string()}).code, kExitFailure);
  fs::remove_all(dir);
}

TEST(Plot, SummarizesFinalEpochAndWritesBothFormats) {
  const auto dir = testkit::fresh_dir("plot");
  write_text(dir / "l.csv",
             "step,epoch,loss_g,loss_d,loss_cyc\n1,1,1,2,3\n2,1,1,2,3\n3,2,0.5,1,2\n4,2,1.5,3,4\n");
  auto s = plot_losses(dir / "l.csv", dir / "l.png");
  EXPECT_EQ(s.rows, 4u);
  ASSERT_EQ(s.series.size(), 3u);
  EXPECT_EQ(s.series[0].name, "Generator Loss");
  EXPECT_DOUBLE_EQ(s.series[0].final_epoch_mean, 1.0);
  EXPECT_DOUBLE_EQ(s.series[2].min, 2.0);
  EXPECT_DOUBLE_EQ(s.series[2].max, 4.0);
  auto png = cv::imread((dir / "l.png").string());
  EXPECT_FALSE(png.empty());
  EXPECT_GT(png.rows, png.cols / 2);
  plot_losses(dir / "l.csv", dir / "l.svg");
  std::ifstream svg(dir / "l.svg");
  std::string text((std::istreambuf_iterator<char>(svg)), {});
  EXPECT_NE(text.find("<svg"), std::string::npos);
  EXPECT_NE(text.find("Discriminator Loss"), std::string::npos);
  fs::remove_all(dir);
}

TEST(Cli, ExtractAndMasksCommands) {
  const auto dir = testkit::fresh_dir("cli_extract");
  testkit::write_shapes(dir / "src", testkit::Shape::square, 6, 48, 1);
  auto e = run({"extract", "--video", (dir / "src").string(), "--count", "3", "--out", (dir / "frames").string(),
                "--size", "32"});
  ASSERT_EQ(e.code, kExitOk) << e.err;
  EXPECT_EQ(data::list_frames(dir / "frames").size(), 3u);

  fs::create_directories(dir / "lm");
  write_text(dir / "lm" / "000000.json", R"({"points": [[2, 2], [30, 2], [16, 30]]})");
  auto m = run({"gen-masks", "--landmarks", (dir / "lm").string(), "--out", (dir / "masks").string(), "--size",
                "32x32"});
  ASSERT_EQ(m.code, kExitOk) << m.err;
  EXPECT_TRUE(fs::exists(dir / "masks" / "000000.png"));
  fs::remove_all(dir);
}
