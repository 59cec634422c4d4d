// Hand-computed values and boundary cases for each operation.

#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include <opencv2/imgcodecs.hpp>

#include "faceoff/cli.hpp"
#include "faceoff/trainer.hpp"
#include "faceoff/masks.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

using namespace faceoff;
namespace fs = std::filesystem;

namespace {

torch::Tensor full(std::vector<int64_t> shape, double v) { return torch::full(shape, v, torch::kDouble); }

std::string error_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const std::exception& e) {
    return e.what();
  }
  return "";
}

// Identity translation with one parameter so the generator step has a graph to differentiate.
class IdentityGenerator : public models::GeneratorImpl {
 public:
  IdentityGenerator() : GeneratorImpl(GeneratorArch::resnet) { p_ = register_parameter("p", torch::zeros({1})); }
  torch::Tensor forward(const torch::Tensor& x) override { return x + 0 * p_; }

 private:
  torch::Tensor p_;
};

}  // namespace

// --- config ----------------------------------------------------------------

TEST(ConfigValues, WganDefaultsToItsLearningRate) {
  auto cfg = validate_config({{"gan_mode", "wgan"}});
  EXPECT_DOUBLE_EQ(cfg.wgan.lr, 5e-5);
}

TEST(ConfigValues, EmptyConfigIsAllDefaults) {
  auto cfg = validate_config({});
  EXPECT_EQ(cfg, ExperimentConfig{});
  EXPECT_EQ(cfg.seed, 0u);
}

TEST(ConfigValues, MaskModeNamesTheMissingDirectory) {
  EXPECT_NE(error_of([] { validate_config({{"mask_mode", "weight"}}); }).find("mask directory required"),
            std::string::npos);
}

TEST(RngValues, SeededCropsRepeat) {
  Rng a = seeded_rng(7), b = seeded_rng(7);
  for (int i = 0; i < 20; ++i) {
    EXPECT_EQ(data::choose_crop(286, 286, 256, &a, true), data::choose_crop(286, 286, 256, &b, true));
  }
}

// --- losses ----------------------------------------------------------------

TEST(SsimValues, ConstantIdenticalImagesGiveUnitComponents) {
  auto cfg = losses::SsimConfig::canonical(1);
  auto x = full({1, 1, 16, 16}, 0.5);
  auto m = losses::ssim_components(x, x, cfg);
  for (const auto& t : {m.luminance, m.contrast, m.structure}) EXPECT_TRUE(torch::allclose(t, torch::ones_like(t)));
}

TEST(SsimValues, BlackVersusWhiteLuminance) {
  auto cfg = losses::SsimConfig::canonical(1);
  auto m = losses::ssim_components(full({1, 1, 11, 11}, 0), full({1, 1, 11, 11}, 1), cfg);
  EXPECT_NEAR(m.luminance.item<double>(), 1e-4 / (1 + 1e-4), 1e-12);
}

TEST(SsimValues, ComponentsMatchDirectSummationOnPatches) {
  torch::manual_seed(12);
  auto cfg = losses::SsimConfig::canonical(1);
  const auto w = testkit::naive_window(testkit::NaiveSsimParams{});
  const double c1 = cfg.c1(), c2 = cfg.c2(), c3 = cfg.c3();
  for (int trial = 0; trial < 10; ++trial) {
    auto x = torch::rand({1, 1, 11, 11}, torch::kDouble);
    auto y = (0.5 * x + 0.5 * torch::rand({1, 1, 11, 11}, torch::kDouble));
    auto m = losses::ssim_components(x, y, cfg);
    double mx = 0, my = 0, vx = 0, vy = 0, cov = 0;
    auto xa = x.accessor<double, 4>(), ya = y.accessor<double, 4>();
    for (int i = 0; i < 11; ++i)
      for (int j = 0; j < 11; ++j) {
        mx += w[i][j] * xa[0][0][i][j];
        my += w[i][j] * ya[0][0][i][j];
      }
    for (int i = 0; i < 11; ++i)
      for (int j = 0; j < 11; ++j) {
        vx += w[i][j] * std::pow(xa[0][0][i][j] - mx, 2);
        vy += w[i][j] * std::pow(ya[0][0][i][j] - my, 2);
        cov += w[i][j] * (xa[0][0][i][j] - mx) * (ya[0][0][i][j] - my);
      }
    const double sx = std::sqrt(vx), sy = std::sqrt(vy);
    EXPECT_NEAR(m.luminance.item<double>(), (2 * mx * my + c1) / (mx * mx + my * my + c1), 1e-6);
    EXPECT_NEAR(m.contrast.item<double>(), (2 * sx * sy + c2) / (vx + vy + c2), 1e-6);
    EXPECT_NEAR(m.structure.item<double>(), (cov + c3) / (sx * sy + c3), 1e-6);
  }
}

TEST(CycleValues, HandComputed) {
  auto x = torch::rand({1, 3, 4, 4}, torch::kDouble);
  EXPECT_EQ(losses::cycle_l1(x, x).item<double>(), 0.0);
  EXPECT_DOUBLE_EQ(losses::cycle_l1(full({1, 3, 4, 4}, -1), full({1, 3, 4, 4}, 1)).item<double>(), 2.0);
  auto a = torch::zeros({1, 1, 2, 2}, torch::kDouble);
  auto b = a.clone();
  b[0][0][0][0] = 1;
  EXPECT_DOUBLE_EQ(losses::cycle_l1(a, b).item<double>(), 0.25);
}

TEST(CycleValues, MaskedHandComputed) {
  auto x = torch::zeros({1, 1, 2, 2}, torch::kDouble);
  auto rec = torch::ones({1, 1, 2, 2}, torch::kDouble);
  auto mask = torch::zeros({1, 1, 2, 2}, torch::kDouble);
  mask[0][0][0][0] = 1;
  EXPECT_DOUBLE_EQ(losses::masked_cycle_loss(x, rec, mask, 2.0).item<double>(), 1.5);
}

TEST(GanValues, LsganTargets) {
  EXPECT_EQ(losses::lsgan_loss(full({1, 1, 4, 4}, 1), true).item<double>(), 0.0);
  EXPECT_EQ(losses::lsgan_loss(full({1, 1, 4, 4}, 0), true).item<double>(), 1.0);
  EXPECT_EQ(losses::lsgan_loss(full({1, 1, 4, 4}, 0.5), false).item<double>(), 0.25);
}

TEST(GanValues, WassersteinSubstitutions) {
  auto l = losses::wgan_losses(full({4}, 1), full({4}, 0));
  EXPECT_EQ(l.critic.item<double>(), -1.0);
  EXPECT_EQ(l.generator.item<double>(), 0.0);
  auto same = torch::rand({4}, torch::kDouble);
  EXPECT_EQ(losses::wgan_losses(same, same).critic.item<double>(), 0.0);
  EXPECT_EQ(losses::wgan_losses(same, full({4}, 2)).generator.item<double>(), -2.0);
}

TEST(GanValues, DualMixing) {
  EXPECT_DOUBLE_EQ(losses::dual_disc_gan_loss(0.2, 0.4, 0.5), 0.3);
  EXPECT_EQ(losses::dual_disc_gan_loss(0.37, 0.9, 1.0), 0.37);
  for (double lam : {0.0, 0.25, 0.6, 1.0}) EXPECT_DOUBLE_EQ(losses::dual_disc_gan_loss(0.37, 0.37, lam), 0.37);
}

TEST(ObjectiveValues, VanillaAndSsimTerms) {
  ExperimentConfig cfg;
  losses::LossBundle parts;
  parts.gan_g = torch::tensor(1.0);
  parts.cycle = torch::tensor(0.5);
  EXPECT_DOUBLE_EQ(losses::total_generator_objective(parts, cfg).item<double>(), 6.0);
  cfg.ssim_weight = 0.01;
  auto x = torch::rand({1, 3, 64, 64}) * 2 - 1;
  parts.ssim_term = losses::ssim_loss(x, x, losses::SsimConfig::canonical(3));
  EXPECT_NEAR(losses::total_generator_objective(parts, cfg).item<double>(), 6.0, 1e-8);
}

// --- models ----------------------------------------------------------------

TEST(ModelValues, DualMapsDifferAndOutputsAreLinear) {
  auto gen = models::make_init_generator(13);
  ExperimentConfig cfg;
  cfg.dual_discriminator = true;
  cfg.model.ndf = 8;
  auto d = models::build_domain_discriminator(cfg, gen);
  torch::manual_seed(13);
  auto x = torch::rand({1, 3, 256, 256}) * 2 - 1;
  auto [s, deep] = models::dual_forward(d, x);
  EXPECT_EQ(s.sizes(), (std::vector<int64_t>{1, 1, 30, 30}));
  EXPECT_EQ(deep.sizes(), (std::vector<int64_t>{1, 1, 6, 6}));
  EXPECT_FALSE(torch::allclose(s.mean(), deep.mean()));
  // Linear heads: scaled-up weights push outputs outside (0, 1).
  auto single = models::build_discriminator(3, gen, 8);
  for (auto& p : single->parameters()) p.data().mul_(4);
  auto out = single->forward(x);
  EXPECT_TRUE((out < 0).any().item<bool>() || (out > 1).any().item<bool>());
}

TEST(ModelValues, ClippingClampsOnlyOutliers) {
  torch::nn::Linear lin(2, 2);
  {
    torch::NoGradGuard g;
    lin->weight.copy_(torch::tensor({{0.02, -0.5}, {0.004, -0.01}}));
    lin->bias.copy_(torch::tensor({0.001, 0.0}));
  }
  models::clip_parameters(*lin, 0.01);
  EXPECT_FLOAT_EQ(lin->weight[0][0].item<float>(), 0.01f);
  EXPECT_FLOAT_EQ(lin->weight[0][1].item<float>(), -0.01f);
  EXPECT_EQ(lin->weight[1][0].item<float>(), 0.004f);
  EXPECT_EQ(lin->weight[1][1].item<float>(), -0.01f);
  EXPECT_EQ(lin->bias[0].item<float>(), 0.001f);
}

// --- masks -----------------------------------------------------------------

TEST(MaskValues, FullImageCornersCoverEverything) {
  auto m = masks::landmarks_to_mask({{{0, 0}, {8, 0}, {8, 8}, {0, 8}}, 8, 8});
  EXPECT_EQ(m.tensor().sum().item<double>(), 64.0);
}

TEST(MaskValues, TriangleMatchesPerPixelOracle) {
  auto m = masks::landmarks_to_mask({{{0, 0}, {0, 4}, {4, 0}}, 8, 8}).tensor();
  std::vector<std::pair<double, double>> tri = {{0, 0}, {0, 4}, {4, 0}};
  int inside = 0;
  for (int r = 0; r < 8; ++r)
    for (int c = 0; c < 8; ++c) {
      const bool in = testkit::in_some_triangle(tri, c + 0.5, r + 0.5);
      inside += in;
      EXPECT_EQ(m[0][0][r][c].item<float>() == 1.0f, in);
    }
  EXPECT_EQ(m.sum().item<double>(), inside);
  EXPECT_EQ(inside, 10);
}

TEST(MaskValues, CollinearIsDegenerate) {
  EXPECT_NE(error_of([] { masks::landmarks_to_mask({{{1, 1}, {2, 2}, {3, 3}}, 8, 8}); }).find("degenerate landmark set"),
            std::string::npos);
}

TEST(MaskValues, FilesLoadAndCropInLockstep) {
  const auto dir = testkit::fresh_dir("mask_lockstep");
  cv::imwrite((dir / "white.png").string(), cv::Mat(6, 6, CV_8UC1, cv::Scalar(255)));
  EXPECT_EQ(masks::load_mask(dir / "white.png").tensor().sum().item<double>(), 36.0);
  cv::Mat gray(6, 6, CV_8UC1, cv::Scalar(0));
  gray.at<uchar>(2, 2) = 128;
  cv::imwrite((dir / "gray.png").string(), gray);
  EXPECT_NE(error_of([&] { masks::load_mask(dir / "gray.png"); }).find("non-binary mask"), std::string::npos);

  // 286x286 frame and mask where the mask marks exactly the pixels whose red channel is 255.
  cv::Mat frame(286, 286, CV_8UC3, cv::Scalar(0, 0, 0)), mask(286, 286, CV_8UC1, cv::Scalar(0));
  cv::Mat noise(286, 286, CV_8UC1);
  cv::randu(noise, 0, 2);
  frame.forEach<cv::Vec3b>([&](cv::Vec3b& px, const int* pos) { px[2] = noise.at<uchar>(pos[0], pos[1]) * 255; });
  mask.setTo(255, noise);
  fs::create_directories(dir / "frames");
  fs::create_directories(dir / "masks");
  cv::imwrite((dir / "frames" / "0001.png").string(), frame);
  cv::imwrite((dir / "masks" / "0001.png").string(), mask);
  data::FrameStore store(data::open_dataset(dir / "frames", dir / "masks"), true);
  Rng rng(14);
  for (int i = 0; i < 5; ++i) {
    auto s = data::take_sample(store, 0, &rng, true, 256);
    EXPECT_EQ(s.mask.sizes(), (std::vector<int64_t>{1, 1, 256, 256}));
    EXPECT_TRUE(torch::equal(s.mask, (s.image.slice(1, 0, 1) > 0).to(torch::kFloat)));
  }
  fs::remove_all(dir);
}

TEST(MaskValues, CropModeCases) {
  auto img = torch::rand({1, 3, 4, 4}) * 2 - 1;
  EXPECT_TRUE(torch::equal(masks::apply_crop_mode(img, MaskTensor(torch::ones({1, 1, 4, 4}))), img));
  EXPECT_TRUE(torch::equal(masks::apply_crop_mode(img, MaskTensor(torch::zeros({1, 1, 4, 4}))),
                           torch::full_like(img, -1)));
  auto half = torch::zeros({1, 1, 4, 4});
  half.slice(3, 0, 2).fill_(1);
  auto out = masks::apply_crop_mode(img, MaskTensor(half));
  EXPECT_TRUE(torch::equal(out.slice(3, 0, 2), img.slice(3, 0, 2)));
  EXPECT_TRUE(torch::equal(out.slice(3, 2, 4), torch::full({1, 3, 4, 2}, -1.0)));
}

// --- data ------------------------------------------------------------------

TEST(DataValues, ExtractBoundaries) {
  const auto dir = testkit::fresh_dir("extract_bounds");
  testkit::write_shapes(dir / "src", testkit::Shape::square, 3, 32, 1);
  EXPECT_EQ(data::extract_frames(dir / "src", 0, dir / "none", 32), 0);
  EXPECT_TRUE(!fs::exists(dir / "none") || fs::is_empty(dir / "none"));
  EXPECT_NE(error_of([&] { data::extract_frames(dir / "src", 5, dir / "x", 32); }).find("only 3"), std::string::npos);
  fs::remove_all(dir);
}

TEST(DataValues, SplitWithEmptyTest) {
  const auto dir = testkit::fresh_dir("split_all");
  testkit::write_shapes(dir, testkit::Shape::circle, 10, 16, 1);
  auto [train, test] = data::split_dataset(data::open_dataset(dir), 10);
  EXPECT_EQ(train.size(), 10u);
  EXPECT_TRUE(test.empty());
  fs::remove_all(dir);
}

TEST(DataValues, WhiteFrameNormalizesToOne) {
  auto p = data::preprocess(cv::Mat(286, 286, CV_8UC3, cv::Scalar(255, 255, 255)), nullptr, false, 256);
  EXPECT_TRUE(torch::equal(p.image.tensor(), torch::ones({1, 3, 256, 256})));
  Rng a(1), b(1);
  EXPECT_EQ(data::preprocess(cv::Mat(286, 286, CV_8UC3), &a, true).offset,
            data::preprocess(cv::Mat(286, 286, CV_8UC3), &b, true).offset);
}

TEST(DataValues, SamplingIsUniformAndIndependent) {
  Rng rng(15);
  auto [a1, b1] = data::sample_unaligned_indices(1, 1, rng);
  EXPECT_EQ(a1, 0u);
  EXPECT_EQ(b1, 0u);
  const int n = 10000;
  std::vector<int> freq(4);
  std::vector<std::vector<int>> joint(4, std::vector<int>(5));
  for (int i = 0; i < n; ++i) {
    auto [a, b] = data::sample_unaligned_indices(4, 5, rng);
    ++freq[a];
    ++joint[a][b];
  }
  const double sd = std::sqrt(n * 0.25 * 0.75);
  for (int f : freq) EXPECT_LT(std::abs(f - n / 4.0), 3 * sd);
  // Chi-square independence test, 12 degrees of freedom; 0.1% critical value 32.9.
  std::vector<double> row(4), col(5);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 5; ++j) {
      row[i] += joint[i][j];
      col[j] += joint[i][j];
    }
  double chi2 = 0;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 5; ++j) {
      const double e = row[i] * col[j] / n;
      chi2 += (joint[i][j] - e) * (joint[i][j] - e) / e;
    }
  EXPECT_LT(chi2, 32.9);
}

// --- trainer ---------------------------------------------------------------

namespace {

ExperimentConfig small_step_config() {
  ExperimentConfig cfg;
  cfg.data.crop = 32;
  cfg.model.ngf = 4;
  cfg.model.ndf = 4;
  cfg.model.n_res_blocks = 1;
  return cfg;
}

trainer::Batch seeded_batch(int seed) {
  torch::manual_seed(seed);
  trainer::Batch b;
  b.a = torch::rand({1, 3, 32, 32}) * 2 - 1;
  b.b = torch::rand({1, 3, 32, 32}) * 2 - 1;
  return b;
}

}  // namespace

TEST(TrainerValues, IdenticalStepsFromIdenticalSeeds) {
  auto s1 = trainer::init_state(small_step_config());
  auto s2 = trainer::init_state(small_step_config());
  for (int i = 0; i < 2; ++i) {
    EXPECT_EQ(trainer::train_step_lsgan(s1, seeded_batch(i)).record,
              trainer::train_step_lsgan(s2, seeded_batch(i)).record);
  }
}

TEST(TrainerValues, PerfectGeneratorsHaveNoCycleLoss) {
  auto s = trainer::init_state(small_step_config());
  s.g_ab = std::make_shared<IdentityGenerator>();
  s.g_ba = std::make_shared<IdentityGenerator>();
  EXPECT_EQ(trainer::train_step_lsgan(s, seeded_batch(1)).record.loss_cyc, 0.0);
}

TEST(TrainerValues, SingleCriticStepAlternates) {
  auto cfg = small_step_config();
  cfg.gan_mode = GanMode::wgan;
  cfg.wgan.n_critic = 1;
  auto s = trainer::init_state(cfg);
  const auto before = trainer::to_checkpoint(s);
  int draws = 0, critic = 0;
  trainer::StepHooks hooks;
  hooks.after_critic_step = [&](const trainer::TrainState&) { ++critic; };
  auto r = trainer::train_step(s, [&] { return seeded_batch(draws++); }, hooks);
  EXPECT_EQ(critic, 1);
  EXPECT_EQ(draws, 2);

  // Critic loss recomputed on the networks as they were before the update.
  auto ref = trainer::restore_state(before);
  torch::NoGradGuard no_grad;
  auto b0 = seeded_batch(0);
  auto fake_b = ref.g_ab->forward(b0.a);
  auto fake_a = ref.g_ba->forward(b0.b);
  const double expected =
      losses::wgan_losses(ref.d_b->forward(b0.b)[0], ref.d_b->forward(fake_b)[0]).critic.item<double>() +
      losses::wgan_losses(ref.d_a->forward(b0.a)[0], ref.d_a->forward(fake_a)[0]).critic.item<double>();
  EXPECT_NEAR(r.record.loss_d, expected, 1e-7);
}

TEST(TrainerValues, VideoDurationAndSizeCheck) {
  const auto dir = testkit::fresh_dir("video_values");
  setenv("FACEOFF_FFENCODE", "touch {output}", 1);
  testkit::write_shapes(dir / "sixty", testkit::Shape::circle, 60, 16, 1);
  EXPECT_DOUBLE_EQ(trainer::assemble_video(dir / "sixty", 30, dir / "a.mp4"), 2.0);
  testkit::write_shapes(dir / "one", testkit::Shape::circle, 1, 16, 1);
  EXPECT_DOUBLE_EQ(trainer::assemble_video(dir / "one", 30, dir / "b.mp4"), 1.0 / 30);
  fs::create_directories(dir / "mixed");
  cv::imwrite((dir / "mixed" / "0.png").string(), cv::Mat(256, 256, CV_8UC3, cv::Scalar(0)));
  cv::imwrite((dir / "mixed" / "1.png").string(), cv::Mat(286, 286, CV_8UC3, cv::Scalar(0)));
  EXPECT_THROW(trainer::assemble_video(dir / "mixed", 30, dir / "c.mp4"), Error);
  EXPECT_FALSE(fs::exists(dir / "c.mp4"));
  unsetenv("FACEOFF_FFENCODE");
  fs::remove_all(dir);
}

// --- cli -------------------------------------------------------------------

TEST(CliValues, TrainWithSsimOverride) {
  const auto dir = testkit::fresh_dir("cli_ssim");
  auto cfg = testkit::tiny_run(dir, 2, 64);
  cfg.epochs = 1;
  std::ofstream(dir / "exp.cfg") << serialize_config(cfg);
  std::ostringstream out, err;
  EXPECT_EQ(cli::dispatch({"train", "--config", (dir / "exp.cfg").string(), "--set", "ssim_weight=0.01"}, out, err),
            cli::kExitOk)
      << err.str();
  EXPECT_EQ(models::load_checkpoint(dir / "run" / "ckpt_latest.bin").config.ssim_weight, 0.01);
  fs::remove_all(dir);
}

TEST(PlotValues, SingleRowAndDecreasingCycle) {
  const auto dir = testkit::fresh_dir("plot_values");
  std::ofstream(dir / "one.csv") << "step,epoch,loss_g,loss_d,loss_cyc\n1,0,0.5,0.25,2\n";
  auto one = cli::plot_losses(dir / "one.csv", dir / "one.png");
  EXPECT_EQ(one.rows, 1u);
  EXPECT_TRUE(fs::exists(dir / "one.png"));
  {
    std::ofstream f(dir / "dec.csv");
    f << "step,epoch,loss_g,loss_d,loss_cyc\n";
    for (int s = 1; s <= 10; ++s) f << s << "," << (s - 1) / 5 << ",1,1," << 1.0 / s << "\n";
  }
  auto dec = cli::plot_losses(dir / "dec.csv", dir / "dec.svg");
  EXPECT_DOUBLE_EQ(dec.series[2].min, 0.1);
  std::ofstream(dir / "nocyc.csv") << "step,epoch,loss_g,loss_d\n1,0,1,1\n";
  EXPECT_NE(error_of([&] { cli::plot_losses(dir / "nocyc.csv", dir / "x.png"); }).find("loss_cyc"),
            std::string::npos);
  fs::remove_all(dir);
}
