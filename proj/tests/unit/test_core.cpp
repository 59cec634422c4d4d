#include <gtest/gtest.h>

#include <set>

#include "faceoff/core.hpp"

using namespace faceoff;

namespace {

RawConfig with_dirs(RawConfig raw = {}) {
  raw.emplace("data.domain_a_dir", "a");
  raw.emplace("data.domain_b_dir", "b");
  return raw;
}

}  // namespace

TEST(Config, DefaultsAreTheBaseline) {
  const auto cfg = validate_config(with_dirs());
  EXPECT_EQ(cfg.gan_mode, GanMode::lsgan);
  EXPECT_EQ(cfg.generator_arch, GeneratorArch::resnet);
  EXPECT_EQ(cfg.disc_layers_primary, 3);
  EXPECT_FALSE(cfg.dual_discriminator);
  EXPECT_DOUBLE_EQ(cfg.cycle_weight, 10.0);
  EXPECT_DOUBLE_EQ(cfg.ssim_weight, 0.0);
  EXPECT_EQ(cfg.mask_mode, MaskMode::off);
  EXPECT_DOUBLE_EQ(cfg.wgan.clip_value, 0.01);
  EXPECT_EQ(cfg.wgan.n_critic, 5);
  EXPECT_DOUBLE_EQ(cfg.wgan.lr, 5e-5);
  EXPECT_DOUBLE_EQ(cfg.lsgan.lr, 2e-4);
  EXPECT_EQ(cfg.ssim.scales, 3);
  EXPECT_EQ(cfg.data.crop, 256);
  EXPECT_EQ(cfg.data.resize, 286);
}

TEST(Config, ParsesTextWithCommentsAndQuotes) {
  const auto raw = parse_config_text("# comment\ngan_mode = wgan\n\ndata.domain_a_dir = \"my dir\"  \n");
  ASSERT_EQ(raw.size(), 2u);
  EXPECT_EQ(raw.at("gan_mode"), "wgan");
  EXPECT_EQ(raw.at("data.domain_a_dir"), "my dir");
}

TEST(Config, RejectsDuplicateAndMalformedLines) {
  EXPECT_THROW(parse_config_text("seed=1\nseed=2\n"), ConfigError);
  EXPECT_THROW(parse_config_text("just words\n"), ConfigError);
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
  EXPECT_THROW(validate_config(with_dirs({{"gan_mdoe", "wgan"}})), ConfigError);
  EXPECT_THROW(validate_config(with_dirs({{"gan_mode", "hinge"}})), ConfigError);
  EXPECT_THROW(validate_config(with_dirs({{"seed", "x"}})), ConfigError);
  EXPECT_THROW(validate_config(with_dirs({{"cycle_weight", "1.5e"}})), ConfigError);
  EXPECT_THROW(validate_config(with_dirs({{"train.deterministic", "maybe"}})), ConfigError);
}

TEST(Config, EnforcesConsistency) {
  EXPECT_THROW(validate_config(with_dirs({{"disc_layers_primary", "4"}})), ConfigError);
  EXPECT_THROW(validate_config(with_dirs({{"disc_mix_lambda", "1.5"}})), ConfigError);
  EXPECT_THROW(validate_config(with_dirs({{"wgan.clip_value", "0"}})), ConfigError);
  EXPECT_THROW(validate_config(with_dirs({{"mask_mode", "weight"}})), ConfigError);
  EXPECT_THROW(validate_config(with_dirs({{"data.crop", "300"}})), ConfigError);
  EXPECT_THROW(validate_config(with_dirs({{"ssim_weight", "-1"}})), ConfigError);
  EXPECT_THROW(validate_config(with_dirs({{"ssim.window_size", "4"}})), ConfigError);
  EXPECT_THROW(validate_config(with_dirs({{"batch_size", "0"}})), ConfigError);
  EXPECT_NO_THROW(validate_config(
      with_dirs({{"mask_mode", "weight"}, {"data.mask_a_dir", "ma"}, {"data.mask_b_dir", "mb"}})));
}

TEST(Config, OverridesReplaceValues) {
  auto raw = with_dirs();
  apply_override(raw, "seed=7");
  apply_override(raw, "seed = 9");
  EXPECT_EQ(validate_config(raw).seed, 9u);
  EXPECT_THROW(apply_override(raw, "noequals"), ConfigError);
}

TEST(Config, SerializationRoundTrips) {
  auto raw = with_dirs({{"gan_mode", "wgan"},
                        {"dual_discriminator", "true"},
                        {"disc_mix_lambda", "0.3"},
                        {"lsgan.adam_betas", "0.9,0.99"},
                        {"ssim_weight", "0.84"},
                        {"ssim.window", "uniform"},
                        {"seed", "123456789"}});
  const auto cfg = validate_config(raw);
  const auto again = validate_config(parse_config_text(serialize_config(cfg)));
  EXPECT_EQ(cfg, again);
  EXPECT_EQ(to_raw(cfg).size(), config_keys().size());
}

TEST(Config, KeysAreUnique) {
  const auto& keys = config_keys();
  EXPECT_EQ(std::set<std::string>(keys.begin(), keys.end()).size(), keys.size());
}

TEST(Format, ShortestRoundTrip) {
  for (double v : {0.1, 1e-5, 5e-5, 0.0448, 1.0 / 3.0, 12345.678, -2.5}) {
    EXPECT_EQ(std::stod(format_double(v)), v);
  }
  EXPECT_EQ(format_double(0.5), "0.5");
}

TEST(Rng, SameSeedSameStream) {
  Rng a(42), b(42), c(43);
  bool differs = false;
  for (int i = 0; i < 100; ++i) {
    const auto x = a.next();
    EXPECT_EQ(x, b.next());
    differs |= x != c.next();
  }
  EXPECT_TRUE(differs);
}

TEST(Rng, UniformIntCoversRangeInclusive) {
  Rng r(1);
  std::set<int> seen;
  for (int i = 0; i < 2000; ++i) {
    const int v = r.uniform_int(3, 7);
    ASSERT_GE(v, 3);
    ASSERT_LE(v, 7);
    seen.insert(v);
  }
  EXPECT_EQ(seen.size(), 5u);
  for (int i = 0; i < 100; ++i) {
    const double u = r.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
  }
}

TEST(Rng, SubstreamsAreDistinctAndReproducible) {
  EXPECT_EQ(Rng::substream(1, 2, 3).next(), Rng::substream(1, 2, 3).next());
  EXPECT_NE(Rng::substream(1, 2, 3).next(), Rng::substream(1, 2, 4).next());
  EXPECT_NE(Rng::substream(1, 2, 3).next(), Rng::substream(1, 1, 3).next());
  EXPECT_NE(Rng::substream(1, 2, 3).next(), Rng::substream(2, 2, 3).next());
}

TEST(Tensors, ImageTensorValidatesShapeAndRange) {
  EXPECT_NO_THROW(ImageTensor(torch::zeros({2, 3, 4, 4})));
  EXPECT_THROW(ImageTensor(torch::zeros({3, 4, 4})), Error);
  EXPECT_THROW(ImageTensor(torch::zeros({1, 1, 4, 4})), Error);
  EXPECT_THROW(ImageTensor(torch::full({1, 3, 4, 4}, 1.5)), Error);
}

TEST(Tensors, MaskTensorMustBeBinaryAndAligned) {
  auto m = torch::zeros({1, 1, 4, 4});
  m[0][0][1][1] = 1;
  MaskTensor mask(m);
  EXPECT_NO_THROW(mask.check_aligned(torch::zeros({1, 3, 4, 4})));
  EXPECT_THROW(mask.check_aligned(torch::zeros({1, 3, 4, 5})), Error);
  EXPECT_THROW(MaskTensor(torch::full({1, 1, 4, 4}, 0.5)), Error);
  EXPECT_THROW(MaskTensor(torch::zeros({1, 3, 4, 4})), Error);
}
