#include "faceoff/losses.hpp"

#include <cmath>
#include <numeric>

namespace faceoff::losses {

namespace {

// Wang et al. five-scale exponents, finest scale first.
constexpr double kCanonicalWeights[] = {0.0448, 0.2856, 0.3001, 0.2363, 0.1333};

// Below this variance a window is treated as flat: sigma = 0 with zero gradient.
constexpr double kFlatVariance = 1e-12;
constexpr double kStructureFloor = 1e-6;

void check_same_shape(const torch::Tensor& a, const torch::Tensor& b, const char* what) {
  if (!a.sizes().equals(b.sizes())) {
    throw Error(std::string(what) + ": shape mismatch " + c10::str(a.sizes()) + " vs " +
                c10::str(b.sizes()));
  }
}

torch::Tensor safe_sqrt(const torch::Tensor& var) {
  auto flat = var <= kFlatVariance;
  return torch::where(flat, torch::zeros_like(var), var.clamp_min(kFlatVariance).sqrt());
}

// Valid-mode windowed mean of every channel using the separable window.
torch::Tensor window_filter(const torch::Tensor& t, const torch::Tensor& taps) {
  const auto channels = t.size(1);
  const auto k = taps.size(0);
  auto row = taps.view({1, 1, 1, k}).expand({channels, 1, 1, k});
  auto col = taps.view({1, 1, k, 1}).expand({channels, 1, k, 1});
  namespace F = torch::nn::functional;
  auto out = F::conv2d(t, row, F::Conv2dFuncOptions().groups(channels));
  return F::conv2d(out, col, F::Conv2dFuncOptions().groups(channels));
}

torch::Tensor window_taps(const SsimConfig& cfg, torch::ScalarType dtype) {
  const int k = cfg.window_size;
  std::vector<double> taps(k, 1.0);
  if (cfg.window == WindowKind::gaussian) {
    const double r = (k - 1) / 2.0;
    for (int i = 0; i < k; ++i) {
      const double d = i - r;
      taps[i] = std::exp(-(d * d) / (2.0 * cfg.sigma * cfg.sigma));
    }
  }
  const double total = std::accumulate(taps.begin(), taps.end(), 0.0);
  for (auto& t : taps) t /= total;
  return torch::tensor(taps, torch::kDouble).to(dtype);
}

struct WindowStats {
  torch::Tensor mu_x, mu_y, var_x, var_y, cov_xy;
};

WindowStats window_stats(const torch::Tensor& x, const torch::Tensor& y, const SsimConfig& cfg) {
  const auto c = x.size(1);
  auto taps = window_taps(cfg, x.scalar_type()).to(x.device());
  auto stacked = torch::cat({x, y, x * x, y * y, x * y}, 1);
  auto filtered = window_filter(stacked, taps);
  auto parts = filtered.split(c, 1);
  WindowStats s;
  s.mu_x = parts[0];
  s.mu_y = parts[1];
  s.var_x = parts[2] - s.mu_x * s.mu_x;
  s.var_y = parts[3] - s.mu_y * s.mu_y;
  s.cov_xy = parts[4] - s.mu_x * s.mu_y;
  return s;
}

SsimMaps components_from_stats(const WindowStats& s, const SsimConfig& cfg) {
  const double c1 = cfg.c1();
  const double cc = cfg.contrast_constant();
  const double c3 = cfg.c3();
  auto sd_x = safe_sqrt(s.var_x);
  auto sd_y = safe_sqrt(s.var_y);
  SsimMaps m;
  m.luminance = (2.0 * s.mu_x * s.mu_y + c1) / (s.mu_x * s.mu_x + s.mu_y * s.mu_y + c1);
  m.contrast = (2.0 * sd_x * sd_y + cc) / (s.var_x.clamp_min(0) + s.var_y.clamp_min(0) + cc);
  m.structure = (s.cov_xy + c3) / (sd_x * sd_y + c3);
  return m;
}

void check_fits(const torch::Tensor& x, const SsimConfig& cfg, int scale) {
  if (x.size(2) < cfg.window_size || x.size(3) < cfg.window_size) {
    throw Error("image too small for " + std::to_string(cfg.scales) + " MS-SSIM scales: scale " +
                std::to_string(scale) + " is " + std::to_string(x.size(2)) + "x" +
                std::to_string(x.size(3)) + ", window " + std::to_string(cfg.window_size));
  }
}

// Per-image mean over channel and spatial dims -> shape (N).
torch::Tensor image_mean(const torch::Tensor& map) { return map.mean({1, 2, 3}); }

}  // namespace

SsimConfig SsimConfig::canonical(int scales) {
  if (scales < 1 || scales > 5) throw Error("canonical MS-SSIM supports 1..5 scales");
  SsimConfig cfg;
  cfg.scales = scales;
  double total = 0.0;
  for (int j = 0; j < scales; ++j) total += kCanonicalWeights[j];
  for (int j = 0; j < scales; ++j) {
    cfg.beta.push_back(kCanonicalWeights[j] / total);
    cfg.gamma.push_back(kCanonicalWeights[j] / total);
  }
  cfg.alpha = cfg.beta.back();
  return cfg;
}

SsimConfig SsimConfig::from(const SsimParams& p) {
  SsimConfig cfg = canonical(std::min(p.scales, 5));
  if (p.scales > 5) {
    // Beyond five scales fall back to equal exponents.
    cfg.scales = p.scales;
    cfg.beta.assign(p.scales, 1.0 / p.scales);
    cfg.gamma = cfg.beta;
    cfg.alpha = cfg.beta.back();
  }
  cfg.window_size = p.window_size;
  cfg.sigma = p.sigma;
  cfg.window = p.window;
  cfg.k1 = p.k1;
  cfg.k2 = p.k2;
  cfg.dynamic_range = p.dynamic_range;
  cfg.literal_constants = p.literal_constants;
  return cfg;
}

void SsimConfig::validate() const {
  if (scales < 1) throw Error("MS-SSIM needs at least one scale");
  if (static_cast<int>(beta.size()) != scales || static_cast<int>(gamma.size()) != scales) {
    throw Error("MS-SSIM exponent vectors must have one entry per scale");
  }
  if (window_size < 1 || window_size % 2 == 0) throw Error("MS-SSIM window size must be odd");
  if (alpha <= 0.0) throw Error("MS-SSIM exponents must be positive");
  for (int j = 0; j < scales; ++j) {
    if (beta[j] <= 0.0 || gamma[j] <= 0.0) throw Error("MS-SSIM exponents must be positive");
  }
}

torch::Tensor ssim_window(const SsimConfig& cfg, torch::ScalarType dtype) {
  auto taps = window_taps(cfg, dtype);
  return torch::outer(taps, taps);
}

SsimMaps ssim_components(const torch::Tensor& x, const torch::Tensor& y, const SsimConfig& cfg) {
  check_same_shape(x, y, "ssim_components");
  if (x.dim() != 4) throw Error("ssim_components expects (N, C, H, W) inputs");
  if (cfg.window_size < 1 || cfg.window_size % 2 == 0) throw Error("SSIM window size must be odd");
  if (x.size(2) < cfg.window_size || x.size(3) < cfg.window_size) {
    throw Error("SSIM window larger than image");
  }
  return components_from_stats(window_stats(x, y, cfg), cfg);
}

torch::Tensor ms_ssim(const torch::Tensor& x, const torch::Tensor& y, const SsimConfig& cfg) {
  check_same_shape(x, y, "ms_ssim");
  if (x.dim() != 4) throw Error("ms_ssim expects (N, C, H, W) inputs");
  cfg.validate();

  auto xs = x;
  auto ys = y;
  torch::Tensor product;
  for (int j = 0; j < cfg.scales; ++j) {
    if (j > 0) {
      xs = torch::avg_pool2d(xs, 2);
      ys = torch::avg_pool2d(ys, 2);
    }
    check_fits(xs, cfg, j + 1);
    auto maps = components_from_stats(window_stats(xs, ys, cfg), cfg);
    auto term = image_mean(maps.contrast).pow(cfg.beta[j]) *
                image_mean(maps.structure).clamp_min(kStructureFloor).pow(cfg.gamma[j]);
    if (j == cfg.scales - 1) term = term * image_mean(maps.luminance).pow(cfg.alpha);
    product = product.defined() ? product * term : term;
  }
  return product.mean();
}

torch::Tensor to_ssim_range(const torch::Tensor& img, const SsimConfig& cfg) {
  return (img + 1.0) * (0.5 * cfg.dynamic_range);
}

torch::Tensor ssim_loss(const torch::Tensor& original, const torch::Tensor& reconstruction,
                        const SsimConfig& cfg) {
  return 1.0 - ms_ssim(to_ssim_range(original, cfg), to_ssim_range(reconstruction, cfg), cfg);
}

torch::Tensor cycle_l1(const torch::Tensor& x, const torch::Tensor& x_rec) {
  check_same_shape(x, x_rec, "cycle_l1");
  return (x - x_rec).abs().mean();
}

torch::Tensor masked_cycle_loss(const torch::Tensor& x, const torch::Tensor& x_rec,
                                const torch::Tensor& mask, double w_mask) {
  check_same_shape(x, x_rec, "masked_cycle_loss");
  if (w_mask < 0.0) throw Error("masked_cycle_loss: w_mask must be >= 0");
  if (mask.dim() != 4 || mask.size(1) != 1 || mask.size(0) != x.size(0) || mask.size(2) != x.size(2) ||
      mask.size(3) != x.size(3)) {
    throw Error("masked_cycle_loss: mask " + c10::str(mask.sizes()) + " misaligned with image " +
                c10::str(x.sizes()));
  }
  auto weight = mask.to(x.scalar_type()) * w_mask + 1.0;
  return (weight * (x - x_rec).abs()).mean();
}

torch::Tensor lsgan_loss(const torch::Tensor& d_out, bool target_is_real) {
  const double target = target_is_real ? 1.0 : 0.0;
  return (d_out - target).pow(2).mean();
}

WganLosses wgan_losses(const torch::Tensor& d_real, const torch::Tensor& d_fake) {
  auto fake_mean = d_fake.mean();
  return {fake_mean - d_real.mean(), -fake_mean};
}

torch::Tensor dual_disc_gan_loss(const torch::Tensor& loss_d1, const torch::Tensor& loss_d2,
                                 double mix_lambda) {
  if (!(mix_lambda >= 0.0 && mix_lambda <= 1.0)) {
    throw Error("dual_disc_gan_loss: mix_lambda must lie in [0, 1]");
  }
  return mix_lambda * loss_d1 + (1.0 - mix_lambda) * loss_d2;
}

double dual_disc_gan_loss(double loss_d1, double loss_d2, double mix_lambda) {
  if (!(mix_lambda >= 0.0 && mix_lambda <= 1.0)) {
    throw Error("dual_disc_gan_loss: mix_lambda must lie in [0, 1]");
  }
  return mix_lambda * loss_d1 + (1.0 - mix_lambda) * loss_d2;
}

torch::Tensor total_generator_objective(const LossBundle& parts, const ExperimentConfig& cfg) {
  auto total = parts.gan_g + cfg.cycle_weight * parts.cycle;
  if (cfg.ssim_weight > 0.0) {
    if (!parts.ssim_term.defined()) throw Error("ssim_weight > 0 but no SSIM term was computed");
    total = total + cfg.ssim_weight * parts.ssim_term;
  }
  return total;
}

}  // namespace faceoff::losses
