#pragma once

#include <optional>
#include <vector>

#include <torch/torch.h>

#include "faceoff/core.hpp"

namespace faceoff::losses {

/// Multi-scale structural similarity settings.
///
/// Scale j (1-based, finest first) contributes mean(c_j)^beta[j-1] * mean(s_j)^gamma[j-1];
/// the coarsest scale additionally contributes mean(l_M)^alpha. Means are taken per
/// image over channels and window positions, and the per-image products are averaged
/// over the batch. Inputs are expected in [0, dynamic_range].
struct SsimConfig {
  int scales = 3;
  double alpha = 0.0;
  std::vector<double> beta;
  std::vector<double> gamma;
  int window_size = 11;
  double sigma = 1.5;
  WindowKind window = WindowKind::gaussian;
  double k1 = 0.01;
  double k2 = 0.03;
  double dynamic_range = 1.0;
  bool literal_constants = false;

  /// Canonical five-scale exponents truncated to `scales` and renormalized to sum 1.
  static SsimConfig canonical(int scales = 3);
  static SsimConfig from(const SsimParams& params);

  double c1() const { return (k1 * dynamic_range) * (k1 * dynamic_range); }
  double c2() const { return (k2 * dynamic_range) * (k2 * dynamic_range); }
  double c3() const { return c2() / 2.0; }
  /// Constant used in the contrast term: c2, or c1 under literal_constants.
  double contrast_constant() const { return literal_constants ? c1() : c2(); }

  void validate() const;
};

/// Per-window luminance, contrast and structure maps, shape (N, C, H-w+1, W-w+1).
struct SsimMaps {
  torch::Tensor luminance;
  torch::Tensor contrast;
  torch::Tensor structure;
};

/// Normalized window kernel of shape (window_size, window_size).
torch::Tensor ssim_window(const SsimConfig& cfg, torch::ScalarType dtype = torch::kFloat);

SsimMaps ssim_components(const torch::Tensor& x, const torch::Tensor& y, const SsimConfig& cfg);

/// Scalar MS-SSIM in (0, 1]; differentiable in both arguments.
torch::Tensor ms_ssim(const torch::Tensor& x, const torch::Tensor& y, const SsimConfig& cfg);

/// Maps generator range [-1, 1] onto [0, L].
torch::Tensor to_ssim_range(const torch::Tensor& img, const SsimConfig& cfg);

/// 1 - MS-SSIM between an original in [-1, 1] and its reconstruction.
torch::Tensor ssim_loss(const torch::Tensor& original, const torch::Tensor& reconstruction,
                        const SsimConfig& cfg);

torch::Tensor cycle_l1(const torch::Tensor& x, const torch::Tensor& x_rec);

/// mean((w_mask * mask + 1) * |x - x_rec|), mask of shape (N, 1, H, W) broadcast over channels.
torch::Tensor masked_cycle_loss(const torch::Tensor& x, const torch::Tensor& x_rec,
                                const torch::Tensor& mask, double w_mask);

torch::Tensor lsgan_loss(const torch::Tensor& d_out, bool target_is_real);

struct WganLosses {
  torch::Tensor critic;     // mean(d_fake) - mean(d_real)
  torch::Tensor generator;  // -mean(d_fake)
};

WganLosses wgan_losses(const torch::Tensor& d_real, const torch::Tensor& d_fake);

torch::Tensor dual_disc_gan_loss(const torch::Tensor& loss_d1, const torch::Tensor& loss_d2,
                                 double mix_lambda);
double dual_disc_gan_loss(double loss_d1, double loss_d2, double mix_lambda);

/// Scalar parts of one generator step. `gan_g`, `cycle` and `ssim_term` are summed over both
/// translation directions; `ssim_term` is undefined when the SSIM loss is off.
struct LossBundle {
  torch::Tensor gan_g;
  torch::Tensor gan_d;
  torch::Tensor cycle;
  torch::Tensor ssim_term;
  torch::Tensor total_g;
};

torch::Tensor total_generator_objective(const LossBundle& parts, const ExperimentConfig& cfg);

}  // namespace faceoff::losses
