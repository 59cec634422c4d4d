#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <torch/torch.h>

#include "faceoff/core.hpp"

namespace faceoff::models {

/// Image-to-image network. Output has the input's shape and lies in [-1, 1].
class GeneratorImpl : public torch::nn::Module {
 public:
  explicit GeneratorImpl(GeneratorArch arch) : arch_(arch) {}
  virtual torch::Tensor forward(const torch::Tensor& x) = 0;
  GeneratorArch arch() const { return arch_; }

 private:
  GeneratorArch arch_;
};

using Generator = std::shared_ptr<GeneratorImpl>;

/// c7s1-ngf, two stride-2 downsamples, residual blocks, two upsamples, c7s1-3, tanh.
class ResnetGeneratorImpl : public GeneratorImpl {
 public:
  ResnetGeneratorImpl(int ngf, int n_blocks);
  torch::Tensor forward(const torch::Tensor& x) override;

 private:
  torch::nn::Sequential model_{nullptr};
};

struct SkipLink {
  int decoder_level;
  int encoder_level;
  std::vector<std::int64_t> decoder_shape;
  std::vector<std::int64_t> skip_shape;
};

/// Encoder-decoder with one skip per level: decoder level k concatenates encoder level k.
class UnetGeneratorImpl : public GeneratorImpl {
 public:
  UnetGeneratorImpl(int ngf, int levels);
  torch::Tensor forward(const torch::Tensor& x) override;

  /// Forward pass that also reports every skip concatenation it performed.
  std::pair<torch::Tensor, std::vector<SkipLink>> forward_traced(const torch::Tensor& x);

  int levels() const { return static_cast<int>(down_.size()); }
  std::int64_t min_input_size() const { return std::int64_t{1} << levels(); }

 private:
  std::vector<torch::nn::Sequential> down_;
  std::vector<torch::nn::Sequential> up_;
};

struct DiscriminatorOptions {
  int n_layers = 3;
  int ndf = 64;
  // Only used to exercise the wgan configuration check; never built from a config.
  bool sigmoid_output = false;
};

/// PatchGAN: n_layers stride-2 blocks, one stride-1 block, then a 1-channel linear map.
class DiscriminatorImpl : public torch::nn::Module {
 public:
  explicit DiscriminatorImpl(const DiscriminatorOptions& opts);
  torch::Tensor forward(const torch::Tensor& x);

  int n_layers() const { return opts_.n_layers; }
  bool has_sigmoid_output() const { return opts_.sigmoid_output; }

 private:
  DiscriminatorOptions opts_;
  torch::nn::Sequential model_{nullptr};
};
TORCH_MODULE(Discriminator);

/// Discriminators judging one domain. A single discriminator or a (3-layer, 5-layer) pair
/// whose generator-side losses are mixed with weights (mix_lambda, 1 - mix_lambda).
class DualDiscriminatorImpl : public torch::nn::Module {
 public:
  DualDiscriminatorImpl(Discriminator primary, Discriminator deep, double mix_lambda);
  explicit DualDiscriminatorImpl(Discriminator single);

  /// One patch map per member, in member order.
  std::vector<torch::Tensor> forward(const torch::Tensor& x);

  bool is_dual() const { return static_cast<bool>(deep_); }
  double mix_lambda() const { return mix_lambda_; }
  const Discriminator& shallow() const { return shallow_; }
  const Discriminator& deep() const { return deep_; }
  std::vector<Discriminator> members() const;

 private:
  Discriminator shallow_{nullptr};
  Discriminator deep_{nullptr};
  double mix_lambda_ = 1.0;
};
TORCH_MODULE(DualDiscriminator);

/// Seeded generator for parameter initialization.
torch::Generator make_init_generator(std::uint64_t seed);

/// Zero-mean gaussian (sigma 0.02) weights, zero biases.
void init_weights(torch::nn::Module& module, torch::Generator& gen);

Generator build_generator(const ExperimentConfig& cfg, torch::Generator& gen);
Discriminator build_discriminator(int n_layers, torch::Generator& gen, int ndf = 64);
/// Builds a domain's discriminator(s) as configured: single or dual.
DualDiscriminator build_domain_discriminator(const ExperimentConfig& cfg, torch::Generator& gen);

std::pair<torch::Tensor, torch::Tensor> dual_forward(DualDiscriminator& d, const torch::Tensor& x);

/// Clamps every parameter to [-c, c] in place.
void clip_parameters(torch::nn::Module& d, double c);

/// Largest absolute parameter value in the module.
double max_abs_parameter(const torch::nn::Module& m);

/// Output spatial size of a PatchGAN discriminator, from conv arithmetic alone.
std::int64_t patch_map_size(std::int64_t input, int n_layers);

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Versioned container of named, shape-tagged tensors plus the originating config.
struct Checkpoint {
  ExperimentConfig config;
  std::vector<std::pair<std::string, std::string>> meta;
  std::vector<std::pair<std::string, torch::Tensor>> tensors;
  std::vector<std::pair<std::string, std::string>> blobs;

  const std::string* find_meta(const std::string& key) const;
  const std::string* find_blob(const std::string& key) const;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Appends `prefix + name` for every parameter and buffer of the module.
void export_parameters(const torch::nn::Module& m, const std::string& prefix, Checkpoint& ckpt);

/// Copies `prefix`-scoped tensors into the module. Missing, extra or mis-shaped entries throw.
void import_parameters(torch::nn::Module& m, const std::string& prefix, const Checkpoint& ckpt);

}  // namespace faceoff::models
