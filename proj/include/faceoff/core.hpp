#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <torch/torch.h>

namespace faceoff {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised for malformed or inconsistent configuration documents.
class ConfigError : public Error {
 public:
  using Error::Error;
};

enum class GanMode { lsgan, wgan };
enum class GeneratorArch { resnet, unet };
enum class MaskMode { off, crop, weight };
enum class WindowKind { gaussian, uniform };

std::string_view to_string(GanMode mode);
std::string_view to_string(GeneratorArch arch);
std::string_view to_string(MaskMode mode);
std::string_view to_string(WindowKind kind);

struct WganParams {
  double clip_value = 0.01;
  int n_critic = 5;
  double lr = 5e-5;
  bool operator==(const WganParams&) const = default;
};

struct LsganParams {
  double lr = 2e-4;
  std::pair<double, double> adam_betas{0.5, 0.999};
  bool operator==(const LsganParams&) const = default;
};

struct SsimParams {
  int scales = 3;
  int window_size = 11;
  double sigma = 1.5;
  WindowKind window = WindowKind::gaussian;
  double k1 = 0.01;
  double k2 = 0.03;
  double dynamic_range = 1.0;
  // Use c1 in the contrast term instead of c2.
  bool literal_constants = false;
  bool operator==(const SsimParams&) const = default;
};

struct DataParams {
  std::string domain_a_dir;
  std::string domain_b_dir;
  std::string mask_a_dir;
  std::string mask_b_dir;
  int resize = 286;
  int crop = 256;
  // 0 keeps every frame in the training split.
  int n_train = 0;
  bool operator==(const DataParams&) const = default;
};

struct ModelParams {
  int ngf = 64;
  int ndf = 64;
  int n_res_blocks = 9;
  int unet_levels = 8;
  bool operator==(const ModelParams&) const = default;
};

struct TrainParams {
  std::string out_dir = "runs/default";
  int checkpoint_every = 1;
  bool deterministic = true;
  int workers = 0;
  int image_pool = 0;  // 0 disables the history pool
  bool operator==(const TrainParams&) const = default;
};

/// Complete declarative description of one training run.
struct ExperimentConfig {
  GanMode gan_mode = GanMode::lsgan;
  GeneratorArch generator_arch = GeneratorArch::resnet;
  int disc_layers_primary = 3;
  bool dual_discriminator = false;
  double disc_mix_lambda = 0.5;
  double cycle_weight = 10.0;
  double ssim_weight = 0.0;
  MaskMode mask_mode = MaskMode::off;
  double mask_weight = 1.0;
  WganParams wgan;
  LsganParams lsgan;
  SsimParams ssim;
  std::uint64_t seed = 0;
  int epochs = 200;
  int batch_size = 1;
  DataParams data;
  ModelParams model;
  TrainParams train;

  bool operator==(const ExperimentConfig&) const = default;
};

/// Flat dotted-key document as read from a config file or `--set` overrides.
using RawConfig = std::map<std::string, std::string>;

RawConfig parse_config_text(std::string_view text);
RawConfig read_config_file(const std::filesystem::path& path);

/// Applies one `key=value` override; the key is checked later by validate_config.
void apply_override(RawConfig& raw, std::string_view assignment);

ExperimentConfig validate_config(const RawConfig& raw);

RawConfig to_raw(const ExperimentConfig& cfg);
std::string serialize_config(const ExperimentConfig& cfg);

/// Every key validate_config accepts, in canonical order.
const std::vector<std::string>& config_keys();

/// Deterministic random stream. Identical seeds give identical draws.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Independent stream for (seed, stream, index), e.g. the sampler at step N.
  static Rng substream(std::uint64_t seed, std::uint64_t stream, std::uint64_t index);

  std::uint64_t next() { return engine_(); }
  /// Uniform integer in [lo, hi].
  int uniform_int(int lo, int hi);
  double uniform();

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

Rng seeded_rng(std::uint64_t seed);

/// Normalized image batch (N, 3, H, W) with values in [-1, 1].
class ImageTensor {
 public:
  ImageTensor() = default;
  explicit ImageTensor(torch::Tensor data);

  const torch::Tensor& tensor() const { return data_; }
  std::int64_t batch() const { return data_.size(0); }
  std::int64_t height() const { return data_.size(2); }
  std::int64_t width() const { return data_.size(3); }

 private:
  torch::Tensor data_;
};

/// Binary mask batch (N, 1, H, W) with values exactly 0 or 1.
class MaskTensor {
 public:
  MaskTensor() = default;
  explicit MaskTensor(torch::Tensor data);

  const torch::Tensor& tensor() const { return data_; }
  std::int64_t height() const { return data_.size(2); }
  std::int64_t width() const { return data_.size(3); }

  void check_aligned(const torch::Tensor& image) const;

 private:
  torch::Tensor data_;
};

struct LossRecord {
  std::int64_t step = 0;
  std::int64_t epoch = 0;
  double loss_g = 0.0;
  double loss_d = 0.0;
  double loss_cyc = 0.0;
  bool operator==(const LossRecord&) const = default;
};

// Shared numeric formatting: shortest text that parses back to the same double.
std::string format_double(double v);

}  // namespace faceoff
