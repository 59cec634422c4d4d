#pragma once

#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <torch/torch.h>

#include "faceoff/core.hpp"
#include "faceoff/data.hpp"
#include "faceoff/losses.hpp"
#include "faceoff/models.hpp"

namespace faceoff::trainer {

/// Unaligned samples from both domains for one update.
struct Batch {
  torch::Tensor a;
  torch::Tensor b;
  torch::Tensor mask_a;  // undefined unless masks are loaded
  torch::Tensor mask_b;
  std::vector<std::size_t> index_a;
  std::vector<std::size_t> index_b;
  std::vector<data::CropOffset> offset_a;
  std::vector<data::CropOffset> offset_b;
};

/// Deterministic batch factory: batch N depends only on (seed, N), never on who asks or when.
class BatchSource {
 public:
  BatchSource(std::shared_ptr<const data::FrameStore> a, std::shared_ptr<const data::FrameStore> b,
              const ExperimentConfig& cfg);

  Batch draw(std::uint64_t index) const;
  std::size_t steps_per_epoch() const;

 private:
  std::shared_ptr<const data::FrameStore> a_;
  std::shared_ptr<const data::FrameStore> b_;
  std::uint64_t seed_;
  int batch_size_;
  int crop_;
};

/// Produces batches draw_index, draw_index + 1, ... from worker threads in a bounded window.
/// The consumed sequence is identical to calling BatchSource::draw serially.
class PrefetchingLoader {
 public:
  PrefetchingLoader(const BatchSource& source, std::uint64_t first, int workers, std::size_t capacity = 8);
  ~PrefetchingLoader();
  PrefetchingLoader(const PrefetchingLoader&) = delete;
  PrefetchingLoader& operator=(const PrefetchingLoader&) = delete;

  Batch next();

 private:
  void work();

  const BatchSource& source_;
  std::size_t capacity_;
  std::uint64_t next_claim_;
  std::uint64_t next_take_;
  bool stopping_ = false;
  std::string failure_;
  std::map<std::uint64_t, Batch> ready_;
  std::mutex mu_;
  std::condition_variable cv_;
  std::vector<std::thread> threads_;
};

/// History of generated images replayed to the discriminator. Capacity 0 passes images through.
class ImagePool {
 public:
  explicit ImagePool(int capacity = 0) : capacity_(capacity) {}
  torch::Tensor query(const torch::Tensor& images, Rng& rng);

  int capacity() const { return capacity_; }
  const std::vector<torch::Tensor>& images() const { return images_; }
  void restore(std::vector<torch::Tensor> images) { images_ = std::move(images); }

 private:
  int capacity_;
  std::vector<torch::Tensor> images_;
};

struct TrainState {
  ExperimentConfig config;
  models::Generator g_ab;  // domain A -> B
  models::Generator g_ba;  // domain B -> A
  models::DualDiscriminator d_a{nullptr};
  models::DualDiscriminator d_b{nullptr};
  std::unique_ptr<torch::optim::Optimizer> opt_g;
  std::unique_ptr<torch::optim::Optimizer> opt_d;
  std::int64_t epoch = 0;
  std::int64_t step = 0;      // generator updates
  std::uint64_t draws = 0;    // batches consumed
  ImagePool pool_a;
  ImagePool pool_b;
};

TrainState init_state(const ExperimentConfig& cfg);

models::Checkpoint to_checkpoint(const TrainState& state);
TrainState restore_state(const models::Checkpoint& ckpt);

struct OptimizerInfo {
  std::string kind;  // "adam" or "rmsprop"
  double lr = 0.0;
};

OptimizerInfo describe(const torch::optim::Optimizer& opt);

/// Tensors of the generator update, kept for recomputation outside the loop.
struct StepTensors {
  torch::Tensor real_a, real_b;
  torch::Tensor fake_a, fake_b;
  torch::Tensor rec_a, rec_b;
  torch::Tensor mask_a, mask_b;
  std::vector<torch::Tensor> d_a_on_fake;  // D_a members on G_ba(b)
  std::vector<torch::Tensor> d_b_on_fake;  // D_b members on G_ab(a)
};

struct StepResult {
  LossRecord record;
  losses::LossBundle bundle;
  StepTensors tensors;
};

struct StepHooks {
  std::function<void(const TrainState&)> after_critic_step;
};

StepResult train_step_lsgan(TrainState& state, const Batch& batch);
StepResult train_step_wgan(TrainState& state, const std::function<Batch()>& next_batch,
                           const StepHooks& hooks = {});

/// Runs the update for the configured gan mode, drawing batches from `next_batch`.
StepResult train_step(TrainState& state, const std::function<Batch()>& next_batch, const StepHooks& hooks = {});

inline constexpr const char* kLossLogHeader = "step,epoch,loss_g,loss_d,loss_cyc";

struct RunOptions {
  std::optional<std::filesystem::path> resume_from;
  StepHooks hooks;
  std::function<void(const LossRecord&)> on_step;
};

struct RunResult {
  std::filesystem::path checkpoint;
  std::filesystem::path loss_log;
  std::int64_t steps = 0;
};

RunResult run_training(const ExperimentConfig& cfg, const RunOptions& options = {});

enum class Direction { a2b, b2a };

Direction parse_direction(std::string_view text);

/// Center-crops, translates and writes every frame of `frames_dir` under the same name.
int translate_frames(models::GeneratorImpl& generator, const std::filesystem::path& frames_dir,
                     const std::filesystem::path& out_dir, int crop_size);

/// Loads the requested generator from a checkpoint and translates a frame directory.
int infer(const std::filesystem::path& checkpoint, const std::filesystem::path& frames_dir, Direction direction,
          const std::filesystem::path& out_dir);

/// Command template used when FACEOFF_FFENCODE is unset. Substitutes `{fps}`, `{pattern}`,
/// `{input_dir}`, `{count}` and `{output}`.
inline constexpr const char* kDefaultEncodeTemplate =
    "ffmpeg -y -loglevel error -framerate {fps} -i {pattern} -pix_fmt yuv420p {output}";

std::string encode_template();

/// Encodes the frames in filename order; returns the clip duration in seconds.
double assemble_video(const std::filesystem::path& frames_dir, double fps, const std::filesystem::path& out_path);

}  // namespace faceoff::trainer
