#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <opencv2/core.hpp>
#include <torch/torch.h>

#include "faceoff/core.hpp"

namespace faceoff::data {

// ---------------------------------------------------------------------------
// Image conversion
// ---------------------------------------------------------------------------

cv::Mat read_image(const std::filesystem::path& path);
void write_image(const std::filesystem::path& path, const cv::Mat& bgr);

/// 8-bit BGR image -> (1, 3, H, W) RGB tensor in [-1, 1].
torch::Tensor normalize(const cv::Mat& bgr);
/// (3, H, W) or (1, 3, H, W) tensor in [-1, 1] -> 8-bit BGR image.
cv::Mat denormalize(const torch::Tensor& img);

// ---------------------------------------------------------------------------
// Datasets
// ---------------------------------------------------------------------------

enum class Split { full, train, test };

/// Lexicographically ordered frames of one domain.
struct FrameDataset {
  std::filesystem::path root;
  std::vector<std::filesystem::path> frames;
  Split split = Split::full;
  std::optional<std::filesystem::path> mask_dir;

  std::size_t size() const { return frames.size(); }
  bool empty() const { return frames.empty(); }
  /// `<mask_dir>/<frame stem>.png`; throws if the dataset has no mask directory.
  std::filesystem::path mask_path(std::size_t index) const;
};

std::vector<std::filesystem::path> list_frames(const std::filesystem::path& dir);

FrameDataset open_dataset(const std::filesystem::path& dir,
                          std::optional<std::filesystem::path> mask_dir = std::nullopt);

/// First n_train frames go to train, the rest to test.
std::pair<FrameDataset, FrameDataset> split_dataset(const FrameDataset& ds, std::size_t n_train);

// ---------------------------------------------------------------------------
// Frame extraction
// ---------------------------------------------------------------------------

/// Command template used when FACEOFF_FFDECODE is unset. `{input}` and `{outdir}` are substituted.
inline constexpr const char* kDefaultDecodeTemplate = "ffmpeg -loglevel error -i {input} {outdir}/%08d.png";

std::string decode_template();

/// Quotes a path for /bin/sh.
std::string shell_quote(const std::string& s);

/// Replaces every occurrence of `key` in a command template.
std::string fill_template(std::string text, const std::string& key, const std::string& value);

/// Scratch directory removed on destruction.
class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

/// Short-side resize to `size`, then center crop to size x size.
cv::Mat resize_and_center_crop(const cv::Mat& img, int size);

/// Samples `count` frames at a uniform temporal stride and writes them as `%06d.png`
/// squares of `storage_size`. `video_path` is decoded with the external decoder, or used
/// directly when it is a directory of already-decoded frames.
int extract_frames(const std::filesystem::path& video_path, int count, const std::filesystem::path& out_dir,
                   int storage_size = 286);

// ---------------------------------------------------------------------------
// Preprocessing and sampling
// ---------------------------------------------------------------------------

struct CropOffset {
  int top = 0;
  int left = 0;
  bool operator==(const CropOffset&) const = default;
};

struct Preprocessed {
  ImageTensor image;
  CropOffset offset;
};

/// Training: random crop with offsets from `rng`. Eval: center crop, rng unused.
CropOffset choose_crop(int height, int width, int crop, Rng* rng, bool training);

/// Crops an (N, C, H, W) tensor.
torch::Tensor crop(const torch::Tensor& t, const CropOffset& offset, int size);

Preprocessed preprocess(const cv::Mat& frame, Rng* rng, bool training, int crop_size = 256);

/// Independent uniform indices into two domains.
std::pair<std::size_t, std::size_t> sample_unaligned_indices(std::size_t size_a, std::size_t size_b, Rng& rng);

/// One decoded, normalized domain held in memory, with optional aligned masks.
class FrameStore {
 public:
  FrameStore() = default;
  explicit FrameStore(const FrameDataset& ds, bool load_masks = false);
  /// In-memory frames; masks are either empty or one per image.
  FrameStore(std::vector<torch::Tensor> images, std::vector<torch::Tensor> masks = {});

  std::size_t size() const { return images_.size(); }
  bool has_masks() const { return !masks_.empty(); }
  const torch::Tensor& image(std::size_t i) const { return images_.at(i); }
  const torch::Tensor& mask(std::size_t i) const { return masks_.at(i); }
  const std::string& name(std::size_t i) const { return names_.at(i); }

 private:
  std::vector<torch::Tensor> images_;  // (1, 3, H, W) in [-1, 1]
  std::vector<torch::Tensor> masks_;   // (1, 1, H, W) in {0, 1}
  std::vector<std::string> names_;
};

struct Sample {
  torch::Tensor image;
  torch::Tensor mask;  // undefined without masks
  std::size_t index = 0;
  CropOffset offset;
};

/// Preprocesses frame `index`; image and mask share one crop offset.
Sample take_sample(const FrameStore& store, std::size_t index, Rng* rng, bool training, int crop_size);

/// Draws one independent uniform frame from each domain and preprocesses both.
std::pair<Sample, Sample> sample_unaligned_pair(const FrameStore& a, const FrameStore& b, Rng& rng,
                                                int crop_size, bool training = true);

}  // namespace faceoff::data
