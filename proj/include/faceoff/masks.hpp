#pragma once

#include <filesystem>
#include <optional>
#include <utility>
#include <vector>

#include <torch/torch.h>

#include "faceoff/core.hpp"

namespace faceoff::masks {

struct Point {
  double x = 0.0;
  double y = 0.0;
};

/// Facial landmarks in pixel coordinates of an image of `height` x `width`.
/// Pixel (r, c) covers [c, c+1) x [r, r+1); its center is (c + 0.5, r + 0.5).
struct LandmarkSet {
  std::vector<Point> points;
  int height = 0;
  int width = 0;

  /// Throws unless every point lies in [0, width] x [0, height] and the set spans an area.
  void validate() const;
};

/// Counter-clockwise convex hull (y axis down), collinear points dropped.
std::vector<Point> convex_hull(std::vector<Point> points);

/// Rasterizes the convex hull of the landmarks: a pixel is 1 iff its center lies in the
/// closed hull. Result has shape (1, 1, height, width).
MaskTensor landmarks_to_mask(const LandmarkSet& lm);

/// Reads `{"points": [[x, y], ...], "size": [h, w]}`. `size` may be omitted if a fallback is given.
LandmarkSet read_landmarks(const std::filesystem::path& path,
                           std::optional<std::pair<int, int>> fallback_size = std::nullopt);

/// Loads a single-channel {0, 255} image as a (1, 1, H, W) mask.
MaskTensor load_mask(const std::filesystem::path& path,
                     std::optional<std::pair<int, int>> expected_size = std::nullopt);

void save_mask(const std::filesystem::path& path, const MaskTensor& mask);

/// Replaces pixels outside the mask with -1; pixels inside are untouched.
torch::Tensor apply_crop_mode(const torch::Tensor& img, const MaskTensor& mask);

/// Rasterizes every landmark JSON in `landmarks_dir` into `<stem>.png` under `out_dir`.
/// Returns the number of masks written.
int generate_masks(const std::filesystem::path& landmarks_dir, const std::filesystem::path& out_dir,
                   std::optional<std::pair<int, int>> size);

}  // namespace faceoff::masks
