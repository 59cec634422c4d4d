#pragma once

#include <filesystem>
#include <string>

#include "faceoff/core.hpp"
#include "synthetic.hpp"

namespace faceoff::testkit {

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path fresh_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("faceoff_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

/// Small squares/circles domains under `root` and a fast config training on them.
inline ExperimentConfig tiny_run(const std::filesystem::path& root, int images = 4, int size = 32) {
  write_shapes(root / "A", Shape::square, images, size, 1);
  write_shapes(root / "B", Shape::circle, images, size, 2);
  ExperimentConfig cfg;
  cfg.data.domain_a_dir = (root / "A").string();
  cfg.data.domain_b_dir = (root / "B").string();
  cfg.data.resize = size;
  cfg.data.crop = size;
  cfg.model.ngf = 4;
  cfg.model.ndf = 4;
  cfg.model.n_res_blocks = 1;
  cfg.model.unet_levels = 5;
  cfg.epochs = 2;
  cfg.seed = 11;
  cfg.train.out_dir = (root / "run").string();
  return cfg;
}

}  // namespace faceoff::testkit
