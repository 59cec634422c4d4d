#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "faceoff/core.hpp"

namespace faceoff::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

/// Rows of a loss log, column-major.
struct LossLog {
  std::vector<double> step;
  std::vector<double> epoch;
  std::vector<double> loss_g;
  std::vector<double> loss_d;
  std::vector<double> loss_cyc;

  std::size_t rows() const { return step.size(); }
};

/// Parses a `step,epoch,loss_g,loss_d,loss_cyc` CSV; columns may appear in any order.
LossLog read_loss_log(const std::filesystem::path& path);

struct SeriesSummary {
  std::string name;
  double min = 0.0;
  double max = 0.0;
  double final_epoch_mean = 0.0;
};

struct PlotSummary {
  std::size_t rows = 0;
  std::vector<SeriesSummary> series;  // generator, discriminator, cycle
};

/// Draws generator, discriminator and cycle losses against step as three stacked panels
/// sharing one x axis. `.svg` outputs are written as SVG, anything else through OpenCV.
PlotSummary plot_losses(const std::filesystem::path& csv, const std::filesystem::path& out_image);

/// Runs one command line. Returns 0 on success, 1 on runtime failure, 2 on usage errors.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int dispatch(int argc, char** argv);

}  // namespace faceoff::cli
