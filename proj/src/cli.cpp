#include "faceoff/cli.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <optional>
#include <sstream>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "CLI11.hpp"
#include "faceoff/data.hpp"
#include "faceoff/masks.hpp"
#include "faceoff/trainer.hpp"

namespace faceoff::cli {

namespace fs = std::filesystem;

namespace {

constexpr const char* kColumns[] = {"step", "epoch", "loss_g", "loss_d", "loss_cyc"};

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    cell.erase(0, cell.find_first_not_of(" \t\r"));
    cell.erase(cell.find_last_not_of(" \t\r") + 1);
    cells.push_back(cell);
  }
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

struct Panel {
  const char* title;
  const std::vector<double>* values;
  cv::Scalar color;
  const char* svg_color;
};

struct Range {
  double lo, hi;
};

Range range_of(const std::vector<double>& v) {
  auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  double a = *lo, b = *hi;
  if (a == b) {
    a -= 0.5;
    b += 0.5;
  }
  return {a, b};
}

// Layout shared by both renderers.
constexpr int kWidth = 900;
constexpr int kPanelHeight = 260;
constexpr int kLeft = 80;
constexpr int kRight = 20;
constexpr int kTop = 30;
constexpr int kBottom = 30;

double map_x(double step, Range xr) {
  return kLeft + (step - xr.lo) / (xr.hi - xr.lo) * (kWidth - kLeft - kRight);
}

double map_y(double v, Range yr, int panel) {
  const double top = panel * kPanelHeight + kTop;
  const double h = kPanelHeight - kTop - kBottom;
  return top + (1.0 - (v - yr.lo) / (yr.hi - yr.lo)) * h;
}

std::string short_number(double v) {
  std::ostringstream ss;
  ss.precision(4);
  ss << v;
  return ss.str();
}

void render_png(const fs::path& out, const LossLog& log, const std::vector<Panel>& panels) {
  cv::Mat canvas(kPanelHeight * static_cast<int>(panels.size()), kWidth, CV_8UC3, cv::Scalar(255, 255, 255));
  const Range xr = range_of(log.step);
  for (int p = 0; p < static_cast<int>(panels.size()); ++p) {
    const auto& values = *panels[p].values;
    const Range yr = range_of(values);
    const int y0 = p * kPanelHeight + kTop;
    const int y1 = (p + 1) * kPanelHeight - kBottom;
    cv::rectangle(canvas, cv::Point(kLeft, y0), cv::Point(kWidth - kRight, y1), cv::Scalar(0, 0, 0), 1);
    cv::putText(canvas, panels[p].title, cv::Point(kLeft, y0 - 8), cv::FONT_HERSHEY_SIMPLEX, 0.55,
                cv::Scalar(0, 0, 0), 1, cv::LINE_AA);
    cv::putText(canvas, short_number(yr.hi), cv::Point(4, y0 + 12), cv::FONT_HERSHEY_SIMPLEX, 0.4,
                cv::Scalar(60, 60, 60), 1, cv::LINE_AA);
    cv::putText(canvas, short_number(yr.lo), cv::Point(4, y1), cv::FONT_HERSHEY_SIMPLEX, 0.4, cv::Scalar(60, 60, 60),
                1, cv::LINE_AA);
    std::vector<cv::Point> pts;
    for (std::size_t i = 0; i < values.size(); ++i) {
      pts.emplace_back(static_cast<int>(std::lround(map_x(log.step[i], xr))),
                       static_cast<int>(std::lround(map_y(values[i], yr, p))));
    }
    if (pts.size() == 1) {
      cv::circle(canvas, pts[0], 3, panels[p].color, cv::FILLED, cv::LINE_AA);
    } else {
      cv::polylines(canvas, pts, false, panels[p].color, 1, cv::LINE_AA);
    }
    cv::putText(canvas, "step", cv::Point(kWidth / 2, y1 + 20), cv::FONT_HERSHEY_SIMPLEX, 0.4,
                cv::Scalar(60, 60, 60), 1, cv::LINE_AA);
  }
  if (!cv::imwrite(out.string(), canvas)) throw Error("cannot write plot " + out.string());
}

void render_svg(const fs::path& out, const LossLog& log, const std::vector<Panel>& panels) {
  std::ofstream svg(out);
  if (!svg) throw Error("cannot write plot " + out.string());
  const int height = kPanelHeight * static_cast<int>(panels.size());
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << height << "\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  const Range xr = range_of(log.step);
  for (int p = 0; p < static_cast<int>(panels.size()); ++p) {
    const auto& values = *panels[p].values;
    const Range yr = range_of(values);
    const int y0 = p * kPanelHeight + kTop;
    const int y1 = (p + 1) * kPanelHeight - kBottom;
    svg << "<rect x=\"" << kLeft << "\" y=\"" << y0 << "\" width=\"" << (kWidth - kLeft - kRight) << "\" height=\""
        << (y1 - y0) << "\" fill=\"none\" stroke=\"black\"/>\n";
    svg << "<text x=\"" << kLeft << "\" y=\"" << (y0 - 8) << "\" font-size=\"14\">" << panels[p].title << "</text>\n";
    svg << "<text x=\"4\" y=\"" << (y0 + 12) << "\" font-size=\"11\">" << short_number(yr.hi) << "</text>\n";
    svg << "<text x=\"4\" y=\"" << y1 << "\" font-size=\"11\">" << short_number(yr.lo) << "</text>\n";
    if (values.size() == 1) {
      svg << "<circle cx=\"" << map_x(log.step[0], xr) << "\" cy=\"" << map_y(values[0], yr, p)
          << "\" r=\"3\" fill=\"" << panels[p].svg_color << "\"/>\n";
    } else {
      svg << "<polyline fill=\"none\" stroke=\"" << panels[p].svg_color << "\" points=\"";
      for (std::size_t i = 0; i < values.size(); ++i) {
        svg << map_x(log.step[i], xr) << "," << map_y(values[i], yr, p) << " ";
      }
      svg << "\"/>\n";
    }
  }
  svg << "</svg>\n";
}

}  // namespace

LossLog read_loss_log(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open loss log " + path.string());
  std::string header;
  if (!std::getline(in, header) || header.find_first_not_of(" \t\r") == std::string::npos) {
    throw Error("loss log " + path.string() + " is empty");
  }
  auto names = split_csv_line(header);
  std::map<std::string, std::size_t> column;
  for (std::size_t i = 0; i < names.size(); ++i) column[names[i]] = i;
  for (const char* c : kColumns) {
    if (!column.contains(c)) throw Error("loss log " + path.string() + " is missing column " + c);
  }
  LossLog log;
  std::vector<double>* targets[] = {&log.step, &log.epoch, &log.loss_g, &log.loss_d, &log.loss_cyc};
  std::string line;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto cells = split_csv_line(line);
    if (cells.size() != names.size()) {
      throw Error("loss log line " + std::to_string(lineno) + ": expected " + std::to_string(names.size()) +
                  " fields, got " + std::to_string(cells.size()));
    }
    for (std::size_t k = 0; k < std::size(kColumns); ++k) {
      const auto& cell = cells[column[kColumns[k]]];
      double v = 0.0;
      auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (ec != std::errc() || ptr != cell.data() + cell.size()) {
        throw Error("loss log line " + std::to_string(lineno) + ": bad value '" + cell + "' in column " +
                    kColumns[k]);
      }
      targets[k]->push_back(v);
    }
  }
  if (log.rows() == 0) throw Error("loss log " + path.string() + " has no rows");
  return log;
}

PlotSummary plot_losses(const fs::path& csv, const fs::path& out_image) {
  const auto log = read_loss_log(csv);
  const std::vector<Panel> panels = {
      {"Generator Loss", &log.loss_g, cv::Scalar(180, 90, 30), "#1f5ab4"},
      {"Discriminator Loss", &log.loss_d, cv::Scalar(30, 120, 230), "#e6781e"},
      {"Cycle-consistency Loss", &log.loss_cyc, cv::Scalar(60, 160, 60), "#3ca03c"},
  };
  if (out_image.has_parent_path()) fs::create_directories(out_image.parent_path());
  if (out_image.extension() == ".svg") {
    render_svg(out_image, log, panels);
  } else {
    render_png(out_image, log, panels);
  }

  const double last_epoch = *std::max_element(log.epoch.begin(), log.epoch.end());
  PlotSummary summary;
  summary.rows = log.rows();
  for (const auto& p : panels) {
    SeriesSummary s;
    s.name = p.title;
    auto [lo, hi] = std::minmax_element(p.values->begin(), p.values->end());
    s.min = *lo;
    s.max = *hi;
    double total = 0.0;
    int n = 0;
    for (std::size_t i = 0; i < log.rows(); ++i) {
      if (log.epoch[i] == last_epoch) {
        total += (*p.values)[i];
        ++n;
      }
    }
    s.final_epoch_mean = total / n;
    summary.series.push_back(s);
  }
  return summary;
}

// ---------------------------------------------------------------------------

namespace {

std::pair<int, int> parse_size(const std::string& text) {
  auto x = text.find_first_of("xX");
  if (x == std::string::npos) throw CLI::ValidationError("--size", "expected HxW, got " + text);
  try {
    return {std::stoi(text.substr(0, x)), std::stoi(text.substr(x + 1))};
  } catch (const std::exception&) {
    throw CLI::ValidationError("--size", "expected HxW, got " + text);
  }
}

struct ConfigFlags {
  std::string config;
  std::vector<std::string> overrides;
  std::string out;
  std::optional<long long> seed;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config, "Config file of dotted `key = value` lines");
    cmd->add_option("--set", overrides, "Override one config key, KEY=VALUE (repeatable)");
    cmd->add_option("--out", out, "Output directory (sets train.out_dir)");
    cmd->add_option("--seed", seed, "Master seed (sets seed)");
  }

  ExperimentConfig resolve() const {
    RawConfig raw = config.empty() ? RawConfig{} : read_config_file(config);
    for (const auto& o : overrides) apply_override(raw, o);
    if (seed) raw["seed"] = std::to_string(*seed);
    if (!out.empty()) raw["train.out_dir"] = out;
    return validate_config(raw);
  }
};

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"faceoff: unpaired image-to-image translation for face-off videos"};
  app.name("faceoff");
  app.require_subcommand(1);

  // extract
  auto* extract = app.add_subcommand("extract", "Sample frames from a video at a uniform stride");
  std::string video, extract_out;
  int count = 0;
  int storage = 286;
  extract->add_option("--video", video, "Video file, or a directory of decoded frames")->required();
  extract->add_option("--count", count, "Number of frames to keep")->required();
  extract->add_option("--out", extract_out, "Directory for the numbered PNG frames")->required();
  extract->add_option("--size", storage, "Stored frame side after short-side resize and center crop");

  // gen-masks
  auto* gen_masks = app.add_subcommand("gen-masks", "Rasterize landmark JSON files into binary masks");
  std::string landmarks, masks_out, mask_size;
  gen_masks->add_option("--landmarks", landmarks, "Directory of landmark JSON files")->required();
  gen_masks->add_option("--out", masks_out, "Directory for mask PNGs")->required();
  gen_masks->add_option("--size", mask_size, "Mask size HxW (required when the JSON omits it)");

  // train
  auto* train = app.add_subcommand("train", "Train both generators and discriminators");
  ConfigFlags train_flags;
  train_flags.attach(train);
  std::string resume;
  train->add_option("--resume", resume, "Checkpoint to resume from");

  // infer
  auto* infer = app.add_subcommand("infer", "Translate a directory of frames with a trained generator");
  std::string checkpoint, frames, direction = "a2b", infer_out;
  infer->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  infer->add_option("--frames", frames, "Directory of input frames")->required();
  infer->add_option("--direction", direction, "a2b or b2a")->check(CLI::IsMember({"a2b", "b2a"}));
  infer->add_option("--out", infer_out, "Directory for translated frames")->required();

  // make-video
  auto* make_video = app.add_subcommand("make-video", "Encode frames in filename order");
  std::string video_frames, video_out;
  double fps = 30.0;
  make_video->add_option("--frames", video_frames, "Directory of frames")->required();
  make_video->add_option("--fps", fps, "Frames per second")->check(CLI::PositiveNumber);
  make_video->add_option("--out", video_out, "Output video path")->required();

  // plot-losses
  auto* plot = app.add_subcommand("plot-losses", "Plot generator, discriminator and cycle losses");
  std::string csv, plot_out;
  plot->add_option("csv", csv, "Loss log CSV")->required();
  plot->add_option("--out", plot_out, "Output image (.png or .svg); defaults next to the CSV");

  // show-config
  auto* show = app.add_subcommand("show-config", "Print the fully resolved configuration");
  ConfigFlags show_flags;
  show_flags.attach(show);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    app.exit(e, out, err);
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    app.exit(e, out, err);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "faceoff: " << e.what() << "\n" << app.help();
    return kExitUsage;
  }

  try {
    if (*extract) {
      int n = data::extract_frames(video, count, extract_out, storage);
      out << "wrote " << n << " frames to " << extract_out << "\n";
    } else if (*gen_masks) {
      std::optional<std::pair<int, int>> size;
      if (!mask_size.empty()) size = parse_size(mask_size);
      int n = masks::generate_masks(landmarks, masks_out, size);
      out << "wrote " << n << " masks to " << masks_out << "\n";
    } else if (*train) {
      auto cfg = train_flags.resolve();
      trainer::RunOptions opts;
      if (!resume.empty()) opts.resume_from = resume;
      opts.on_step = [&out](const LossRecord& r) {
        if (r.step % 50 == 0) {
          out << "epoch " << r.epoch << " step " << r.step << " loss_g " << r.loss_g << " loss_d " << r.loss_d
              << " loss_cyc " << r.loss_cyc << "\n";
        }
      };
      auto result = trainer::run_training(cfg, opts);
      out << "trained " << result.steps << " steps; checkpoint " << result.checkpoint.string() << "; loss log "
          << result.loss_log.string() << "\n";
    } else if (*infer) {
      int n = trainer::infer(checkpoint, frames, trainer::parse_direction(direction), infer_out);
      out << "translated " << n << " frames into " << infer_out << "\n";
    } else if (*make_video) {
      double seconds = trainer::assemble_video(video_frames, fps, video_out);
      out << "wrote " << video_out << " (" << seconds << " s)\n";
    } else if (*plot) {
      fs::path target = plot_out.empty() ? fs::path(csv).replace_extension(".png") : fs::path(plot_out);
      auto summary = plot_losses(csv, target);
      out << "plotted " << summary.rows << " rows to " << target.string() << "\n";
      for (const auto& s : summary.series) {
        out << s.name << ": min " << s.min << " max " << s.max << " final-epoch mean " << s.final_epoch_mean
            << "\n";
      }
    } else if (*show) {
      out << serialize_config(show_flags.resolve());
    }
  } catch (const CLI::ValidationError& e) {
    err << "faceoff: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ConfigError& e) {
    err << "faceoff: config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "faceoff: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitOk;
}

int dispatch(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return dispatch(args, std::cout, std::cerr);
}

}  // namespace faceoff::cli
