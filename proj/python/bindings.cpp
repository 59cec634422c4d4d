#include <pybind11/iostream.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <cstring>
#include <iostream>

#include "faceoff/cli.hpp"
#include "faceoff/data.hpp"
#include "faceoff/losses.hpp"
#include "faceoff/masks.hpp"
#include "faceoff/models.hpp"
#include "faceoff/trainer.hpp"

namespace py = pybind11;
using namespace faceoff;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

torch::Tensor to_tensor(const Array& a) {
  std::vector<int64_t> shape(a.shape(), a.shape() + a.ndim());
  return torch::from_blob(const_cast<double*>(a.data()), shape, torch::kDouble).clone();
}

// Images may be given as (C, H, W) or (N, C, H, W).
torch::Tensor to_batch(const Array& a) {
  auto t = to_tensor(a);
  return t.dim() == 3 ? t.unsqueeze(0) : t;
}

RawConfig to_raw_config(const py::dict& d) {
  RawConfig raw;
  for (const auto& [k, v] : d) {
    std::string value;
    if (py::isinstance<py::bool_>(v)) {
      value = v.cast<bool>() ? "true" : "false";
    } else if (py::isinstance<py::tuple>(v) || py::isinstance<py::list>(v)) {
      for (const auto& item : v) value += (value.empty() ? "" : ",") + py::str(item).cast<std::string>();
    } else {
      value = py::str(v).cast<std::string>();
    }
    raw[py::str(k).cast<std::string>()] = value;
  }
  return raw;
}

ExperimentConfig config_from(const py::dict& d) { return validate_config(to_raw_config(d)); }

losses::SsimConfig ssim_config(int scales, int window_size, double sigma, const std::string& window, double k1,
                               double k2, double dynamic_range, bool literal_constants) {
  SsimParams p;
  p.scales = scales;
  p.window_size = window_size;
  p.sigma = sigma;
  if (window == "gaussian") {
    p.window = WindowKind::gaussian;
  } else if (window == "uniform") {
    p.window = WindowKind::uniform;
  } else {
    throw ConfigError("window must be 'gaussian' or 'uniform'");
  }
  p.k1 = k1;
  p.k2 = k2;
  p.dynamic_range = dynamic_range;
  p.literal_constants = literal_constants;
  return losses::SsimConfig::from(p);
}

double scalar(const torch::Tensor& t) { return t.item<double>(); }

}  // namespace

PYBIND11_MODULE(_faceoff, m) {
  m.doc() = "Unpaired face-to-face translation: losses, masks, training and inference";

  auto base = py::register_exception<Error>(m, "FaceoffError", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  (void)base;

  // configuration
  m.def("config_keys", &config_keys, "Every accepted configuration key.");
  m.def(
      "validate_config", [](const py::dict& d) { return to_raw(config_from(d)); }, py::arg("config"),
      "Validate a flat {key: value} config; returns the complete normalized mapping.");
  m.def(
      "serialize_config", [](const py::dict& d) { return serialize_config(config_from(d)); }, py::arg("config"));
  m.def(
      "parse_config_text", [](const std::string& text) { return parse_config_text(text); }, py::arg("text"));

  // losses
  m.def(
      "ms_ssim",
      [](const Array& x, const Array& y, int scales, int window_size, double sigma, const std::string& window,
         double k1, double k2, double dynamic_range, bool literal_constants) {
        auto cfg = ssim_config(scales, window_size, sigma, window, k1, k2, dynamic_range, literal_constants);
        return scalar(losses::ms_ssim(to_batch(x), to_batch(y), cfg));
      },
      py::arg("x"), py::arg("y"), py::arg("scales") = 3, py::arg("window_size") = 11, py::arg("sigma") = 1.5,
      py::arg("window") = "gaussian", py::arg("k1") = 0.01, py::arg("k2") = 0.03, py::arg("dynamic_range") = 1.0,
      py::arg("literal_constants") = false, "MS-SSIM of two images with values in [0, dynamic_range].");
  m.def(
      "cycle_l1", [](const Array& x, const Array& rec) { return scalar(losses::cycle_l1(to_tensor(x), to_tensor(rec))); },
      py::arg("x"), py::arg("reconstruction"));
  m.def(
      "masked_cycle_loss",
      [](const Array& x, const Array& rec, const Array& mask, double w) {
        return scalar(losses::masked_cycle_loss(to_batch(x), to_batch(rec), to_batch(mask), w));
      },
      py::arg("x"), py::arg("reconstruction"), py::arg("mask"), py::arg("mask_weight"));
  m.def(
      "lsgan_loss", [](const Array& d, bool real) { return scalar(losses::lsgan_loss(to_tensor(d), real)); },
      py::arg("d_out"), py::arg("target_is_real"));
  m.def(
      "wgan_losses",
      [](const Array& real, const Array& fake) {
        auto l = losses::wgan_losses(to_tensor(real), to_tensor(fake));
        return py::make_tuple(scalar(l.critic), scalar(l.generator));
      },
      py::arg("d_real"), py::arg("d_fake"), "Returns (critic_loss, generator_loss).");
  m.def("dual_disc_gan_loss", py::overload_cast<double, double, double>(&losses::dual_disc_gan_loss),
        py::arg("loss_d1"), py::arg("loss_d2"), py::arg("mix_lambda"));

  // masks
  m.def(
      "landmarks_to_mask",
      [](const std::vector<std::pair<double, double>>& points, int height, int width) {
        masks::LandmarkSet lm{{}, height, width};
        for (const auto& [x, y] : points) lm.points.push_back({x, y});
        auto t = masks::landmarks_to_mask(lm).tensor().to(torch::kUInt8).contiguous();
        py::array_t<std::uint8_t> out({height, width});
        std::memcpy(out.mutable_data(), t.data_ptr<std::uint8_t>(), static_cast<std::size_t>(height) * width);
        return out;
      },
      py::arg("points"), py::arg("height"), py::arg("width"), "Binary (H, W) mask of the landmarks' convex hull.");
  m.def("generate_masks", &masks::generate_masks, py::arg("landmarks_dir"), py::arg("out_dir"),
        py::arg("size") = std::nullopt);

  // models
  m.def("patch_map_size", &models::patch_map_size, py::arg("input_size"), py::arg("n_layers"));

  // data and pipeline
  m.def("extract_frames", &data::extract_frames, py::arg("video"), py::arg("count"), py::arg("out_dir"),
        py::arg("storage_size") = 286, py::call_guard<py::gil_scoped_release>());
  m.def(
      "run_training",
      [](const py::dict& d, std::optional<std::filesystem::path> resume_from) {
        auto cfg = config_from(d);
        trainer::RunOptions opts;
        opts.resume_from = std::move(resume_from);
        trainer::RunResult res;
        {
          py::gil_scoped_release release;
          res = trainer::run_training(cfg, opts);
        }
        py::dict out;
        out["checkpoint"] = res.checkpoint;
        out["loss_log"] = res.loss_log;
        out["steps"] = res.steps;
        return out;
      },
      py::arg("config"), py::arg("resume_from") = std::nullopt);
  m.def(
      "infer",
      [](const std::filesystem::path& ckpt, const std::filesystem::path& frames, const std::string& direction,
         const std::filesystem::path& out) {
        auto dir = trainer::parse_direction(direction);
        py::gil_scoped_release release;
        return trainer::infer(ckpt, frames, dir, out);
      },
      py::arg("checkpoint"), py::arg("frames_dir"), py::arg("direction"), py::arg("out_dir"));
  m.def("assemble_video", &trainer::assemble_video, py::arg("frames_dir"), py::arg("fps"), py::arg("out"),
        py::call_guard<py::gil_scoped_release>());
  m.def(
      "plot_losses",
      [](const std::filesystem::path& csv, const std::filesystem::path& out) {
        auto s = cli::plot_losses(csv, out);
        py::dict series;
        for (const auto& x : s.series) {
          py::dict d;
          d["min"] = x.min;
          d["max"] = x.max;
          d["final_epoch_mean"] = x.final_epoch_mean;
          series[py::str(x.name)] = d;
        }
        py::dict result;
        result["rows"] = s.rows;
        result["series"] = series;
        return result;
      },
      py::arg("csv"), py::arg("out"));
  m.def(
      "main",
      [](const std::vector<std::string>& args) {
        py::scoped_ostream_redirect out;
        py::scoped_estream_redirect err;
        return cli::dispatch(args, std::cout, std::cerr);
      },
      py::arg("args"), "Run the command-line interface with the given arguments.");
}
