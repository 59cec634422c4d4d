#include "faceoff/data.hpp"

#include <algorithm>
#include <cstdlib>
#include <set>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

namespace faceoff::data {

namespace fs = std::filesystem;

namespace {

const std::set<std::string> kImageExtensions = {".png", ".jpg", ".jpeg", ".bmp", ".ppm", ".tif", ".tiff"};

bool is_image(const fs::path& p) {
  auto ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return kImageExtensions.contains(ext);
}

}  // namespace

cv::Mat read_image(const fs::path& path) {
  cv::Mat img = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (img.empty()) throw Error("cannot read image " + path.string());
  return img;
}

void write_image(const fs::path& path, const cv::Mat& bgr) {
  if (!cv::imwrite(path.string(), bgr)) throw Error("cannot write image " + path.string());
}

torch::Tensor normalize(const cv::Mat& bgr) {
  if (bgr.type() != CV_8UC3) throw Error("normalize expects an 8-bit 3-channel image");
  cv::Mat rgb;
  cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
  auto t = torch::from_blob(rgb.data, {rgb.rows, rgb.cols, 3}, torch::kUInt8).clone();
  return t.permute({2, 0, 1}).unsqueeze(0).to(torch::kFloat).div(127.5).sub(1.0).contiguous();
}

cv::Mat denormalize(const torch::Tensor& img) {
  auto t = img.detach().cpu();
  if (t.dim() == 4) {
    if (t.size(0) != 1) throw Error("denormalize expects a single image");
    t = t[0];
  }
  if (t.dim() != 3 || t.size(0) != 3) throw Error("denormalize expects (3, H, W)");
  auto bytes = t.to(torch::kDouble).add(1.0).mul(127.5).round().clamp(0, 255).to(torch::kUInt8);
  bytes = bytes.permute({1, 2, 0}).contiguous();
  cv::Mat rgb(static_cast<int>(bytes.size(0)), static_cast<int>(bytes.size(1)), CV_8UC3, bytes.data_ptr());
  cv::Mat bgr;
  cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
  return bgr;
}

fs::path FrameDataset::mask_path(std::size_t index) const {
  if (!mask_dir) throw Error("dataset " + root.string() + " has no mask directory");
  return *mask_dir / (frames.at(index).stem().string() + ".png");
}

std::vector<fs::path> list_frames(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw Error("frame directory " + dir.string() + " does not exist");
  std::vector<fs::path> frames;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && is_image(entry.path())) frames.push_back(entry.path());
  }
  std::sort(frames.begin(), frames.end(),
            [](const fs::path& a, const fs::path& b) { return a.filename().string() < b.filename().string(); });
  return frames;
}

FrameDataset open_dataset(const fs::path& dir, std::optional<fs::path> mask_dir) {
  FrameDataset ds;
  ds.root = dir;
  ds.frames = list_frames(dir);
  if (mask_dir) {
    if (!fs::is_directory(*mask_dir)) throw Error("mask directory " + mask_dir->string() + " does not exist");
    ds.mask_dir = mask_dir;
    for (std::size_t i = 0; i < ds.size(); ++i) {
      if (!fs::exists(ds.mask_path(i))) {
        throw Error("frame " + ds.frames[i].filename().string() + " has no mask " + ds.mask_path(i).string());
      }
    }
  }
  return ds;
}

std::pair<FrameDataset, FrameDataset> split_dataset(const FrameDataset& ds, std::size_t n_train) {
  if (n_train > ds.size()) {
    throw Error("cannot put " + std::to_string(n_train) + " frames in the training split of a " +
                std::to_string(ds.size()) + "-frame dataset");
  }
  FrameDataset train = ds;
  FrameDataset test = ds;
  train.split = Split::train;
  test.split = Split::test;
  train.frames.assign(ds.frames.begin(), ds.frames.begin() + static_cast<std::ptrdiff_t>(n_train));
  test.frames.assign(ds.frames.begin() + static_cast<std::ptrdiff_t>(n_train), ds.frames.end());
  return {std::move(train), std::move(test)};
}

std::string decode_template() {
  const char* env = std::getenv("FACEOFF_FFDECODE");
  return env && *env ? env : kDefaultDecodeTemplate;
}

TempDir::TempDir() {
  std::string pattern = (fs::temp_directory_path() / "faceoff-XXXXXX").string();
  if (::mkdtemp(pattern.data()) == nullptr) throw Error("cannot create temporary directory");
  path_ = pattern;
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

std::string fill_template(std::string text, const std::string& key, const std::string& value) {
  for (auto pos = text.find(key); pos != std::string::npos; pos = text.find(key, pos + value.size())) {
    text.replace(pos, key.size(), value);
  }
  return text;
}

std::string shell_quote(const std::string& s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\'') {
      out += "'\\''";
    } else {
      out += c;
    }
  }
  return out + "'";
}

cv::Mat resize_and_center_crop(const cv::Mat& img, int size) {
  const int short_side = std::min(img.rows, img.cols);
  const double scale = static_cast<double>(size) / short_side;
  const int h = std::max(size, static_cast<int>(std::lround(img.rows * scale)));
  const int w = std::max(size, static_cast<int>(std::lround(img.cols * scale)));
  cv::Mat resized;
  cv::resize(img, resized, cv::Size(w, h), 0, 0, scale < 1.0 ? cv::INTER_AREA : cv::INTER_LINEAR);
  const int top = (h - size) / 2;
  const int left = (w - size) / 2;
  return resized(cv::Rect(left, top, size, size)).clone();
}

int extract_frames(const fs::path& video_path, int count, const fs::path& out_dir, int storage_size) {
  if (count < 0) throw Error("frame count must be >= 0");
  if (storage_size < 1) throw Error("storage size must be positive");
  std::optional<TempDir> scratch;
  std::vector<fs::path> decoded;
  if (fs::is_directory(video_path)) {
    decoded = list_frames(video_path);
  } else {
    if (!fs::exists(video_path)) throw Error("video " + video_path.string() + " does not exist");
    scratch.emplace();
    std::string cmd = decode_template();
    cmd = fill_template(cmd, "{input}", shell_quote(video_path.string()));
    cmd = fill_template(cmd, "{outdir}", shell_quote(scratch->path().string()));
    if (std::system(cmd.c_str()) != 0) throw Error("decoder failed on " + video_path.string() + ": " + cmd);
    decoded = list_frames(scratch->path());
    if (decoded.empty()) throw Error("decoder produced no frames from " + video_path.string());
  }
  const auto available = static_cast<long long>(decoded.size());
  if (count > available) {
    throw Error("requested " + std::to_string(count) + " frames but only " + std::to_string(available) +
                " are available");
  }
  fs::create_directories(out_dir);
  for (int i = 0; i < count; ++i) {
    const auto src = static_cast<std::size_t>(static_cast<long long>(i) * available / count);
    char name[32];
    std::snprintf(name, sizeof(name), "%06d.png", i);
    write_image(out_dir / name, resize_and_center_crop(read_image(decoded[src]), storage_size));
  }
  return count;
}

CropOffset choose_crop(int height, int width, int crop, Rng* rng, bool training) {
  if (height < crop || width < crop) {
    throw Error("frame " + std::to_string(height) + "x" + std::to_string(width) + " is smaller than crop " +
                std::to_string(crop));
  }
  if (!training) return {(height - crop) / 2, (width - crop) / 2};
  if (rng == nullptr) throw Error("training crop needs an rng");
  CropOffset off;
  off.top = rng->uniform_int(0, height - crop);
  off.left = rng->uniform_int(0, width - crop);
  return off;
}

torch::Tensor crop(const torch::Tensor& t, const CropOffset& offset, int size) {
  if (offset.top < 0 || offset.left < 0 || offset.top + size > t.size(2) || offset.left + size > t.size(3)) {
    throw Error("crop window outside tensor");
  }
  return t.slice(2, offset.top, offset.top + size).slice(3, offset.left, offset.left + size);
}

Preprocessed preprocess(const cv::Mat& frame, Rng* rng, bool training, int crop_size) {
  auto offset = choose_crop(frame.rows, frame.cols, crop_size, rng, training);
  auto img = crop(normalize(frame), offset, crop_size).contiguous();
  return {ImageTensor(img), offset};
}

std::pair<std::size_t, std::size_t> sample_unaligned_indices(std::size_t size_a, std::size_t size_b, Rng& rng) {
  if (size_a == 0 || size_b == 0) throw Error("cannot sample from an empty dataset");
  auto a = static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(size_a) - 1));
  auto b = static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(size_b) - 1));
  return {a, b};
}

FrameStore::FrameStore(const FrameDataset& ds, bool load_masks) {
  if (load_masks && !ds.mask_dir) throw Error("dataset " + ds.root.string() + " has no masks to load");
  for (std::size_t i = 0; i < ds.size(); ++i) {
    cv::Mat img = read_image(ds.frames[i]);
    images_.push_back(normalize(img));
    names_.push_back(ds.frames[i].filename().string());
    if (load_masks) {
      cv::Mat m = cv::imread(ds.mask_path(i).string(), cv::IMREAD_UNCHANGED);
      if (m.empty()) throw Error("cannot read mask " + ds.mask_path(i).string());
      if (m.channels() != 1 || m.depth() != CV_8U) {
        throw Error("mask " + ds.mask_path(i).string() + " must be a single-channel 8-bit image");
      }
      if (m.rows != img.rows || m.cols != img.cols) {
        throw Error("mask " + ds.mask_path(i).string() + " size differs from frame " + ds.frames[i].string());
      }
      auto t = torch::from_blob(m.data, {1, 1, m.rows, m.cols}, torch::kUInt8).clone();
      if (!(t == 0).logical_or(t == 255).all().item<bool>()) {
        throw Error("non-binary mask " + ds.mask_path(i).string());
      }
      masks_.push_back((t == 255).to(torch::kFloat));
    }
  }
}

FrameStore::FrameStore(std::vector<torch::Tensor> images, std::vector<torch::Tensor> masks)
    : images_(std::move(images)), masks_(std::move(masks)) {
  if (!masks_.empty() && masks_.size() != images_.size()) throw Error("FrameStore needs one mask per image");
  for (std::size_t i = 0; i < images_.size(); ++i) {
    if (images_[i].dim() != 4 || images_[i].size(0) != 1 || images_[i].size(1) != 3) {
      throw Error("FrameStore images must be (1, 3, H, W)");
    }
    if (!masks_.empty()) MaskTensor(masks_[i]).check_aligned(images_[i]);
    names_.push_back(std::to_string(i));
  }
}

Sample take_sample(const FrameStore& store, std::size_t index, Rng* rng, bool training, int crop_size) {
  const auto& img = store.image(index);
  Sample s;
  s.index = index;
  s.offset = choose_crop(static_cast<int>(img.size(2)), static_cast<int>(img.size(3)), crop_size, rng, training);
  s.image = crop(img, s.offset, crop_size).contiguous();
  if (store.has_masks()) s.mask = crop(store.mask(index), s.offset, crop_size).contiguous();
  return s;
}

std::pair<Sample, Sample> sample_unaligned_pair(const FrameStore& a, const FrameStore& b, Rng& rng, int crop_size,
                                                bool training) {
  auto [ia, ib] = sample_unaligned_indices(a.size(), b.size(), rng);
  auto sa = take_sample(a, ia, &rng, training, crop_size);
  auto sb = take_sample(b, ib, &rng, training, crop_size);
  return {std::move(sa), std::move(sb)};
}

}  // namespace faceoff::data
