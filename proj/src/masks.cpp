#include "faceoff/masks.hpp"

#include <algorithm>
#include <fstream>

#include <opencv2/imgcodecs.hpp>

#include "json.hpp"

namespace faceoff::masks {

namespace {

double cross(const Point& o, const Point& a, const Point& b) {
  return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

}  // namespace

void LandmarkSet::validate() const {
  if (height <= 0 || width <= 0) throw Error("landmark set needs a positive image size");
  for (const auto& p : points) {
    if (!(p.x >= 0.0 && p.x <= width && p.y >= 0.0 && p.y <= height)) {
      throw Error("landmark (" + format_double(p.x) + ", " + format_double(p.y) + ") outside " +
                  std::to_string(height) + "x" + std::to_string(width) + " image");
    }
  }
  if (convex_hull(points).size() < 3) throw Error("degenerate landmark set");
}

std::vector<Point> convex_hull(std::vector<Point> pts) {
  std::sort(pts.begin(), pts.end(), [](const Point& a, const Point& b) {
    return a.x < b.x || (a.x == b.x && a.y < b.y);
  });
  pts.erase(std::unique(pts.begin(), pts.end(),
                        [](const Point& a, const Point& b) { return a.x == b.x && a.y == b.y; }),
            pts.end());
  if (pts.size() < 3) return pts;

  // Andrew's monotone chain.
  std::vector<Point> hull(2 * pts.size());
  std::size_t k = 0;
  for (const auto& p : pts) {
    while (k >= 2 && cross(hull[k - 2], hull[k - 1], p) <= 0) --k;
    hull[k++] = p;
  }
  for (std::size_t i = pts.size() - 1, lower = k + 1; i-- > 0;) {
    while (k >= lower && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
    hull[k++] = pts[i];
  }
  hull.resize(k - 1);
  return hull;
}

MaskTensor landmarks_to_mask(const LandmarkSet& lm) {
  lm.validate();
  const auto hull = convex_hull(lm.points);
  auto mask = torch::zeros({1, 1, lm.height, lm.width});
  auto acc = mask.accessor<float, 4>();

  double min_y = hull[0].y, max_y = hull[0].y;
  for (const auto& p : hull) {
    min_y = std::min(min_y, p.y);
    max_y = std::max(max_y, p.y);
  }
  const std::size_t n = hull.size();
  for (int r = 0; r < lm.height; ++r) {
    const double cy = r + 0.5;
    if (cy < min_y || cy > max_y) continue;
    for (int c = 0; c < lm.width; ++c) {
      const Point center{c + 0.5, cy};
      bool inside = true;
      for (std::size_t i = 0; i < n && inside; ++i) {
        inside = cross(hull[i], hull[(i + 1) % n], center) >= 0.0;
      }
      if (inside) acc[0][0][r][c] = 1.0f;
    }
  }
  return MaskTensor(mask);
}

LandmarkSet read_landmarks(const std::filesystem::path& path, std::optional<std::pair<int, int>> fallback_size) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open landmark file " + path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw Error(path.string() + ": " + e.what());
  }
  LandmarkSet lm;
  try {
    for (const auto& p : doc.at("points")) {
      if (!p.is_array() || p.size() != 2) throw Error(path.string() + ": every point must be [x, y]");
      lm.points.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
    }
    if (doc.contains("size")) {
      const auto& size = doc.at("size");
      if (!size.is_array() || size.size() != 2) throw Error(path.string() + ": size must be [h, w]");
      lm.height = size.at(0).get<int>();
      lm.width = size.at(1).get<int>();
      if (fallback_size && (fallback_size->first != lm.height || fallback_size->second != lm.width)) {
        throw Error(path.string() + ": landmark size " + std::to_string(lm.height) + "x" +
                    std::to_string(lm.width) + " differs from requested " +
                    std::to_string(fallback_size->first) + "x" + std::to_string(fallback_size->second));
      }
    } else if (fallback_size) {
      lm.height = fallback_size->first;
      lm.width = fallback_size->second;
    } else {
      throw Error(path.string() + ": no image size given");
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(path.string() + ": " + e.what());
  }
  return lm;
}

MaskTensor load_mask(const std::filesystem::path& path, std::optional<std::pair<int, int>> expected_size) {
  cv::Mat img = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  if (img.empty()) throw Error("cannot read mask " + path.string());
  if (img.channels() != 1 || img.depth() != CV_8U) {
    throw Error("mask " + path.string() + " must be a single-channel 8-bit image");
  }
  if (expected_size && (img.rows != expected_size->first || img.cols != expected_size->second)) {
    throw Error("mask " + path.string() + " is " + std::to_string(img.rows) + "x" + std::to_string(img.cols) +
                ", companion image is " + std::to_string(expected_size->first) + "x" +
                std::to_string(expected_size->second));
  }
  auto mask = torch::empty({1, 1, img.rows, img.cols});
  auto acc = mask.accessor<float, 4>();
  for (int r = 0; r < img.rows; ++r) {
    const auto* row = img.ptr<std::uint8_t>(r);
    for (int c = 0; c < img.cols; ++c) {
      if (row[c] != 0 && row[c] != 255) throw Error("non-binary mask " + path.string());
      acc[0][0][r][c] = row[c] == 255 ? 1.0f : 0.0f;
    }
  }
  return MaskTensor(mask);
}

void save_mask(const std::filesystem::path& path, const MaskTensor& mask) {
  const auto& t = mask.tensor();
  if (t.size(0) != 1) throw Error("save_mask expects a single mask");
  auto bytes = (t[0][0] * 255).to(torch::kUInt8).contiguous();
  cv::Mat img(static_cast<int>(t.size(2)), static_cast<int>(t.size(3)), CV_8UC1, bytes.data_ptr());
  if (!cv::imwrite(path.string(), img)) throw Error("cannot write mask " + path.string());
}

torch::Tensor apply_crop_mode(const torch::Tensor& img, const MaskTensor& mask) {
  mask.check_aligned(img);
  auto keep = mask.tensor().to(torch::kBool).expand_as(img);
  return torch::where(keep, img, torch::full_like(img, -1.0));
}

int generate_masks(const std::filesystem::path& landmarks_dir, const std::filesystem::path& out_dir,
                   std::optional<std::pair<int, int>> size) {
  if (!std::filesystem::is_directory(landmarks_dir)) {
    throw Error("landmark directory " + landmarks_dir.string() + " does not exist");
  }
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(landmarks_dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".json") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::filesystem::create_directories(out_dir);
  for (const auto& f : files) {
    auto mask = landmarks_to_mask(read_landmarks(f, size));
    save_mask(out_dir / (f.stem().string() + ".png"), mask);
  }
  return static_cast<int>(files.size());
}

}  // namespace faceoff::masks
