#include "faceoff/core.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

namespace faceoff {

std::string_view to_string(GanMode mode) {
  return mode == GanMode::lsgan ? "lsgan" : "wgan";
}

std::string_view to_string(GeneratorArch arch) {
  return arch == GeneratorArch::resnet ? "resnet" : "unet";
}

std::string_view to_string(MaskMode mode) {
  switch (mode) {
    case MaskMode::off: return "off";
    case MaskMode::crop: return "crop";
    case MaskMode::weight: return "weight";
  }
  return "off";
}

std::string_view to_string(WindowKind kind) {
  return kind == WindowKind::gaussian ? "gaussian" : "uniform";
}

std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

namespace {

std::string trim(std::string_view s) {
  auto is_space = [](unsigned char c) { return std::isspace(c) != 0; };
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return std::string(s);
}

std::string unquote(std::string s) {
  if (s.size() >= 2 && ((s.front() == '"' && s.back() == '"') || (s.front() == '\'' && s.back() == '\''))) {
    return s.substr(1, s.size() - 2);
  }
  return s;
}

// Strips a trailing '#' comment that is not inside quotes.
std::string_view strip_comment(std::string_view line) {
  char quote = 0;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quote) {
      if (c == quote) quote = 0;
    } else if (c == '"' || c == '\'') {
      quote = c;
    } else if (c == '#') {
      return line.substr(0, i);
    }
  }
  return line;
}

double parse_real(const std::string& key, const std::string& v) {
  double out = 0.0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || !std::isfinite(out)) {
    throw ConfigError(key + ": expected a real number, got '" + v + "'");
  }
  return out;
}

long long parse_integer(const std::string& key, const std::string& v) {
  long long out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw ConfigError(key + ": expected an integer, got '" + v + "'");
  }
  return out;
}

int parse_int(const std::string& key, const std::string& v) {
  long long out = parse_integer(key, v);
  if (out < INT32_MIN || out > INT32_MAX) throw ConfigError(key + ": integer out of range");
  return static_cast<int>(out);
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError(key + ": expected a boolean, got '" + v + "'");
}

template <typename E>
E parse_enum(const std::string& key, const std::string& v, std::initializer_list<E> options) {
  for (E e : options) {
    if (to_string(e) == v) return e;
  }
  std::string allowed;
  for (E e : options) allowed += (allowed.empty() ? "" : ", ") + std::string(to_string(e));
  throw ConfigError(key + ": unknown value '" + v + "' (expected one of " + allowed + ")");
}

std::pair<double, double> parse_pair(const std::string& key, std::string v) {
  std::erase_if(v, [](char c) { return c == '(' || c == ')' || c == '[' || c == ']'; });
  auto comma = v.find(',');
  if (comma == std::string::npos) throw ConfigError(key + ": expected two comma-separated reals");
  return {parse_real(key, trim(v.substr(0, comma))), parse_real(key, trim(v.substr(comma + 1)))};
}

std::string bool_text(bool b) { return b ? "true" : "false"; }

struct KeySpec {
  std::string name;
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

#define FACEOFF_REAL(KEY, FIELD)                                                                 \
  KeySpec{KEY, [](ExperimentConfig& c, const std::string& v) { c.FIELD = parse_real(KEY, v); }, \
          [](const ExperimentConfig& c) { return format_double(c.FIELD); }}
#define FACEOFF_INT(KEY, FIELD)                                                                 \
  KeySpec{KEY, [](ExperimentConfig& c, const std::string& v) { c.FIELD = parse_int(KEY, v); }, \
          [](const ExperimentConfig& c) { return std::to_string(c.FIELD); }}
#define FACEOFF_BOOL(KEY, FIELD)                                                                 \
  KeySpec{KEY, [](ExperimentConfig& c, const std::string& v) { c.FIELD = parse_bool(KEY, v); }, \
          [](const ExperimentConfig& c) { return bool_text(c.FIELD); }}
#define FACEOFF_STR(KEY, FIELD)                                                     \
  KeySpec{KEY, [](ExperimentConfig& c, const std::string& v) { c.FIELD = v; }, \
          [](const ExperimentConfig& c) { return c.FIELD; }}

const std::vector<KeySpec>& key_specs() {
  static const std::vector<KeySpec> specs = {
      KeySpec{"gan_mode",
              [](ExperimentConfig& c, const std::string& v) {
                c.gan_mode = parse_enum("gan_mode", v, {GanMode::lsgan, GanMode::wgan});
              },
              [](const ExperimentConfig& c) { return std::string(to_string(c.gan_mode)); }},
      KeySpec{"generator_arch",
              [](ExperimentConfig& c, const std::string& v) {
                c.generator_arch =
                    parse_enum("generator_arch", v, {GeneratorArch::resnet, GeneratorArch::unet});
              },
              [](const ExperimentConfig& c) { return std::string(to_string(c.generator_arch)); }},
      FACEOFF_INT("disc_layers_primary", disc_layers_primary),
      FACEOFF_BOOL("dual_discriminator", dual_discriminator),
      FACEOFF_REAL("disc_mix_lambda", disc_mix_lambda),
      FACEOFF_REAL("cycle_weight", cycle_weight),
      FACEOFF_REAL("ssim_weight", ssim_weight),
      KeySpec{"mask_mode",
              [](ExperimentConfig& c, const std::string& v) {
                c.mask_mode =
                    parse_enum("mask_mode", v, {MaskMode::off, MaskMode::crop, MaskMode::weight});
              },
              [](const ExperimentConfig& c) { return std::string(to_string(c.mask_mode)); }},
      FACEOFF_REAL("mask_weight", mask_weight),
      FACEOFF_REAL("wgan.clip_value", wgan.clip_value),
      FACEOFF_INT("wgan.n_critic", wgan.n_critic),
      FACEOFF_REAL("wgan.lr", wgan.lr),
      FACEOFF_REAL("lsgan.lr", lsgan.lr),
      KeySpec{"lsgan.adam_betas",
              [](ExperimentConfig& c, const std::string& v) {
                c.lsgan.adam_betas = parse_pair("lsgan.adam_betas", v);
              },
              [](const ExperimentConfig& c) {
                return format_double(c.lsgan.adam_betas.first) + "," +
                       format_double(c.lsgan.adam_betas.second);
              }},
      FACEOFF_INT("ssim.scales", ssim.scales),
      FACEOFF_INT("ssim.window_size", ssim.window_size),
      FACEOFF_REAL("ssim.sigma", ssim.sigma),
      KeySpec{"ssim.window",
              [](ExperimentConfig& c, const std::string& v) {
                c.ssim.window =
                    parse_enum("ssim.window", v, {WindowKind::gaussian, WindowKind::uniform});
              },
              [](const ExperimentConfig& c) { return std::string(to_string(c.ssim.window)); }},
      FACEOFF_REAL("ssim.k1", ssim.k1),
      FACEOFF_REAL("ssim.k2", ssim.k2),
      FACEOFF_REAL("ssim.dynamic_range", ssim.dynamic_range),
      FACEOFF_BOOL("ssim.literal_constants", ssim.literal_constants),
      KeySpec{"seed",
              [](ExperimentConfig& c, const std::string& v) {
                long long s = parse_integer("seed", v);
                if (s < 0) throw ConfigError("seed: must be non-negative");
                c.seed = static_cast<std::uint64_t>(s);
              },
              [](const ExperimentConfig& c) { return std::to_string(c.seed); }},
      FACEOFF_INT("epochs", epochs),
      FACEOFF_INT("batch_size", batch_size),
      FACEOFF_STR("data.domain_a_dir", data.domain_a_dir),
      FACEOFF_STR("data.domain_b_dir", data.domain_b_dir),
      FACEOFF_STR("data.mask_a_dir", data.mask_a_dir),
      FACEOFF_STR("data.mask_b_dir", data.mask_b_dir),
      FACEOFF_INT("data.resize", data.resize),
      FACEOFF_INT("data.crop", data.crop),
      FACEOFF_INT("data.n_train", data.n_train),
      FACEOFF_INT("model.ngf", model.ngf),
      FACEOFF_INT("model.ndf", model.ndf),
      FACEOFF_INT("model.n_res_blocks", model.n_res_blocks),
      FACEOFF_INT("model.unet_levels", model.unet_levels),
      FACEOFF_STR("train.out_dir", train.out_dir),
      FACEOFF_INT("train.checkpoint_every", train.checkpoint_every),
      FACEOFF_BOOL("train.deterministic", train.deterministic),
      FACEOFF_INT("train.workers", train.workers),
      FACEOFF_INT("train.image_pool", train.image_pool),
  };
  return specs;
}

#undef FACEOFF_REAL
#undef FACEOFF_INT
#undef FACEOFF_BOOL
#undef FACEOFF_STR

void check(bool ok, const std::string& message) {
  if (!ok) throw ConfigError(message);
}

void check_consistency(const ExperimentConfig& c) {
  check(c.disc_layers_primary == 3 || c.disc_layers_primary == 5,
        "disc_layers_primary must be 3 or 5");
  check(c.disc_mix_lambda >= 0.0 && c.disc_mix_lambda <= 1.0, "disc_mix_lambda must lie in [0, 1]");
  check(c.cycle_weight >= 0.0, "cycle_weight must be >= 0");
  check(c.ssim_weight >= 0.0, "ssim_weight must be >= 0");
  check(c.mask_weight >= 0.0, "mask_weight must be >= 0");
  check(c.wgan.clip_value > 0.0, "wgan.clip_value must be positive");
  check(c.wgan.n_critic >= 1, "wgan.n_critic must be >= 1");
  check(c.wgan.lr > 0.0, "wgan.lr must be positive");
  check(c.lsgan.lr > 0.0, "lsgan.lr must be positive");
  auto [b1, b2] = c.lsgan.adam_betas;
  check(b1 >= 0.0 && b1 < 1.0 && b2 >= 0.0 && b2 < 1.0, "lsgan.adam_betas must lie in [0, 1)");
  check(c.ssim.scales >= 1, "ssim.scales must be >= 1");
  check(c.ssim.window_size >= 1 && c.ssim.window_size % 2 == 1, "ssim.window_size must be odd");
  check(c.ssim.sigma > 0.0, "ssim.sigma must be positive");
  check(c.ssim.k1 > 0.0 && c.ssim.k2 > 0.0, "ssim.k1 and ssim.k2 must be positive");
  check(c.ssim.dynamic_range > 0.0, "ssim.dynamic_range must be positive");
  check(c.epochs >= 0, "epochs must be >= 0");
  check(c.batch_size >= 1, "batch_size must be >= 1");
  check(c.data.crop >= 1 && c.data.resize >= c.data.crop, "data.resize must be >= data.crop >= 1");
  check(c.data.n_train >= 0, "data.n_train must be >= 0");
  check(c.model.ngf >= 1 && c.model.ndf >= 1, "model widths must be positive");
  check(c.model.n_res_blocks >= 0, "model.n_res_blocks must be >= 0");
  check(c.model.unet_levels >= 1, "model.unet_levels must be >= 1");
  check(c.train.checkpoint_every >= 1, "train.checkpoint_every must be >= 1");
  check(c.train.workers >= 0, "train.workers must be >= 0");
  check(c.train.image_pool >= 0, "train.image_pool must be >= 0");
  if (c.mask_mode != MaskMode::off) {
    check(!c.data.mask_a_dir.empty() && !c.data.mask_b_dir.empty(),
          "mask directory required: mask_mode " + std::string(to_string(c.mask_mode)) +
              " needs data.mask_a_dir and data.mask_b_dir");
  }
}

}  // namespace

RawConfig parse_config_text(std::string_view text) {
  RawConfig raw;
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string body = trim(strip_comment(line));
    if (body.empty()) continue;
    auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(lineno) + ": expected 'key = value'");
    }
    std::string key = trim(body.substr(0, eq));
    if (key.empty()) throw ConfigError("line " + std::to_string(lineno) + ": empty key");
    if (raw.contains(key)) throw ConfigError("line " + std::to_string(lineno) + ": duplicate key " + key);
    raw[key] = unquote(trim(body.substr(eq + 1)));
  }
  return raw;
}

RawConfig read_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

void apply_override(RawConfig& raw, std::string_view assignment) {
  auto eq = assignment.find('=');
  if (eq == std::string_view::npos) {
    throw ConfigError("override '" + std::string(assignment) + "' must look like KEY=VALUE");
  }
  std::string key = trim(assignment.substr(0, eq));
  if (key.empty()) throw ConfigError("override has an empty key");
  raw[key] = unquote(trim(assignment.substr(eq + 1)));
}

ExperimentConfig validate_config(const RawConfig& raw) {
  const auto& specs = key_specs();
  for (const auto& [key, value] : raw) {
    bool known = std::any_of(specs.begin(), specs.end(), [&](const KeySpec& s) { return s.name == key; });
    if (!known) throw ConfigError("unknown config key '" + key + "'");
  }
  ExperimentConfig cfg;
  for (const auto& spec : specs) {
    if (auto it = raw.find(spec.name); it != raw.end()) spec.set(cfg, it->second);
  }
  check_consistency(cfg);
  return cfg;
}

RawConfig to_raw(const ExperimentConfig& cfg) {
  RawConfig raw;
  for (const auto& spec : key_specs()) raw[spec.name] = spec.get(cfg);
  return raw;
}

std::string serialize_config(const ExperimentConfig& cfg) {
  std::string out;
  for (const auto& spec : key_specs()) {
    std::string value = spec.get(cfg);
    bool quote = value.empty() || value.find_first_of("# \t\"'") != std::string::npos;
    out += spec.name + " = " + (quote ? "\"" + value + "\"" : value) + "\n";
  }
  return out;
}

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const auto& spec : key_specs()) k.push_back(spec.name);
    return k;
  }();
  return keys;
}

Rng Rng::substream(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  std::mt19937_64 engine(seq);
  Rng rng(0);
  rng.engine_ = engine;
  return rng;
}

int Rng::uniform_int(int lo, int hi) {
  // Rejection sampling keeps draws identical across standard library implementations.
  if (hi <= lo) return lo;
  const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % span;
  std::uint64_t draw = 0;
  do {
    draw = engine_();
  } while (draw >= limit);
  return lo + static_cast<int>(draw % span);
}

double Rng::uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

Rng seeded_rng(std::uint64_t seed) { return Rng(seed); }

ImageTensor::ImageTensor(torch::Tensor data) : data_(std::move(data)) {
  if (data_.dim() != 4 || data_.size(1) != 3) {
    throw Error("ImageTensor expects shape (N, 3, H, W), got " + std::string(c10::str(data_.sizes())));
  }
  if (data_.numel() > 0) {
    auto lo = data_.min().item<double>();
    auto hi = data_.max().item<double>();
    if (lo < -1.0 || hi > 1.0) throw Error("ImageTensor values must lie in [-1, 1]");
  }
}

MaskTensor::MaskTensor(torch::Tensor data) : data_(std::move(data)) {
  if (data_.dim() != 4 || data_.size(1) != 1) {
    throw Error("MaskTensor expects shape (N, 1, H, W), got " + std::string(c10::str(data_.sizes())));
  }
  if (data_.numel() > 0) {
    auto binary = (data_ == 0).logical_or(data_ == 1).all().item<bool>();
    if (!binary) throw Error("non-binary mask");
  }
}

void MaskTensor::check_aligned(const torch::Tensor& image) const {
  if (image.dim() != 4 || image.size(0) != data_.size(0) || image.size(2) != data_.size(2) ||
      image.size(3) != data_.size(3)) {
    throw Error("mask " + std::string(c10::str(data_.sizes())) + " is not aligned with image " +
                std::string(c10::str(image.sizes())));
  }
}

}  // namespace faceoff
