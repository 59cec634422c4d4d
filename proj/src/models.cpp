#include "faceoff/models.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <set>

namespace faceoff::models {

namespace nn = torch::nn;

namespace {

nn::InstanceNorm2d instance_norm(int channels) {
  return nn::InstanceNorm2d(nn::InstanceNorm2dOptions(channels).affine(false).track_running_stats(false));
}

nn::Conv2d conv(int in, int out, int kernel, int stride, int padding) {
  return nn::Conv2d(nn::Conv2dOptions(in, out, kernel).stride(stride).padding(padding).bias(true));
}

nn::Sequential residual_body(int dim) {
  return nn::Sequential(nn::ReflectionPad2d(nn::ReflectionPad2dOptions({1, 1, 1, 1})), conv(dim, dim, 3, 1, 0),
                        instance_norm(dim), nn::ReLU(nn::ReLUOptions().inplace(true)),
                        nn::ReflectionPad2d(nn::ReflectionPad2dOptions({1, 1, 1, 1})), conv(dim, dim, 3, 1, 0),
                        instance_norm(dim));
}

struct ResidualBlockImpl : nn::Module {
  explicit ResidualBlockImpl(int dim) : body(register_module("body", residual_body(dim))) {}
  torch::Tensor forward(const torch::Tensor& x) { return x + body->forward(x); }
  nn::Sequential body;
};
TORCH_MODULE(ResidualBlock);

std::vector<std::int64_t> shape_of(const torch::Tensor& t) { return t.sizes().vec(); }

}  // namespace

ResnetGeneratorImpl::ResnetGeneratorImpl(int ngf, int n_blocks) : GeneratorImpl(GeneratorArch::resnet) {
  constexpr int kDownsamples = 2;
  nn::Sequential seq(nn::ReflectionPad2d(nn::ReflectionPad2dOptions({3, 3, 3, 3})), conv(3, ngf, 7, 1, 0),
                     instance_norm(ngf), nn::ReLU(nn::ReLUOptions().inplace(true)));
  int width = ngf;
  for (int i = 0; i < kDownsamples; ++i) {
    seq->push_back(conv(width, width * 2, 3, 2, 1));
    seq->push_back(instance_norm(width * 2));
    seq->push_back(nn::ReLU(nn::ReLUOptions().inplace(true)));
    width *= 2;
  }
  for (int i = 0; i < n_blocks; ++i) seq->push_back(ResidualBlock(width));
  for (int i = 0; i < kDownsamples; ++i) {
    seq->push_back(nn::ConvTranspose2d(
        nn::ConvTranspose2dOptions(width, width / 2, 3).stride(2).padding(1).output_padding(1).bias(true)));
    seq->push_back(instance_norm(width / 2));
    seq->push_back(nn::ReLU(nn::ReLUOptions().inplace(true)));
    width /= 2;
  }
  seq->push_back(nn::ReflectionPad2d(nn::ReflectionPad2dOptions({3, 3, 3, 3})));
  seq->push_back(conv(ngf, 3, 7, 1, 0));
  seq->push_back(nn::Tanh());
  model_ = register_module("model", seq);
}

torch::Tensor ResnetGeneratorImpl::forward(const torch::Tensor& x) { return model_->forward(x); }

UnetGeneratorImpl::UnetGeneratorImpl(int ngf, int levels) : GeneratorImpl(GeneratorArch::unet) {
  if (levels < 1) throw Error("U-Net needs at least one level");
  // Encoder widths: ngf, 2ngf, 4ngf, then 8ngf for every deeper level.
  std::vector<int> width(levels);
  for (int k = 0; k < levels; ++k) width[k] = ngf * std::min(1 << k, 8);

  for (int k = 0; k < levels; ++k) {
    const int in = k == 0 ? 3 : width[k - 1];
    nn::Sequential block;
    if (k > 0) block->push_back(nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(0.2)));
    block->push_back(conv(in, width[k], 4, 2, 1));
    // No normalization on the outermost and innermost encoder levels.
    if (k > 0 && k < levels - 1) block->push_back(instance_norm(width[k]));
    down_.push_back(register_module("down" + std::to_string(k), block));
  }
  up_.resize(levels);
  for (int k = levels - 1; k >= 0; --k) {
    const int in = k == levels - 1 ? width[k] : 2 * width[k];
    const int out = k == 0 ? 3 : width[k - 1];
    nn::Sequential block{nn::ReLU(nn::ReLUOptions())};
    block->push_back(nn::ConvTranspose2d(nn::ConvTranspose2dOptions(in, out, 4).stride(2).padding(1).bias(true)));
    if (k > 0) {
      block->push_back(instance_norm(out));
    } else {
      block->push_back(nn::Tanh());
    }
    up_[k] = register_module("up" + std::to_string(k), block);
  }
}

std::pair<torch::Tensor, std::vector<SkipLink>> UnetGeneratorImpl::forward_traced(const torch::Tensor& x) {
  const int levels = this->levels();
  if (x.size(2) % min_input_size() != 0 || x.size(3) % min_input_size() != 0) {
    throw Error("U-Net with " + std::to_string(levels) + " levels needs spatial size divisible by " +
                std::to_string(min_input_size()));
  }
  std::vector<torch::Tensor> encoded;
  encoded.reserve(levels);
  torch::Tensor h = x;
  for (int k = 0; k < levels; ++k) {
    h = down_[k]->forward(h);
    encoded.push_back(h);
  }
  std::vector<SkipLink> links;
  torch::Tensor d = up_[levels - 1]->forward(encoded[levels - 1]);
  for (int k = levels - 2; k >= 0; --k) {
    links.push_back({k, k, shape_of(d), shape_of(encoded[k])});
    d = up_[k]->forward(torch::cat({d, encoded[k]}, 1));
  }
  return {d, links};
}

torch::Tensor UnetGeneratorImpl::forward(const torch::Tensor& x) { return forward_traced(x).first; }

DiscriminatorImpl::DiscriminatorImpl(const DiscriminatorOptions& opts) : opts_(opts) {
  if (opts.n_layers != 3 && opts.n_layers != 5) {
    throw Error("unsupported discriminator depth " + std::to_string(opts.n_layers) + " (expected 3 or 5)");
  }
  const int ndf = opts.ndf;
  auto lrelu = [] { return nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(0.2).inplace(true)); };
  nn::Sequential seq(conv(3, ndf, 4, 2, 1), lrelu());
  int width = ndf;
  for (int n = 1; n < opts.n_layers; ++n) {
    const int next = ndf * std::min(1 << n, 8);
    seq->push_back(conv(width, next, 4, 2, 1));
    seq->push_back(instance_norm(next));
    seq->push_back(lrelu());
    width = next;
  }
  const int head = ndf * std::min(1 << opts.n_layers, 8);
  seq->push_back(conv(width, head, 4, 1, 1));
  seq->push_back(instance_norm(head));
  seq->push_back(lrelu());
  seq->push_back(conv(head, 1, 4, 1, 1));
  if (opts.sigmoid_output) seq->push_back(nn::Sigmoid());
  model_ = register_module("model", seq);
}

torch::Tensor DiscriminatorImpl::forward(const torch::Tensor& x) { return model_->forward(x); }

DualDiscriminatorImpl::DualDiscriminatorImpl(Discriminator primary, Discriminator deep, double mix_lambda)
    : shallow_(register_module("shallow", std::move(primary))),
      deep_(register_module("deep", std::move(deep))),
      mix_lambda_(mix_lambda) {
  if (!(mix_lambda >= 0.0 && mix_lambda <= 1.0)) throw Error("mix_lambda must lie in [0, 1]");
}

DualDiscriminatorImpl::DualDiscriminatorImpl(Discriminator single)
    : shallow_(register_module("shallow", std::move(single))) {}

std::vector<torch::Tensor> DualDiscriminatorImpl::forward(const torch::Tensor& x) {
  std::vector<torch::Tensor> out{shallow_->forward(x)};
  if (deep_) out.push_back(deep_->forward(x));
  return out;
}

std::vector<Discriminator> DualDiscriminatorImpl::members() const {
  std::vector<Discriminator> m{shallow_};
  if (deep_) m.push_back(deep_);
  return m;
}

torch::Generator make_init_generator(std::uint64_t seed) {
  return at::make_generator<at::CPUGeneratorImpl>(seed);
}

void init_weights(nn::Module& module, torch::Generator& gen) {
  torch::NoGradGuard no_grad;
  for (auto& p : module.named_parameters(true)) {
    if (p.key().ends_with("bias")) {
      p.value().zero_();
    } else {
      p.value().normal_(0.0, 0.02, gen);
    }
  }
}

Generator build_generator(const ExperimentConfig& cfg, torch::Generator& gen) {
  Generator g;
  switch (cfg.generator_arch) {
    case GeneratorArch::resnet:
      g = std::make_shared<ResnetGeneratorImpl>(cfg.model.ngf, cfg.model.n_res_blocks);
      break;
    case GeneratorArch::unet:
      g = std::make_shared<UnetGeneratorImpl>(cfg.model.ngf, cfg.model.unet_levels);
      break;
  }
  if (!g) throw Error("unknown generator architecture");
  init_weights(*g, gen);
  return g;
}

Discriminator build_discriminator(int n_layers, torch::Generator& gen, int ndf) {
  Discriminator d(DiscriminatorOptions{n_layers, ndf, false});
  init_weights(*d, gen);
  return d;
}

DualDiscriminator build_domain_discriminator(const ExperimentConfig& cfg, torch::Generator& gen) {
  if (cfg.dual_discriminator) {
    auto shallow = build_discriminator(3, gen, cfg.model.ndf);
    auto deep = build_discriminator(5, gen, cfg.model.ndf);
    return DualDiscriminator(shallow, deep, cfg.disc_mix_lambda);
  }
  return DualDiscriminator(build_discriminator(cfg.disc_layers_primary, gen, cfg.model.ndf));
}

std::pair<torch::Tensor, torch::Tensor> dual_forward(DualDiscriminator& d, const torch::Tensor& x) {
  if (!d->is_dual()) throw Error("dual_forward needs a dual discriminator");
  auto maps = d->forward(x);
  return {maps[0], maps[1]};
}

void clip_parameters(nn::Module& d, double c) {
  if (!(c > 0.0)) throw Error("clip value must be positive");
  torch::NoGradGuard no_grad;
  for (auto& p : d.parameters(true)) p.clamp_(-c, c);
}

double max_abs_parameter(const nn::Module& m) {
  double best = 0.0;
  for (const auto& p : m.parameters(true)) {
    if (p.numel() > 0) best = std::max(best, p.detach().abs().max().item<double>());
  }
  return best;
}

std::int64_t patch_map_size(std::int64_t input, int n_layers) {
  // k4 s2 p1 halves (floor); k4 s1 p1 shrinks by one.
  auto out = [](std::int64_t in, int stride) { return (in + 2 - 4) / stride + 1; };
  std::int64_t size = input;
  for (int i = 0; i < n_layers; ++i) size = out(size, 2);
  size = out(size, 1);
  return out(size, 1);
}

// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'F', 'O', 'C', 'K', 'P', 'T', '\0', '\0'};

enum class DType : std::uint8_t { f32 = 0, f64 = 1, i64 = 2 };

template <typename T>
void write_pod(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw Error("truncated checkpoint");
  return v;
}

void write_string(std::ostream& out, const std::string& s) {
  write_pod<std::uint64_t>(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& in) {
  auto n = read_pod<std::uint64_t>(in);
  if (n > (std::uint64_t{1} << 34)) throw Error("corrupt checkpoint string length");
  std::string s(n, '\0');
  in.read(s.data(), static_cast<std::streamsize>(n));
  if (!in) throw Error("truncated checkpoint");
  return s;
}

void write_pairs(std::ostream& out, const std::vector<std::pair<std::string, std::string>>& pairs) {
  write_pod<std::uint64_t>(out, pairs.size());
  for (const auto& [k, v] : pairs) {
    write_string(out, k);
    write_string(out, v);
  }
}

std::vector<std::pair<std::string, std::string>> read_pairs(std::istream& in) {
  auto n = read_pod<std::uint64_t>(in);
  std::vector<std::pair<std::string, std::string>> pairs;
  for (std::uint64_t i = 0; i < n; ++i) {
    auto k = read_string(in);
    pairs.emplace_back(std::move(k), read_string(in));
  }
  return pairs;
}

DType dtype_tag(const torch::Tensor& t) {
  switch (t.scalar_type()) {
    case torch::kFloat: return DType::f32;
    case torch::kDouble: return DType::f64;
    case torch::kLong: return DType::i64;
    default: throw Error("checkpoint: unsupported tensor dtype " + std::string(c10::toString(t.scalar_type())));
  }
}

torch::ScalarType scalar_type(DType tag) {
  switch (tag) {
    case DType::f32: return torch::kFloat;
    case DType::f64: return torch::kDouble;
    case DType::i64: return torch::kLong;
  }
  throw Error("checkpoint: unknown dtype tag");
}

}  // namespace

const std::string* Checkpoint::find_meta(const std::string& key) const {
  for (const auto& [k, v] : meta) {
    if (k == key) return &v;
  }
  return nullptr;
}

const std::string* Checkpoint::find_blob(const std::string& key) const {
  for (const auto& [k, v] : blobs) {
    if (k == key) return &v;
  }
  return nullptr;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write checkpoint " + path.string());
    out.write(kMagic, sizeof(kMagic));
    write_pod<std::uint32_t>(out, kCheckpointVersion);
    write_string(out, serialize_config(ckpt.config));
    write_pairs(out, ckpt.meta);
    write_pod<std::uint64_t>(out, ckpt.tensors.size());
    for (const auto& [name, tensor] : ckpt.tensors) {
      auto t = tensor.detach().contiguous().cpu();
      write_string(out, name);
      write_pod<std::uint8_t>(out, static_cast<std::uint8_t>(dtype_tag(t)));
      write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(t.dim()));
      for (auto d : t.sizes()) write_pod<std::int64_t>(out, d);
      out.write(static_cast<const char*>(t.data_ptr()), static_cast<std::streamsize>(t.nbytes()));
    }
    write_pairs(out, ckpt.blobs);
    if (!out) throw Error("failed writing checkpoint " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint " + path.string());
  char magic[sizeof(kMagic)];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw Error(path.string() + " is not a faceoff checkpoint");
  }
  auto version = read_pod<std::uint32_t>(in);
  if (version != kCheckpointVersion) {
    throw Error("unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ckpt;
  ckpt.config = validate_config(parse_config_text(read_string(in)));
  ckpt.meta = read_pairs(in);
  auto n = read_pod<std::uint64_t>(in);
  for (std::uint64_t i = 0; i < n; ++i) {
    auto name = read_string(in);
    auto tag = static_cast<DType>(read_pod<std::uint8_t>(in));
    auto ndim = read_pod<std::uint32_t>(in);
    if (ndim > 8) throw Error("corrupt checkpoint tensor rank");
    std::vector<std::int64_t> dims(ndim);
    for (auto& d : dims) {
      d = read_pod<std::int64_t>(in);
      if (d < 0) throw Error("corrupt checkpoint tensor shape");
    }
    auto t = torch::empty(dims, torch::TensorOptions().dtype(scalar_type(tag)));
    in.read(static_cast<char*>(t.data_ptr()), static_cast<std::streamsize>(t.nbytes()));
    if (!in) throw Error("truncated checkpoint tensor " + name);
    ckpt.tensors.emplace_back(std::move(name), std::move(t));
  }
  ckpt.blobs = read_pairs(in);
  return ckpt;
}

void export_parameters(const nn::Module& m, const std::string& prefix, Checkpoint& ckpt) {
  for (const auto& p : m.named_parameters(true)) ckpt.tensors.emplace_back(prefix + p.key(), p.value().detach().clone());
  for (const auto& b : m.named_buffers(true)) ckpt.tensors.emplace_back(prefix + b.key(), b.value().detach().clone());
}

void import_parameters(nn::Module& m, const std::string& prefix, const Checkpoint& ckpt) {
  std::map<std::string, const torch::Tensor*> scoped;
  for (const auto& [name, t] : ckpt.tensors) {
    if (name.starts_with(prefix)) scoped[name.substr(prefix.size())] = &t;
  }
  torch::NoGradGuard no_grad;
  std::set<std::string> used;
  auto copy_into = [&](const std::string& name, torch::Tensor& target) {
    auto it = scoped.find(name);
    if (it == scoped.end()) throw Error("checkpoint is missing tensor " + prefix + name);
    if (!it->second->sizes().equals(target.sizes())) {
      throw Error("checkpoint tensor " + prefix + name + " has shape " + c10::str(it->second->sizes()) +
                  ", model expects " + c10::str(target.sizes()));
    }
    target.copy_(*it->second);
    used.insert(name);
  };
  for (auto& p : m.named_parameters(true)) copy_into(p.key(), p.value());
  for (auto& b : m.named_buffers(true)) copy_into(b.key(), b.value());
  for (const auto& [name, t] : scoped) {
    if (!used.contains(name)) throw Error("checkpoint has unexpected tensor " + prefix + name);
  }
}

}  // namespace faceoff::models
