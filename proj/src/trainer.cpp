#include "faceoff/trainer.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "faceoff/masks.hpp"

namespace faceoff::trainer {

namespace fs = std::filesystem;

namespace {

// Substream ids under the master seed.
constexpr std::uint64_t kSampleStream = 1;
constexpr std::uint64_t kPoolStream = 2;

void set_requires_grad(torch::nn::Module& m, bool flag) {
  for (auto& p : m.parameters(true)) p.set_requires_grad(flag);
}

std::vector<torch::Tensor> parameters_of(std::initializer_list<const torch::nn::Module*> modules) {
  std::vector<torch::Tensor> params;
  for (const auto* m : modules) {
    auto p = m->parameters(true);
    params.insert(params.end(), p.begin(), p.end());
  }
  return params;
}

std::unique_ptr<torch::optim::Optimizer> make_optimizer(const ExperimentConfig& cfg,
                                                        std::vector<torch::Tensor> params) {
  if (cfg.gan_mode == GanMode::wgan) {
    return std::make_unique<torch::optim::RMSprop>(std::move(params), torch::optim::RMSpropOptions(cfg.wgan.lr));
  }
  auto [b1, b2] = cfg.lsgan.adam_betas;
  return std::make_unique<torch::optim::Adam>(std::move(params),
                                              torch::optim::AdamOptions(cfg.lsgan.lr).betas({b1, b2}));
}

std::string save_optimizer(const torch::optim::Optimizer& opt) {
  torch::serialize::OutputArchive archive;
  opt.save(archive);
  std::ostringstream out;
  archive.save_to(out);
  return out.str();
}

void load_optimizer(torch::optim::Optimizer& opt, const std::string& blob) {
  std::istringstream in(blob);
  torch::serialize::InputArchive archive;
  archive.load_from(in);
  opt.load(archive);
}

/// Loss of one domain's discriminator set: the single member, or the lambda mix of the pair.
torch::Tensor mix(const models::DualDiscriminator& d, const std::vector<torch::Tensor>& member_losses) {
  if (d->is_dual()) return losses::dual_disc_gan_loss(member_losses[0], member_losses[1], d->mix_lambda());
  return member_losses[0];
}

struct Prepared {
  torch::Tensor a, b, mask_a, mask_b;
};

Prepared prepare(const ExperimentConfig& cfg, const Batch& batch) {
  Prepared p{batch.a, batch.b, batch.mask_a, batch.mask_b};
  if (cfg.mask_mode == MaskMode::off) return p;
  if (!p.mask_a.defined() || !p.mask_b.defined()) {
    throw Error("mask required but absent: mask_mode " + std::string(to_string(cfg.mask_mode)));
  }
  if (cfg.mask_mode == MaskMode::crop) {
    p.a = masks::apply_crop_mode(p.a, MaskTensor(p.mask_a));
    p.b = masks::apply_crop_mode(p.b, MaskTensor(p.mask_b));
  }
  return p;
}

torch::Tensor cycle_term(const ExperimentConfig& cfg, const torch::Tensor& x, const torch::Tensor& x_rec,
                         const torch::Tensor& mask) {
  if (cfg.mask_mode == MaskMode::weight) return losses::masked_cycle_loss(x, x_rec, mask, cfg.mask_weight);
  return losses::cycle_l1(x, x_rec);
}

using Adversarial = std::function<torch::Tensor(const torch::Tensor&)>;

/// One generator update over both translation directions.
losses::LossBundle generator_update(TrainState& s, const Prepared& p, const Adversarial& adversarial,
                                    StepTensors& captured) {
  const auto& cfg = s.config;
  set_requires_grad(*s.d_a, false);
  set_requires_grad(*s.d_b, false);
  s.opt_g->zero_grad();

  auto fake_b = s.g_ab->forward(p.a);
  auto rec_a = s.g_ba->forward(fake_b);
  auto fake_a = s.g_ba->forward(p.b);
  auto rec_b = s.g_ab->forward(fake_a);

  auto d_b_out = s.d_b->forward(fake_b);
  auto d_a_out = s.d_a->forward(fake_a);
  std::vector<torch::Tensor> adv_b, adv_a;
  for (const auto& o : d_b_out) adv_b.push_back(adversarial(o));
  for (const auto& o : d_a_out) adv_a.push_back(adversarial(o));

  losses::LossBundle bundle;
  bundle.gan_g = mix(s.d_b, adv_b) + mix(s.d_a, adv_a);
  bundle.cycle = cycle_term(cfg, p.a, rec_a, p.mask_a) + cycle_term(cfg, p.b, rec_b, p.mask_b);
  if (cfg.ssim_weight > 0.0) {
    auto ssim_cfg = losses::SsimConfig::from(cfg.ssim);
    bundle.ssim_term = losses::ssim_loss(p.a, rec_a, ssim_cfg) + losses::ssim_loss(p.b, rec_b, ssim_cfg);
  }
  bundle.total_g = losses::total_generator_objective(bundle, cfg);
  bundle.total_g.backward();
  s.opt_g->step();

  set_requires_grad(*s.d_a, true);
  set_requires_grad(*s.d_b, true);

  captured.real_a = p.a;
  captured.real_b = p.b;
  captured.mask_a = p.mask_a;
  captured.mask_b = p.mask_b;
  captured.fake_a = fake_a.detach();
  captured.fake_b = fake_b.detach();
  captured.rec_a = rec_a.detach();
  captured.rec_b = rec_b.detach();
  for (const auto& o : d_a_out) captured.d_a_on_fake.push_back(o.detach());
  for (const auto& o : d_b_out) captured.d_b_on_fake.push_back(o.detach());
  return bundle;
}

LossRecord make_record(const TrainState& s, const losses::LossBundle& bundle) {
  LossRecord r;
  r.step = s.step;
  r.epoch = s.epoch + 1;
  r.loss_g = bundle.gan_g.item<double>();
  r.loss_d = bundle.gan_d.item<double>();
  r.loss_cyc = bundle.cycle.item<double>();
  return r;
}

void check_linear_outputs(const TrainState& s) {
  for (const auto* d : {&s.d_a, &s.d_b}) {
    for (const auto& m : (*d)->members()) {
      if (m->has_sigmoid_output()) {
        throw Error("wgan mode requires linear discriminator outputs, found a sigmoid output");
      }
    }
  }
}

std::string format_row(const LossRecord& r) {
  return std::to_string(r.step) + "," + std::to_string(r.epoch) + "," + format_double(r.loss_g) + "," +
         format_double(r.loss_d) + "," + format_double(r.loss_cyc);
}

}  // namespace

// ---------------------------------------------------------------------------

BatchSource::BatchSource(std::shared_ptr<const data::FrameStore> a, std::shared_ptr<const data::FrameStore> b,
                         const ExperimentConfig& cfg)
    : a_(std::move(a)), b_(std::move(b)), seed_(cfg.seed), batch_size_(cfg.batch_size), crop_(cfg.data.crop) {
  if (!a_ || !b_ || a_->size() == 0 || b_->size() == 0) throw Error("cannot sample from an empty dataset");
}

Batch BatchSource::draw(std::uint64_t index) const {
  auto rng = Rng::substream(seed_, kSampleStream, index);
  Batch batch;
  std::vector<torch::Tensor> a, b, ma, mb;
  for (int i = 0; i < batch_size_; ++i) {
    auto [sa, sb] = data::sample_unaligned_pair(*a_, *b_, rng, crop_);
    a.push_back(sa.image);
    b.push_back(sb.image);
    if (sa.mask.defined()) ma.push_back(sa.mask);
    if (sb.mask.defined()) mb.push_back(sb.mask);
    batch.index_a.push_back(sa.index);
    batch.index_b.push_back(sb.index);
    batch.offset_a.push_back(sa.offset);
    batch.offset_b.push_back(sb.offset);
  }
  batch.a = torch::cat(a, 0);
  batch.b = torch::cat(b, 0);
  if (!ma.empty()) batch.mask_a = torch::cat(ma, 0);
  if (!mb.empty()) batch.mask_b = torch::cat(mb, 0);
  return batch;
}

std::size_t BatchSource::steps_per_epoch() const {
  const auto n = std::max(a_->size(), b_->size());
  return (n + batch_size_ - 1) / batch_size_;
}

PrefetchingLoader::PrefetchingLoader(const BatchSource& source, std::uint64_t first, int workers,
                                     std::size_t capacity)
    : source_(source), capacity_(std::max<std::size_t>(capacity, 1)), next_claim_(first), next_take_(first) {
  for (int i = 0; i < std::max(workers, 1); ++i) threads_.emplace_back([this] { work(); });
}

PrefetchingLoader::~PrefetchingLoader() {
  {
    std::lock_guard lock(mu_);
    stopping_ = true;
  }
  cv_.notify_all();
  for (auto& t : threads_) t.join();
}

void PrefetchingLoader::work() {
  for (;;) {
    std::uint64_t index = 0;
    {
      std::unique_lock lock(mu_);
      cv_.wait(lock, [&] { return stopping_ || next_claim_ < next_take_ + capacity_; });
      if (stopping_) return;
      index = next_claim_++;
    }
    Batch batch;
    std::string error;
    try {
      batch = source_.draw(index);
    } catch (const std::exception& e) {
      error = e.what();
    }
    {
      std::lock_guard lock(mu_);
      if (!error.empty() && failure_.empty()) failure_ = error;
      ready_.emplace(index, std::move(batch));
    }
    cv_.notify_all();
  }
}

Batch PrefetchingLoader::next() {
  std::unique_lock lock(mu_);
  cv_.wait(lock, [&] { return ready_.contains(next_take_) || !failure_.empty(); });
  if (!failure_.empty()) throw Error("data loading failed: " + failure_);
  auto node = ready_.extract(next_take_);
  ++next_take_;
  lock.unlock();
  cv_.notify_all();
  return std::move(node.mapped());
}

torch::Tensor ImagePool::query(const torch::Tensor& images, Rng& rng) {
  if (capacity_ == 0) return images;
  std::vector<torch::Tensor> out;
  for (std::int64_t i = 0; i < images.size(0); ++i) {
    auto img = images[i].unsqueeze(0).detach().clone();
    if (static_cast<int>(images_.size()) < capacity_) {
      images_.push_back(img);
      out.push_back(img);
    } else if (rng.uniform() > 0.5) {
      auto slot = static_cast<std::size_t>(rng.uniform_int(0, capacity_ - 1));
      out.push_back(images_[slot].clone());
      images_[slot] = img;
    } else {
      out.push_back(img);
    }
  }
  return torch::cat(out, 0);
}

// ---------------------------------------------------------------------------

TrainState init_state(const ExperimentConfig& cfg) {
  TrainState s;
  s.config = cfg;
  auto gen = models::make_init_generator(cfg.seed);
  s.g_ab = models::build_generator(cfg, gen);
  s.g_ba = models::build_generator(cfg, gen);
  s.d_a = models::build_domain_discriminator(cfg, gen);
  s.d_b = models::build_domain_discriminator(cfg, gen);
  s.opt_g = make_optimizer(cfg, parameters_of({s.g_ab.get(), s.g_ba.get()}));
  s.opt_d = make_optimizer(cfg, parameters_of({s.d_a.ptr().get(), s.d_b.ptr().get()}));
  s.pool_a = ImagePool(cfg.train.image_pool);
  s.pool_b = ImagePool(cfg.train.image_pool);
  return s;
}

models::Checkpoint to_checkpoint(const TrainState& s) {
  models::Checkpoint ckpt;
  ckpt.config = s.config;
  ckpt.meta = {{"epoch", std::to_string(s.epoch)},
               {"step", std::to_string(s.step)},
               {"draws", std::to_string(s.draws)},
               {"pool_a", std::to_string(s.pool_a.images().size())},
               {"pool_b", std::to_string(s.pool_b.images().size())}};
  models::export_parameters(*s.g_ab, "G_ab.", ckpt);
  models::export_parameters(*s.g_ba, "G_ba.", ckpt);
  models::export_parameters(*s.d_a, "D_a.", ckpt);
  models::export_parameters(*s.d_b, "D_b.", ckpt);
  for (std::size_t i = 0; i < s.pool_a.images().size(); ++i) {
    ckpt.tensors.emplace_back("pool_a." + std::to_string(i), s.pool_a.images()[i]);
  }
  for (std::size_t i = 0; i < s.pool_b.images().size(); ++i) {
    ckpt.tensors.emplace_back("pool_b." + std::to_string(i), s.pool_b.images()[i]);
  }
  ckpt.blobs = {{"opt_g", save_optimizer(*s.opt_g)}, {"opt_d", save_optimizer(*s.opt_d)}};
  return ckpt;
}

TrainState restore_state(const models::Checkpoint& ckpt) {
  auto s = init_state(ckpt.config);
  models::import_parameters(*s.g_ab, "G_ab.", ckpt);
  models::import_parameters(*s.g_ba, "G_ba.", ckpt);
  models::import_parameters(*s.d_a, "D_a.", ckpt);
  models::import_parameters(*s.d_b, "D_b.", ckpt);
  auto meta_int = [&](const std::string& key) -> std::int64_t {
    const auto* v = ckpt.find_meta(key);
    if (!v) throw Error("checkpoint is missing '" + key + "'");
    return std::stoll(*v);
  };
  s.epoch = meta_int("epoch");
  s.step = meta_int("step");
  s.draws = static_cast<std::uint64_t>(meta_int("draws"));
  auto restore_pool = [&](ImagePool& pool, const std::string& name) {
    std::vector<torch::Tensor> images;
    const auto n = meta_int(name);
    for (std::int64_t i = 0; i < n; ++i) {
      bool found = false;
      for (const auto& [key, t] : ckpt.tensors) {
        if (key == name + "." + std::to_string(i)) {
          images.push_back(t.clone());
          found = true;
          break;
        }
      }
      if (!found) throw Error("checkpoint is missing " + name + " entry " + std::to_string(i));
    }
    pool.restore(std::move(images));
  };
  restore_pool(s.pool_a, "pool_a");
  restore_pool(s.pool_b, "pool_b");
  for (const auto& [name, blob] : {std::pair{"opt_g", s.opt_g.get()}, std::pair{"opt_d", s.opt_d.get()}}) {
    const auto* data = ckpt.find_blob(name);
    if (!data) throw Error(std::string("checkpoint is missing optimizer state ") + name);
    load_optimizer(*blob, *data);
  }
  return s;
}

OptimizerInfo describe(const torch::optim::Optimizer& opt) {
  OptimizerInfo info;
  if (dynamic_cast<const torch::optim::Adam*>(&opt)) {
    info.kind = "adam";
  } else if (dynamic_cast<const torch::optim::RMSprop*>(&opt)) {
    info.kind = "rmsprop";
  } else {
    info.kind = "other";
  }
  if (!opt.param_groups().empty()) info.lr = opt.param_groups().front().options().get_lr();
  return info;
}

// ---------------------------------------------------------------------------

StepResult train_step_lsgan(TrainState& s, const Batch& batch) {
  if (s.config.gan_mode != GanMode::lsgan) throw Error("train_step_lsgan called in wgan mode");
  auto p = prepare(s.config, batch);
  StepResult result;
  auto real_target = [](const torch::Tensor& out) { return losses::lsgan_loss(out, true); };
  result.bundle = generator_update(s, p, real_target, result.tensors);

  auto rng = Rng::substream(s.config.seed, kPoolStream, static_cast<std::uint64_t>(s.step));
  auto fake_b = s.pool_b.query(result.tensors.fake_b, rng);
  auto fake_a = s.pool_a.query(result.tensors.fake_a, rng);

  s.opt_d->zero_grad();
  auto domain_loss = [](models::DualDiscriminator& d, const torch::Tensor& real, const torch::Tensor& fake) {
    std::vector<torch::Tensor> member;
    auto on_real = d->forward(real);
    auto on_fake = d->forward(fake);
    for (std::size_t i = 0; i < on_real.size(); ++i) {
      member.push_back(0.5 * (losses::lsgan_loss(on_real[i], true) + losses::lsgan_loss(on_fake[i], false)));
    }
    return member;
  };
  auto loss_b = domain_loss(s.d_b, p.b, fake_b);
  auto loss_a = domain_loss(s.d_a, p.a, fake_a);
  // Each member is trained on its own loss; only the logged value is mixed.
  torch::Tensor objective = torch::zeros({});
  for (const auto& l : loss_b) objective = objective + l;
  for (const auto& l : loss_a) objective = objective + l;
  objective.backward();
  s.opt_d->step();
  result.bundle.gan_d = (mix(s.d_b, loss_b) + mix(s.d_a, loss_a)).detach();

  ++s.step;
  result.record = make_record(s, result.bundle);
  return result;
}

StepResult train_step_wgan(TrainState& s, const std::function<Batch()>& next_batch, const StepHooks& hooks) {
  if (s.config.gan_mode != GanMode::wgan) throw Error("train_step_wgan called in lsgan mode");
  check_linear_outputs(s);
  const auto& cfg = s.config;
  auto rng = Rng::substream(cfg.seed, kPoolStream, static_cast<std::uint64_t>(s.step));

  torch::Tensor logged_critic;
  for (int i = 0; i < cfg.wgan.n_critic; ++i) {
    auto p = prepare(cfg, next_batch());
    torch::Tensor fake_b, fake_a;
    {
      torch::NoGradGuard no_grad;
      fake_b = s.pool_b.query(s.g_ab->forward(p.a), rng);
      fake_a = s.pool_a.query(s.g_ba->forward(p.b), rng);
    }
    s.opt_d->zero_grad();
    auto critic = [](models::DualDiscriminator& d, const torch::Tensor& real, const torch::Tensor& fake) {
      std::vector<torch::Tensor> member;
      auto on_real = d->forward(real);
      auto on_fake = d->forward(fake);
      for (std::size_t k = 0; k < on_real.size(); ++k) {
        member.push_back(losses::wgan_losses(on_real[k], on_fake[k]).critic);
      }
      return member;
    };
    auto loss_b = critic(s.d_b, p.b, fake_b);
    auto loss_a = critic(s.d_a, p.a, fake_a);
    torch::Tensor objective = torch::zeros({});
    for (const auto& l : loss_b) objective = objective + l;
    for (const auto& l : loss_a) objective = objective + l;
    objective.backward();
    s.opt_d->step();
    models::clip_parameters(*s.d_a, cfg.wgan.clip_value);
    models::clip_parameters(*s.d_b, cfg.wgan.clip_value);
    logged_critic = (mix(s.d_b, loss_b) + mix(s.d_a, loss_a)).detach();
    if (hooks.after_critic_step) hooks.after_critic_step(s);
  }

  auto p = prepare(cfg, next_batch());
  StepResult result;
  auto generator_term = [](const torch::Tensor& out) { return -out.mean(); };
  result.bundle = generator_update(s, p, generator_term, result.tensors);
  result.bundle.gan_d = logged_critic;

  ++s.step;
  result.record = make_record(s, result.bundle);
  return result;
}

StepResult train_step(TrainState& s, const std::function<Batch()>& next_batch, const StepHooks& hooks) {
  if (s.config.gan_mode == GanMode::wgan) return train_step_wgan(s, next_batch, hooks);
  return train_step_lsgan(s, next_batch());
}

// ---------------------------------------------------------------------------

namespace {

std::shared_ptr<const data::FrameStore> load_domain(const ExperimentConfig& cfg, const std::string& dir,
                                                    const std::string& mask_dir, const char* label) {
  if (dir.empty()) throw Error(std::string("data.domain_") + label + "_dir is not set");
  const bool with_masks = cfg.mask_mode != MaskMode::off;
  auto ds = data::open_dataset(dir, with_masks ? std::optional<fs::path>(mask_dir) : std::nullopt);
  if (ds.empty()) throw Error("domain " + std::string(label) + " has no frames in " + dir);
  if (cfg.data.n_train > 0) ds = data::split_dataset(ds, static_cast<std::size_t>(cfg.data.n_train)).first;
  return std::make_shared<const data::FrameStore>(ds, with_masks);
}

void check_resume_compatible(const ExperimentConfig& run, const ExperimentConfig& saved) {
  auto a = run;
  auto b = saved;
  // Budget, bookkeeping and data locations may change between sessions.
  b.epochs = a.epochs;
  b.train = a.train;
  b.data.domain_a_dir = a.data.domain_a_dir;
  b.data.domain_b_dir = a.data.domain_b_dir;
  b.data.mask_a_dir = a.data.mask_a_dir;
  b.data.mask_b_dir = a.data.mask_b_dir;
  if (!(a == b)) throw Error("checkpoint was produced by an incompatible configuration");
}

void rewrite_log_prefix(const fs::path& log, std::int64_t keep_steps) {
  std::vector<std::string> kept;
  if (std::ifstream in(log); in) {
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      if (std::stoll(line.substr(0, line.find(','))) <= keep_steps) kept.push_back(line);
    }
  }
  std::ofstream out(log, std::ios::trunc);
  if (!out) throw Error("cannot write loss log " + log.string());
  out << kLossLogHeader << '\n';
  for (const auto& l : kept) out << l << '\n';
}

}  // namespace

RunResult run_training(const ExperimentConfig& cfg, const RunOptions& options) {
  const fs::path out_dir = cfg.train.out_dir;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec || !fs::is_directory(out_dir)) throw Error("cannot create output directory " + out_dir.string());
  {
    std::ofstream probe(out_dir / ".write-test");
    if (!probe) throw Error("output directory " + out_dir.string() + " is not writable");
  }
  fs::remove(out_dir / ".write-test", ec);

  auto store_a = load_domain(cfg, cfg.data.domain_a_dir, cfg.data.mask_a_dir, "a");
  auto store_b = load_domain(cfg, cfg.data.domain_b_dir, cfg.data.mask_b_dir, "b");
  BatchSource source(store_a, store_b, cfg);

  if (cfg.train.deterministic) {
    torch::set_num_threads(1);
    at::globalContext().setDeterministicAlgorithms(true, false);
  }

  TrainState state;
  if (options.resume_from) {
    auto ckpt = models::load_checkpoint(*options.resume_from);
    check_resume_compatible(cfg, ckpt.config);
    state = restore_state(ckpt);
    state.config = cfg;
  } else {
    state = init_state(cfg);
  }

  const fs::path log = out_dir / "losses.csv";
  rewrite_log_prefix(log, options.resume_from ? state.step : 0);

  const fs::path latest = out_dir / "ckpt_latest.bin";
  auto save = [&](std::int64_t epoch) {
    auto ckpt = to_checkpoint(state);
    models::save_checkpoint(out_dir / ("ckpt_epoch" + std::to_string(epoch) + ".bin"), ckpt);
    models::save_checkpoint(latest, ckpt);
  };
  if (!options.resume_from) save(0);

  std::unique_ptr<PrefetchingLoader> loader;
  if (!cfg.train.deterministic && cfg.train.workers > 0) {
    loader = std::make_unique<PrefetchingLoader>(source, state.draws, cfg.train.workers);
  }
  auto next_batch = [&]() {
    Batch b = loader ? loader->next() : source.draw(state.draws);
    ++state.draws;
    return b;
  };

  const auto steps_per_epoch = static_cast<std::int64_t>(source.steps_per_epoch());
  std::int64_t steps = 0;
  for (std::int64_t epoch = state.epoch + 1; epoch <= cfg.epochs; ++epoch) {
    std::vector<std::string> rows;
    for (std::int64_t i = 0; i < steps_per_epoch; ++i) {
      auto result = train_step(state, next_batch, options.hooks);
      rows.push_back(format_row(result.record));
      if (options.on_step) options.on_step(result.record);
      ++steps;
    }
    {
      std::ofstream out(log, std::ios::app);
      if (!out) throw Error("cannot append to loss log " + log.string());
      for (const auto& r : rows) out << r << '\n';
    }
    state.epoch = epoch;
    if (epoch % cfg.train.checkpoint_every == 0 || epoch == cfg.epochs) save(epoch);
  }
  return {latest, log, steps};
}

// ---------------------------------------------------------------------------

Direction parse_direction(std::string_view text) {
  if (text == "a2b") return Direction::a2b;
  if (text == "b2a") return Direction::b2a;
  throw Error("unknown direction '" + std::string(text) + "' (expected a2b or b2a)");
}

int translate_frames(models::GeneratorImpl& generator, const fs::path& frames_dir, const fs::path& out_dir,
                     int crop_size) {
  auto frames = data::list_frames(frames_dir);
  fs::create_directories(out_dir);
  torch::NoGradGuard no_grad;
  generator.eval();
  for (const auto& f : frames) {
    auto pre = data::preprocess(data::read_image(f), nullptr, false, crop_size);
    auto out = generator.forward(pre.image.tensor());
    data::write_image(out_dir / f.filename(), data::denormalize(out));
  }
  return static_cast<int>(frames.size());
}

int infer(const fs::path& checkpoint, const fs::path& frames_dir, Direction direction, const fs::path& out_dir) {
  auto ckpt = models::load_checkpoint(checkpoint);
  auto gen = models::make_init_generator(ckpt.config.seed);
  auto generator = models::build_generator(ckpt.config, gen);
  try {
    models::import_parameters(*generator, direction == Direction::a2b ? "G_ab." : "G_ba.", ckpt);
  } catch (const Error& e) {
    throw Error("incompatible checkpoint " + checkpoint.string() + ": " + e.what());
  }
  return translate_frames(*generator, frames_dir, out_dir, ckpt.config.data.crop);
}

std::string encode_template() {
  const char* env = std::getenv("FACEOFF_FFENCODE");
  return env && *env ? env : kDefaultEncodeTemplate;
}

double assemble_video(const fs::path& frames_dir, double fps, const fs::path& out_path) {
  if (!(fps > 0.0)) throw Error("fps must be positive");
  auto frames = data::list_frames(frames_dir);
  if (frames.empty()) throw Error("no frames in " + frames_dir.string());
  data::TempDir scratch;
  cv::Size size;
  for (std::size_t i = 0; i < frames.size(); ++i) {
    auto img = data::read_image(frames[i]);
    if (i == 0) {
      size = img.size();
    } else if (img.size() != size) {
      throw Error("mixed frame sizes: " + frames[i].filename().string() + " is " + std::to_string(img.rows) + "x" +
                  std::to_string(img.cols) + ", expected " + std::to_string(size.height) + "x" +
                  std::to_string(size.width));
    }
    char name[32];
    std::snprintf(name, sizeof(name), "%06zu.png", i);
    data::write_image(scratch.path() / name, img);
  }
  if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());
  std::string cmd = encode_template();
  cmd = data::fill_template(cmd, "{fps}", format_double(fps));
  cmd = data::fill_template(cmd, "{pattern}", data::shell_quote((scratch.path() / "%06d.png").string()));
  cmd = data::fill_template(cmd, "{input_dir}", data::shell_quote(scratch.path().string()));
  cmd = data::fill_template(cmd, "{count}", std::to_string(frames.size()));
  cmd = data::fill_template(cmd, "{output}", data::shell_quote(out_path.string()));
  if (std::system(cmd.c_str()) != 0) throw Error("encoder failed: " + cmd);
  return static_cast<double>(frames.size()) / fps;
}

}  // namespace faceoff::trainer
