#include "dspk/training.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <sstream>

namespace dspk::train {
namespace {

double tensor_scalar(const Tensor<float>& t) { return double(t.data()[0]); }

double mean_of(const Tensor<float>& t) {
  double s = 0;
  for (int64_t i = 0; i < t.size(); ++i) s += double(t.data()[i]);
  return s / double(t.size());
}

// Temporarily freezes a parameter set (no gradient accumulation).
struct FreezeParams {
  nn::ModelParams<float>& p;
  explicit FreezeParams(nn::ModelParams<float>& params) : p(params) {
    p.set_requires_grad(false);
  }
  ~FreezeParams() { p.set_requires_grad(true); }
};

}  // namespace

void TrainConfig::validate() const {
  gen.validate();
  disc.validate();
  loss.validate();
  check(g_pre.epochs >= 0 && d_pre.epochs >= 0 && gan.iterations >= 0,
        "TrainConfig: negative phase length");
  check(g_pre.lr > 0 && d_pre.lr > 0 && gan.d_lr > 0 && gan.g_lr > 0,
        "TrainConfig: learning rates must be positive");
  check(g_pre.batch >= 2 && d_pre.batch >= 2,
        "TrainConfig: pretraining batches must be >= 2");
  check(d_pre.batch % 2 == 0, "TrainConfig: d_pre batch must be even");
  check(gan.g_batch >= 1 && gan.d_batch >= 4 && gan.d_batch % 4 == 0,
        "TrainConfig: gan d_batch must be divisible by 4");
  check(gan.g_steps_per_iter >= 1 && gan.d_steps_per_iter >= 1,
        "TrainConfig: gan step counts must be >= 1");
  check(g_pre.crop >= gen.stem_kernel && gan.g_crop >= gen.stem_kernel,
        "TrainConfig: generator crop below stem kernel");
  check(gan.buffer_capacity >= gan.d_batch / 4,
        "TrainConfig: buffer capacity below one iteration's insertions");
  check(gan.checkpoint_every >= 1, "TrainConfig: checkpoint_every must be >= 1");
}

std::string TrainConfig::canonical() const {
  char buf[1024];
  std::string sig;
  std::snprintf(buf, sizeof(buf), "seed=%llu;", (unsigned long long)seed);
  sig += buf;
  std::snprintf(buf, sizeof(buf),
                "gen=%d,%d,%d,%d,%d,%d,%d,%.17g,%.17g;", gen.stem_kernel,
                gen.channels, gen.n_resblocks, gen.convs_per_block,
                gen.block_kernel, gen.out_channels, gen.conv_shortcut ? 1 : 0,
                gen.bn_momentum, gen.bn_eps);
  sig += buf;
  std::snprintf(buf, sizeof(buf), "disc=%d,%d,%d,%.17g;", disc.base_channels,
                disc.n_stages, disc.kernel, disc.leaky_alpha);
  sig += buf;
  std::snprintf(buf, sizeof(buf), "loss=%.17g,%d,%.17g,%.17g,[", loss.lambda,
                loss.ms_ssim.scales, loss.ms_ssim.c1, loss.ms_ssim.c2);
  sig += buf;
  for (double s : loss.ms_ssim.sigmas) {
    std::snprintf(buf, sizeof(buf), "%.17g,", s);
    sig += buf;
  }
  sig += "];";
  std::snprintf(buf, sizeof(buf), "g_pre=%d,%d,%.17g,%d;", g_pre.epochs,
                g_pre.crop, g_pre.lr, g_pre.batch);
  sig += buf;
  std::snprintf(buf, sizeof(buf), "d_pre=%d,%d,%.17g,%d;", d_pre.epochs,
                d_pre.crop, d_pre.lr, d_pre.batch);
  sig += buf;
  std::snprintf(buf, sizeof(buf), "gan=%d,%d,%d,%.17g,%.17g,%d,%d,%d,%d,%d,%d;",
                gan.iterations, gan.g_steps_per_iter, gan.d_steps_per_iter,
                gan.d_lr, gan.g_lr, gan.g_batch, gan.d_batch, gan.g_crop,
                gan.d_crop, gan.buffer_capacity, gan.checkpoint_every);
  sig += buf;
  return sig;
}

std::string StepRecord::format() const {
  char buf[320];
  std::snprintf(buf, sizeof(buf), "%s %lld %s %.9g %.9g %.9g %.9g %.9g %.9g %lld",
                phase.c_str(), (long long)iter, step.c_str(), loss_total,
                loss_adv, loss_l1, loss_msssim, d_real_mean, d_fake_mean,
                (long long)buffer_fill);
  return buf;
}

void TrainLog::record(const StepRecord& r) {
  records_.push_back(r);
  const std::string line = r.format();
  for (auto* os : sinks_) (*os) << line << '\n' << std::flush;
}

void TrainLog::comment(const std::string& line) {
  comments_.push_back(line);
  for (auto* os : sinks_) (*os) << "# " << line << '\n' << std::flush;
}

Trainer::Trainer(TrainConfig cfg, std::vector<Image> low_images,
                 std::vector<Image> high_images)
    : cfg_(cfg), low_(std::move(low_images)), high_(std::move(high_images)) {
  cfg_.validate();
  check(!low_.empty(), "Trainer: empty low-quality set");
  st_.cfg = cfg_;
  st_.rng = Rng(cfg_.seed);
  st_.gen = nn::build_generator<float>(cfg_.gen, mix_seed(cfg_.seed, 0x6e11));
  st_.disc =
      nn::build_discriminator<float>(cfg_.disc, mix_seed(cfg_.seed, 0xD15C));
  st_.g_adam = AdamState<float>(AdamConfig{});
  st_.d_adam = AdamState<float>(AdamConfig{});
  st_.buffer = data::ReplayBuffer(cfg_.gan.buffer_capacity);
}

int64_t Trainer::patch_positions(const std::vector<Image>& images,
                                 int size) const {
  int64_t total = 0;
  for (const auto& img : images) {
    if (img.h < size || img.w < size) continue;
    const int stride = std::max(1, size / 2);
    auto count = [&](int dim) {
      int64_t c = 0;
      int p = 0;
      for (; p + size <= dim; p += stride) ++c;
      if (c == 0 || (p - stride) + size < dim) ++c;
      return c;
    };
    total += count(img.h) * count(img.w);
  }
  return std::max<int64_t>(total, 1);
}

Tensor<float> Trainer::random_crop_batch(const std::vector<Image>& images,
                                         int n, int size) {
  std::vector<Image> crops;
  crops.reserve(size_t(n));
  for (int i = 0; i < n; ++i) {
    const size_t pick = size_t(st_.rng.uniform_below(images.size()));
    crops.push_back(data::random_crop(images[pick], size, st_.rng));
  }
  return data::to_tensor(crops);
}

void Trainer::numeric_abort(const std::string& what) {
  std::string where;
  if (!ckpt_dir_.empty()) {
    where = ckpt_dir_ + "/ckpt_diagnostic.dspk";
    save(where);
  }
  throw NumericError("training aborted: non-finite loss at " + what +
                     (where.empty() ? "" : "; diagnostic checkpoint: " + where));
}

void Trainer::maybe_checkpoint(const std::string& stem) {
  if (ckpt_dir_.empty()) return;
  std::error_code ec;
  std::filesystem::create_directories(ckpt_dir_, ec);
  save(ckpt_dir_ + "/" + stem + ".dspk");
}

std::vector<double> Trainer::pretrain_generator() {
  check(st_.phase == Phase::g_pre, "pretrain_generator: phase already done");
  const auto& pc = cfg_.g_pre;
  const int64_t steps_per_epoch = std::max<int64_t>(
      1, (patch_positions(low_, pc.crop) + pc.batch - 1) / pc.batch);
  std::vector<double> curve;
  while (st_.counter < pc.epochs) {
    double epoch_sum = 0.0;
    for (int64_t s = 0; s < steps_per_epoch; ++s) {
      Tensor<float> x = random_crop_batch(low_, pc.batch, pc.crop);
      Tape<float> tape;
      Tensor<float> out =
          nn::generator_forward(st_.gen, x, Mode::train, &tape);
      Tensor<float> l = loss::l1_loss(&tape, out, x);
      const double lv = tensor_scalar(l);
      if (!std::isfinite(lv))
        numeric_abort("g_pre epoch " + std::to_string(st_.counter) + " step " +
                      std::to_string(s));
      tape.backward(l);
      auto params = st_.gen.p.param_tensors();
      st_.g_adam.step(params, pc.lr);
      st_.gen.p.zero_grads();
      if (observer_) observer_("g");
      epoch_sum += lv;
      StepRecord r;
      r.phase = "g_pre";
      r.iter = st_.counter;
      r.step = "g" + std::to_string(s + 1);
      r.loss_total = lv;
      r.loss_l1 = lv;
      log_.record(r);
    }
    curve.push_back(epoch_sum / double(steps_per_epoch));
    ++st_.counter;
  }
  return curve;
}

std::vector<Image> Trainer::generated_full_images() {
  std::vector<Image> out;
  out.reserve(low_.size());
  for (const auto& img : low_) {
    Image g = despeckle_image(img);
    g.tag = Quality::generated;
    out.push_back(std::move(g));
  }
  return out;
}

std::vector<double> Trainer::pretrain_discriminator() {
  check(st_.phase == Phase::d_pre, "pretrain_discriminator: wrong phase");
  check(!high_.empty(), "pretrain_discriminator: empty high-quality set");
  const auto& pc = cfg_.d_pre;
  const std::vector<Image> generated = generated_full_images();
  // one epoch = a pass over the smaller class, oversampling the other
  const int64_t smaller = std::min(patch_positions(high_, pc.crop),
                                   patch_positions(generated, pc.crop));
  const int half = pc.batch / 2;
  const int64_t steps_per_epoch = std::max<int64_t>(1, (smaller + half - 1) / half);
  std::vector<double> curve;
  while (st_.counter < pc.epochs) {
    double epoch_sum = 0.0;
    for (int64_t s = 0; s < steps_per_epoch; ++s) {
      Tensor<float> xr = random_crop_batch(high_, half, pc.crop);
      Tensor<float> xf = random_crop_batch(generated, half, pc.crop);
      Tape<float> tape;
      Tensor<float> dr = nn::discriminator_forward(st_.disc, xr, Mode::train, &tape);
      Tensor<float> df = nn::discriminator_forward(st_.disc, xf, Mode::train, &tape);
      Tensor<float> l = loss::discriminator_loss(&tape, dr, df);
      const double lv = tensor_scalar(l);
      if (!std::isfinite(lv))
        numeric_abort("d_pre epoch " + std::to_string(st_.counter) + " step " +
                      std::to_string(s));
      tape.backward(l);
      auto params = st_.disc.p.param_tensors();
      st_.d_adam.step(params, pc.lr);
      st_.disc.p.zero_grads();
      if (observer_) observer_("d");
      epoch_sum += lv;
      StepRecord r;
      r.phase = "d_pre";
      r.iter = st_.counter;
      r.step = "d" + std::to_string(s + 1);
      r.loss_total = lv;
      r.d_real_mean = mean_of(dr);
      r.d_fake_mean = mean_of(df);
      log_.record(r);
    }
    curve.push_back(epoch_sum / double(steps_per_epoch));
    ++st_.counter;
  }
  return curve;
}

void Trainer::gan_iteration() {
  check(st_.phase == Phase::gan, "gan_iteration: wrong phase");
  check(!high_.empty(), "gan_iteration: empty high-quality set");
  const auto& gc = cfg_.gan;
  const int64_t iter = st_.counter;

  const data::PatchSet& high_patches = gan_high_patches();
  const data::PatchSet& low_patches = gan_low_patches();

  int d_real_count = 0, d_fresh_count = 0, d_buffer_count = 0;
  std::vector<Image> fresh;
  for (int dstep = 0; dstep < gc.d_steps_per_iter; ++dstep) {
    // fresh despeckled patches from the current generator
    std::vector<Image> low_sel;
    low_sel.reserve(size_t(gc.d_batch / 2));
    for (int i = 0; i < gc.d_batch / 2; ++i) {
      const size_t pick = size_t(st_.rng.uniform_below(low_patches.patches.size()));
      low_sel.push_back(low_patches.patches[pick].img);
    }
    Tensor<float> low_batch = data::to_tensor(low_sel);
    Tensor<float> gen_out =
        nn::generator_forward<float>(st_.gen, low_batch, Mode::infer, nullptr);
    fresh = data::from_tensor(gen_out, Quality::generated);

    data::DBatch batch = data::assemble_d_minibatch(st_.buffer, high_patches,
                                                    fresh, gc.d_batch, st_.rng);
    d_real_count = batch.n_real;
    d_fresh_count = batch.n_fresh;
    d_buffer_count = batch.n_buffer;

    Tape<float> tape;
    Tensor<float> dr = nn::discriminator_forward(st_.disc, batch.real, Mode::train, &tape);
    Tensor<float> df = nn::discriminator_forward(st_.disc, batch.fake, Mode::train, &tape);
    Tensor<float> l = loss::discriminator_loss(&tape, dr, df);
    const double lv = tensor_scalar(l);
    if (!std::isfinite(lv))
      numeric_abort("gan iter " + std::to_string(iter) + " d step");
    tape.backward(l);
    auto dparams = st_.disc.p.param_tensors();
    st_.d_adam.step(dparams, gc.d_lr);
    st_.disc.p.zero_grads();
    if (observer_) observer_("d");

    StepRecord r;
    r.phase = "gan";
    r.iter = iter;
    r.step = "d" + std::to_string(dstep + 1);
    r.loss_total = lv;
    r.d_real_mean = mean_of(dr);
    r.d_fake_mean = mean_of(df);
    r.buffer_fill = st_.buffer.size();
    log_.record(r);
  }

  for (int gstep = 0; gstep < gc.g_steps_per_iter; ++gstep) {
    Tensor<float> x = random_crop_batch(low_, gc.g_batch, gc.g_crop);
    Tape<float> tape;
    Tensor<float> xhat = nn::generator_forward(st_.gen, x, Mode::train, &tape);
    double dfake_mean;
    loss::GeneratorLoss<float> parts;
    {
      FreezeParams freeze(st_.disc.p);  // G updates must not touch phi
      Tensor<float> d = nn::discriminator_forward(st_.disc, xhat, Mode::train, &tape);
      dfake_mean = mean_of(d);
      parts = loss::generator_total_loss(&tape, d, xhat, x, cfg_.loss);
      const double lv = tensor_scalar(parts.total);
      if (!std::isfinite(lv))
        numeric_abort("gan iter " + std::to_string(iter) + " g step " +
                      std::to_string(gstep + 1));
      tape.backward(parts.total);
    }
    auto gparams = st_.gen.p.param_tensors();
    st_.g_adam.step(gparams, gc.g_lr);
    st_.gen.p.zero_grads();
    if (observer_) observer_("g");

    StepRecord r;
    r.phase = "gan";
    r.iter = iter;
    r.step = "g" + std::to_string(gstep + 1);
    r.loss_total = tensor_scalar(parts.total);
    r.loss_adv = tensor_scalar(parts.adversarial);
    r.loss_l1 = tensor_scalar(parts.l1);
    r.loss_msssim = tensor_scalar(parts.ms_ssim);
    r.d_fake_mean = dfake_mean;
    r.buffer_fill = st_.buffer.size();
    log_.record(r);
  }

  // replace/extend the buffer with this iteration's despeckled samples
  const int insert_n = cfg_.gan.d_batch / 4;
  check(int(fresh.size()) >= insert_n, "gan_iteration: fresh pool too small");
  std::vector<Image> to_insert(fresh.begin(), fresh.begin() + insert_n);
  st_.buffer.insert(to_insert, st_.rng);

  char line[160];
  std::snprintf(line, sizeof(line),
                "gan iter=%lld d_real=%d d_fresh=%d d_buffer=%d buffer_fill=%d",
                (long long)iter, d_real_count, d_fresh_count, d_buffer_count,
                st_.buffer.size());
  log_.comment(line);
  ++st_.counter;
}

void Trainer::train_gan() {
  check(st_.phase == Phase::gan, "train_gan: wrong phase");
  while (st_.counter < cfg_.gan.iterations) {
    gan_iteration();
    if (st_.counter % cfg_.gan.checkpoint_every == 0 &&
        st_.counter < cfg_.gan.iterations) {
      char stem[64];
      std::snprintf(stem, sizeof(stem), "ckpt_gan_%06lld", (long long)st_.counter);
      maybe_checkpoint(stem);
    }
  }
  maybe_checkpoint("ckpt_gan_final");
}

const data::PatchSet& Trainer::gan_high_patches() {
  if (high_patches_.patches.empty())
    high_patches_ = data::extract_patches_all(high_, cfg_.gan.d_crop, 0.5, "high");
  return high_patches_;
}

const data::PatchSet& Trainer::gan_low_patches() {
  if (low_patches_.patches.empty())
    low_patches_ = data::extract_patches_all(low_, cfg_.gan.d_crop, 0.5, "low");
  return low_patches_;
}

void Trainer::normalize_phase() {
  if (st_.phase == Phase::g_pre && st_.counter >= cfg_.g_pre.epochs)
    advance_phase();
  if (st_.phase == Phase::d_pre && st_.counter >= cfg_.d_pre.epochs)
    advance_phase();
}

void Trainer::advance_phase() {
  if (st_.phase == Phase::g_pre) {
    st_.phase = Phase::d_pre;
  } else if (st_.phase == Phase::d_pre) {
    st_.phase = Phase::gan;
  }
  st_.counter = 0;
}

void Trainer::run_all() {
  if (st_.phase == Phase::g_pre) {
    pretrain_generator();
    maybe_checkpoint("ckpt_gpre_final");
    advance_phase();
  }
  if (st_.phase == Phase::d_pre) {
    pretrain_discriminator();
    maybe_checkpoint("ckpt_dpre_final");
    advance_phase();
  }
  train_gan();
}

Image Trainer::despeckle_image(const Image& input) {
  Tensor<float> x = data::to_tensor({input});
  Tensor<float> out = nn::generator_forward<float>(st_.gen, x, Mode::infer, nullptr);
  auto imgs = data::from_tensor(out, Quality::generated);
  return imgs.front();
}

double Trainer::held_out_l1(const std::vector<Image>& images, int crop,
                            int n_crops, uint64_t seed) {
  Rng rng(seed);
  double total = 0.0;
  for (int i = 0; i < n_crops; ++i) {
    const size_t pick = size_t(rng.uniform_below(images.size()));
    Image c = data::random_crop(images[pick], crop, rng);
    Tensor<float> x = data::to_tensor({c});
    Tensor<float> out = nn::generator_forward<float>(st_.gen, x, Mode::infer, nullptr);
    double s = 0.0;
    for (int64_t j = 0; j < x.size(); ++j)
      s += std::abs(double(out.data()[j]) - double(x.data()[j]));
    total += s / double(x.size());
  }
  return total / double(n_crops);
}

double Trainer::held_out_d_accuracy(const std::vector<Image>& high,
                                    const std::vector<Image>& generated,
                                    int crop, int n_crops, uint64_t seed) {
  Rng rng(seed);
  int correct = 0, total = 0;
  for (int i = 0; i < n_crops; ++i) {
    const Image hc = data::random_crop(high[rng.uniform_below(high.size())], crop, rng);
    const Image gc = data::random_crop(generated[rng.uniform_below(generated.size())], crop, rng);
    Tensor<float> xh = data::to_tensor({hc});
    Tensor<float> xg = data::to_tensor({gc});
    double ph = mean_of(nn::discriminator_forward<float>(st_.disc, xh, Mode::infer, nullptr));
    double pg = mean_of(nn::discriminator_forward<float>(st_.disc, xg, Mode::infer, nullptr));
    correct += ph > 0.5 ? 1 : 0;
    correct += pg < 0.5 ? 1 : 0;
    total += 2;
  }
  return double(correct) / double(total);
}

void Trainer::save(const std::string& path) const {
  Checkpoint c;
  c.config_hash = cfg_.hash();
  c.phase = st_.phase;
  c.counter = st_.counter;
  c.has_disc = st_.phase != Phase::g_pre;
  c.gen_arch = format_gen_arch(cfg_.gen);
  c.disc_arch = format_disc_arch(cfg_.disc);
  for (const auto& [name, t] : st_.gen.p.params)
    c.tensors.emplace_back("g." + name, t.clone());
  for (const auto& [name, t] : st_.gen.p.buffers)
    c.tensors.emplace_back("g.buf." + name, t.clone());
  if (c.has_disc) {
    for (const auto& [name, t] : st_.disc.p.params)
      c.tensors.emplace_back("d." + name, t.clone());
  }
  c.g_adam.t = st_.g_adam.step_count();
  c.g_adam.m = st_.g_adam.first_moments();
  c.g_adam.v = st_.g_adam.second_moments();
  c.has_d_adam = c.has_disc;
  if (c.has_d_adam) {
    c.d_adam.t = st_.d_adam.step_count();
    c.d_adam.m = st_.d_adam.first_moments();
    c.d_adam.v = st_.d_adam.second_moments();
  }
  c.buffer_capacity = st_.buffer.capacity();
  c.buffer_patch_size = cfg_.gan.d_crop;
  for (const auto& p : st_.buffer.pool()) c.buffer_patches.push_back(p.px);
  std::ostringstream os;
  st_.rng.save(os);
  c.rng_state = os.str();
  save_checkpoint_file(c, path);
}

void Trainer::load(const std::string& path) {
  Checkpoint c = load_checkpoint_file(path);
  if (c.config_hash != cfg_.hash())
    throw CheckpointError("checkpoint config hash mismatch: refusing resume");
  TrainState fresh;
  fresh.cfg = cfg_;
  fresh.gen = nn::build_generator<float>(cfg_.gen, 0);
  fresh.disc = nn::build_discriminator<float>(cfg_.disc, 0);
  fresh.buffer = data::ReplayBuffer(c.buffer_capacity);
  fresh.phase = c.phase;
  fresh.counter = c.counter;

  auto restore = [&](const std::string& name, Tensor<float>& dst) {
    for (const auto& [n, t] : c.tensors) {
      if (n == name) {
        check_dim(t.shape() == dst.shape(),
                  "checkpoint tensor shape mismatch: " + name);
        std::copy(t.data(), t.data() + t.size(), dst.data());
        return;
      }
    }
    throw CheckpointError("checkpoint missing tensor " + name);
  };
  for (auto& [name, t] : fresh.gen.p.params) restore("g." + name, t);
  for (auto& [name, t] : fresh.gen.p.buffers) restore("g.buf." + name, t);
  if (c.has_disc)
    for (auto& [name, t] : fresh.disc.p.params) restore("d." + name, t);

  fresh.g_adam = AdamState<float>(AdamConfig{});
  fresh.g_adam.set_step_count(c.g_adam.t);
  fresh.g_adam.first_moments() = c.g_adam.m;
  fresh.g_adam.second_moments() = c.g_adam.v;
  fresh.d_adam = AdamState<float>(AdamConfig{});
  if (c.has_d_adam) {
    fresh.d_adam.set_step_count(c.d_adam.t);
    fresh.d_adam.first_moments() = c.d_adam.m;
    fresh.d_adam.second_moments() = c.d_adam.v;
  }
  for (const auto& px : c.buffer_patches) {
    Image img(c.buffer_patch_size, c.buffer_patch_size, Quality::generated);
    check(px.size() == img.px.size(), "checkpoint buffer patch size mismatch");
    img.px = px;
    fresh.buffer.mutable_pool().push_back(std::move(img));
  }
  std::istringstream is(c.rng_state);
  fresh.rng.load(is);
  st_ = std::move(fresh);
}

nn::GeneratorModel<float> generator_from_checkpoint(const Checkpoint& c) {
  nn::GeneratorConfig gcfg = parse_gen_arch(c.gen_arch);
  auto gen = nn::build_generator<float>(gcfg, 0);
  auto restore = [&](const std::string& name, Tensor<float>& dst) {
    for (const auto& [n, t] : c.tensors) {
      if (n == name) {
        check_dim(t.shape() == dst.shape(),
                  "checkpoint tensor shape mismatch: " + name);
        std::copy(t.data(), t.data() + t.size(), dst.data());
        return;
      }
    }
    throw CheckpointError("checkpoint missing tensor " + name);
  };
  for (auto& [name, t] : gen.p.params) restore("g." + name, t);
  for (auto& [name, t] : gen.p.buffers) restore("g.buf." + name, t);
  return gen;
}

}  // namespace dspk::train
