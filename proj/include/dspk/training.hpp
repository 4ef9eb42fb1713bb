#pragma once

// The three training phases: generator l1 pretraining, discriminator
// pretraining, and the adversarial loop with its replay buffer, plus
// checkpointing and the step log.
//
// Everything random flows through one checkpointed Rng, and datasets are
// consumed in manifest order, so a (seed, config, datasets) triple fixes
// every logged number and the final checkpoint bytes for any backend or
// thread count.

#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "dspk/adam.hpp"
#include "dspk/checkpoint.hpp"
#include "dspk/data.hpp"
#include "dspk/losses.hpp"
#include "dspk/networks.hpp"

namespace dspk::train {

struct GPreConfig {
  int epochs = 100;
  int crop = 192;
  double lr = 1e-4;
  int batch = 16;
};

struct DPreConfig {
  int epochs = 5;
  int crop = 128;
  double lr = 1e-6;
  int batch = 80;
};

struct GanConfig {
  int iterations = 500;
  int g_steps_per_iter = 20;
  int d_steps_per_iter = 1;
  double d_lr = 1e-6;
  double g_lr = 1e-7;  // an order less than d_lr in the paper preset
  int g_batch = 8;
  int d_batch = 40;
  int g_crop = 192;
  int d_crop = 128;
  int buffer_capacity = 200;
  int checkpoint_every = 50;
};

struct TrainConfig {
  uint64_t seed = 1;
  nn::GeneratorConfig gen;
  nn::DiscriminatorConfig disc;
  loss::GanLossConfig loss;
  GPreConfig g_pre;
  DPreConfig d_pre;
  GanConfig gan;

  void validate() const;
  std::string canonical() const;  // field dump in fixed order
  uint64_t hash() const { return fnv1a(canonical()); }
};

// One line per optimizer step:
//   phase iter step loss_total loss_adv loss_l1 loss_msssim
//   d_real_mean d_fake_mean buffer_fill
struct StepRecord {
  std::string phase;
  int64_t iter = 0;
  std::string step;  // "d1", "g1".."g20"
  double loss_total = 0, loss_adv = 0, loss_l1 = 0, loss_msssim = 0;
  double d_real_mean = 0, d_fake_mean = 0;
  int64_t buffer_fill = 0;

  std::string format() const;
};

class TrainLog {
 public:
  void add_sink(std::ostream* os) { sinks_.push_back(os); }
  void record(const StepRecord& r);
  void comment(const std::string& line);  // emitted with a '#' prefix
  const std::vector<StepRecord>& records() const { return records_; }
  const std::vector<std::string>& comments() const { return comments_; }

 private:
  std::vector<StepRecord> records_;
  std::vector<std::string> comments_;
  std::vector<std::ostream*> sinks_;
};

struct TrainState {
  TrainConfig cfg;
  nn::GeneratorModel<float> gen;
  nn::DiscriminatorModel<float> disc;
  AdamState<float> g_adam, d_adam;
  data::ReplayBuffer buffer;
  Rng rng;
  Phase phase = Phase::g_pre;
  int64_t counter = 0;  // completed epochs/iterations within the phase
};

class Trainer {
 public:
  Trainer(TrainConfig cfg, std::vector<Image> low_images,
          std::vector<Image> high_images);

  TrainState& state() { return st_; }
  TrainLog& log() { return log_; }

  // Periodic/diagnostic checkpoints land here when set.
  void set_checkpoint_dir(const std::string& dir) { ckpt_dir_ = dir; }

  // Called after every parameter update with "d" or "g".
  void set_step_observer(std::function<void(const std::string&)> fn) {
    observer_ = std::move(fn);
  }

  // Runs the remaining epochs of the phase; returns the per-epoch mean loss
  // curve of the epochs run by this call.
  std::vector<double> pretrain_generator();
  std::vector<double> pretrain_discriminator();

  void gan_iteration();
  void train_gan();  // remaining iterations + checkpoint cadence
  void run_all();

  void save(const std::string& path) const;
  void load(const std::string& path);  // config hash must match

  // Moves past completed phases (counter at the phase target).
  void normalize_phase();

  // Full-image inference with the current generator.
  Image despeckle_image(const Image& input);

  // Held-out l1 of the current generator on random crops (evaluation aid).
  double held_out_l1(const std::vector<Image>& images, int crop, int n_crops,
                     uint64_t seed);
  // Fraction of correctly classified held-out crops (evaluation aid).
  double held_out_d_accuracy(const std::vector<Image>& high,
                             const std::vector<Image>& generated, int crop,
                             int n_crops, uint64_t seed);

 private:
  void advance_phase();
  void numeric_abort(const std::string& what);
  int64_t patch_positions(const std::vector<Image>& images, int size) const;
  Tensor<float> random_crop_batch(const std::vector<Image>& images, int n,
                                  int size);
  std::vector<Image> generated_full_images();
  void maybe_checkpoint(const std::string& stem);

  const data::PatchSet& gan_high_patches();
  const data::PatchSet& gan_low_patches();

  TrainConfig cfg_;
  TrainState st_;
  TrainLog log_;
  std::vector<Image> low_, high_;
  data::PatchSet high_patches_, low_patches_;  // lazy, at gan.d_crop
  std::string ckpt_dir_;
  std::function<void(const std::string&)> observer_;
};

// Rebuilds a generator for inference from a checkpoint's arch descriptor
// and tensors.
nn::GeneratorModel<float> generator_from_checkpoint(const Checkpoint& c);

}  // namespace dspk::train
