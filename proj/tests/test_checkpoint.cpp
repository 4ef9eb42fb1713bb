// Checkpoint round-trips, corruption handling, deterministic reruns and
// bit-identical resume.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "dspk/specklesim.hpp"
#include "dspk/training.hpp"

using namespace dspk;
using train::TrainConfig;
using train::Trainer;

namespace {

TrainConfig micro_config() {
  TrainConfig cfg;
  cfg.seed = 321;
  cfg.gen.stem_kernel = 3;
  cfg.gen.channels = 4;
  cfg.gen.n_resblocks = 2;
  cfg.gen.convs_per_block = 2;
  cfg.disc.base_channels = 4;
  cfg.disc.n_stages = 2;
  cfg.g_pre = {2, 24, 1e-3, 4};
  cfg.d_pre = {1, 24, 1e-3, 8};
  cfg.gan.iterations = 6;
  cfg.gan.g_steps_per_iter = 3;
  cfg.gan.d_lr = 1e-4;
  cfg.gan.g_lr = 1e-5;
  cfg.gan.g_batch = 2;
  cfg.gan.d_batch = 8;
  cfg.gan.g_crop = 24;
  cfg.gan.d_crop = 24;
  cfg.gan.buffer_capacity = 8;
  cfg.gan.checkpoint_every = 50;
  return cfg;
}

std::vector<Image> micro_set(Quality q, int n, uint64_t seed) {
  std::vector<Image> imgs;
  const auto profile = q == Quality::low ? sim::PsfProfile::low_quality()
                                         : sim::PsfProfile::high_quality();
  for (int i = 0; i < n; ++i) {
    sim::Phantom ph = sim::make_phantom(96, 0, mix_seed(seed, uint64_t(i)));
    imgs.push_back(sim::simulate_speckle(ph, profile, mix_seed(seed, 500 + uint64_t(i))));
  }
  return imgs;
}

std::string read_file(const std::string& p) {
  std::ifstream is(p, std::ios::binary);
  REQUIRE(is.good());
  return std::string(std::istreambuf_iterator<char>(is), {});
}

struct TmpDir {
  std::string path;
  explicit TmpDir(std::string p) : path(std::move(p)) {
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TmpDir() { std::filesystem::remove_all(path); }
};

}  // namespace

TEST_CASE("save -> load -> save is byte-identical") {
  TmpDir dir("ckpt_test_a");
  TrainConfig cfg = micro_config();
  Trainer t(cfg, micro_set(Quality::low, 2, 1), micro_set(Quality::high, 2, 2));
  t.run_all();
  t.save(dir.path + "/a.dspk");
  Trainer t2(cfg, micro_set(Quality::low, 2, 1), micro_set(Quality::high, 2, 2));
  t2.load(dir.path + "/a.dspk");
  t2.save(dir.path + "/b.dspk");
  CHECK(read_file(dir.path + "/a.dspk") == read_file(dir.path + "/b.dspk"));
}

TEST_CASE("corrupted checkpoints are rejected with no partial state") {
  TmpDir dir("ckpt_test_b");
  TrainConfig cfg = micro_config();
  Trainer t(cfg, micro_set(Quality::low, 2, 3), micro_set(Quality::high, 2, 4));
  t.pretrain_generator();
  t.save(dir.path + "/good.dspk");
  const std::string bytes = read_file(dir.path + "/good.dspk");

  // truncations at several depths
  for (size_t keep : {size_t(2), size_t(9), bytes.size() / 2, bytes.size() - 3}) {
    std::ofstream os(dir.path + "/trunc.dspk", std::ios::binary | std::ios::trunc);
    os.write(bytes.data(), std::streamsize(keep));
    os.close();
    CHECK_THROWS_AS(train::load_checkpoint_file(dir.path + "/trunc.dspk"),
                    CheckpointError);
  }
  // bad magic
  {
    std::string bad = bytes;
    bad[0] = 'X';
    std::ofstream os(dir.path + "/magic.dspk", std::ios::binary | std::ios::trunc);
    os << bad;
  }
  CHECK_THROWS_AS(train::load_checkpoint_file(dir.path + "/magic.dspk"),
                  CheckpointError);
  // trailing garbage
  {
    std::string bad = bytes + "zz";
    std::ofstream os(dir.path + "/trail.dspk", std::ios::binary | std::ios::trunc);
    os << bad;
  }
  CHECK_THROWS_AS(train::load_checkpoint_file(dir.path + "/trail.dspk"),
                  CheckpointError);
  CHECK_THROWS_AS(train::load_checkpoint_file(dir.path + "/missing.dspk"),
                  CheckpointError);
}

TEST_CASE("config hash mismatch refuses resume") {
  TmpDir dir("ckpt_test_c");
  TrainConfig cfg = micro_config();
  Trainer t(cfg, micro_set(Quality::low, 2, 5), micro_set(Quality::high, 2, 6));
  t.pretrain_generator();
  t.save(dir.path + "/a.dspk");
  TrainConfig other = cfg;
  other.gan.g_lr = 2e-5;
  Trainer t2(other, micro_set(Quality::low, 2, 5), micro_set(Quality::high, 2, 6));
  CHECK_THROWS_AS(t2.load(dir.path + "/a.dspk"), CheckpointError);
}

TEST_CASE("two identical seeded runs produce bit-identical checkpoints") {
  TmpDir dir("ckpt_test_d");
  TrainConfig cfg = micro_config();
  for (int run = 0; run < 2; ++run) {
    Trainer t(cfg, micro_set(Quality::low, 2, 7), micro_set(Quality::high, 2, 8));
    t.run_all();
    t.save(dir.path + "/run" + std::to_string(run) + ".dspk");
  }
  CHECK(read_file(dir.path + "/run0.dspk") == read_file(dir.path + "/run1.dspk"));
}

TEST_CASE("resume at iteration k matches a straight run to 2k") {
  TmpDir dir("ckpt_test_e");
  TrainConfig cfg = micro_config();  // 6 gan iterations

  // straight-through
  Trainer t1(cfg, micro_set(Quality::low, 2, 9), micro_set(Quality::high, 2, 10));
  t1.run_all();
  t1.save(dir.path + "/straight.dspk");

  // run to k=3, checkpoint, reload into a fresh trainer, finish
  Trainer t2(cfg, micro_set(Quality::low, 2, 9), micro_set(Quality::high, 2, 10));
  t2.pretrain_generator();
  t2.normalize_phase();
  t2.pretrain_discriminator();
  t2.normalize_phase();
  for (int i = 0; i < 3; ++i) t2.gan_iteration();
  t2.save(dir.path + "/mid.dspk");

  Trainer t3(cfg, micro_set(Quality::low, 2, 9), micro_set(Quality::high, 2, 10));
  t3.load(dir.path + "/mid.dspk");
  CHECK(t3.state().phase == train::Phase::gan);
  CHECK(t3.state().counter == 3);
  t3.train_gan();
  t3.save(dir.path + "/resumed.dspk");

  CHECK(read_file(dir.path + "/straight.dspk") ==
        read_file(dir.path + "/resumed.dspk"));
}
