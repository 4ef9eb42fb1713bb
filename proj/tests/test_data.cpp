// Patch extraction, random crops, the replay buffer and discriminator
// minibatch composition.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>

#include "dspk/data.hpp"

using namespace dspk;

namespace {

Image noise_image(int h, int w, Quality q, uint64_t seed) {
  Image img(h, w, q);
  Rng rng(seed);
  for (auto& v : img.px) v = float(rng.uniform());
  return img;
}

}  // namespace

TEST_CASE("extract_patches window counts") {
  Image img = noise_image(256, 256, Quality::low, 1);
  auto set = data::extract_patches(img, 128, 0.5);
  CHECK(set.patches.size() == 9);  // 3 starts per axis
  auto one = data::extract_patches(noise_image(128, 128, Quality::low, 2), 128, 0.5);
  CHECK(one.patches.size() == 1);
  auto four = data::extract_patches(img, 128, 0.0);
  CHECK(four.patches.size() == 4);
  CHECK_THROWS_AS(data::extract_patches(noise_image(64, 64, Quality::low, 3), 128, 0.5),
                  DimensionError);
  CHECK_THROWS_AS(data::extract_patches(img, 128, 1.0), ContractError);
}

TEST_CASE("patch coverage: every pixel belongs to at least one patch") {
  Rng rng(11);
  for (int trial = 0; trial < 10; ++trial) {
    const int h = 40 + int(rng.uniform_below(60));
    const int w = 40 + int(rng.uniform_below(60));
    const int size = 16 + int(rng.uniform_below(24));
    if (h < size || w < size) continue;
    const double overlap = rng.uniform(0.0, 0.75);
    Image img = noise_image(h, w, Quality::low, trial);
    auto set = data::extract_patches(img, size, overlap);
    std::vector<int> covered(size_t(h) * w, 0);
    for (const auto& p : set.patches) {
      CHECK(p.img.h == size);
      CHECK(p.img.w == size);
      CHECK(p.oy + size <= h);
      CHECK(p.ox + size <= w);
      for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) covered[size_t(p.oy + y) * w + p.ox + x] = 1;
    }
    int64_t total = 0;
    for (int v : covered) total += v;
    CHECK(total == int64_t(h) * w);
  }
}

TEST_CASE("random_crop basics") {
  Image img = noise_image(12, 12, Quality::low, 5);
  Rng rng(1);
  Image full = data::random_crop(img, 12, rng);
  CHECK(full.px == img.px);

  Rng r1(9), r2(9);
  Image a = data::random_crop(img, 8, r1);
  Image b = data::random_crop(img, 8, r2);
  CHECK(a.px == b.px);
  CHECK_THROWS_AS(data::random_crop(img, 16, rng), DimensionError);
}

TEST_CASE("random_crop offsets are uniform (chi-squared, p > 0.01)") {
  // 12x12 image, 8x8 crop -> 5x5 = 25 equally likely offsets
  Image img = noise_image(12, 12, Quality::low, 6);
  for (int y = 0; y < 12; ++y)
    for (int x = 0; x < 12; ++x) img.at(y, x) = float(y * 12 + x) / 255.0f;
  Rng rng(123);
  std::vector<int> counts(25, 0);
  const int draws = 10000;
  for (int i = 0; i < draws; ++i) {
    Image c = data::random_crop(img, 8, rng);
    const int flat = int(std::lround(double(c.px[0]) * 255.0));
    const int oy = flat / 12, ox = flat % 12;
    REQUIRE(oy >= 0);
    REQUIRE(oy < 5);
    REQUIRE(ox < 5);
    counts[size_t(oy * 5 + ox)]++;
  }
  const double expect = draws / 25.0;
  double chi2 = 0;
  for (int c : counts) chi2 += (c - expect) * (c - expect) / expect;
  // chi-square 0.99 quantile, 24 dof
  CHECK(chi2 < 42.9798);
}

TEST_CASE("replay buffer fills then replaces exactly k distinct entries") {
  data::ReplayBuffer buf(6);
  Rng rng(3);
  auto gen_patch = [&](int id) {
    Image img(4, 4, Quality::generated);
    for (auto& v : img.px) v = float(id) / 100.0f;
    return img;
  };
  std::vector<Image> first = {gen_patch(1), gen_patch(2), gen_patch(3), gen_patch(4)};
  buf.insert(first, rng);
  CHECK(buf.size() == 4);
  std::vector<Image> second = {gen_patch(5), gen_patch(6), gen_patch(7), gen_patch(8)};
  buf.insert(second, rng);
  CHECK(buf.size() == 6);  // capacity reached; two of these replaced entries

  std::vector<Image> third = {gen_patch(9), gen_patch(10), gen_patch(11)};
  auto before = buf.pool();
  buf.insert(third, rng);
  CHECK(buf.size() == 6);
  int changed = 0;
  for (int i = 0; i < 6; ++i)
    if (buf.pool()[size_t(i)].px != before[size_t(i)].px) ++changed;
  CHECK(changed == 3);  // exactly k replaced

  Image real(4, 4, Quality::high);
  CHECK_THROWS_AS(buf.insert({real}, rng), ContractError);

  // determinism
  data::ReplayBuffer b1(4), b2(4);
  Rng ra(7), rb(7);
  std::vector<Image> many;
  for (int i = 0; i < 9; ++i) many.push_back(gen_patch(i));
  b1.insert({many[0], many[1], many[2], many[3]}, ra);
  b1.insert({many[4], many[5]}, ra);
  b2.insert({many[0], many[1], many[2], many[3]}, rb);
  b2.insert({many[4], many[5]}, rb);
  for (int i = 0; i < 4; ++i)
    CHECK(b1.pool()[size_t(i)].px == b2.pool()[size_t(i)].px);
}

TEST_CASE("assemble_d_minibatch composition") {
  data::PatchSet real_set;
  real_set.patch_size = 4;
  real_set.tag = Quality::high;
  for (int i = 0; i < 12; ++i) {
    data::Patch p;
    p.img = noise_image(4, 4, Quality::high, 100 + i);
    real_set.patches.push_back(p);
  }
  auto fakes = [&](int n) {
    std::vector<Image> v;
    for (int i = 0; i < n; ++i) v.push_back(noise_image(4, 4, Quality::generated, 200 + i));
    return v;
  };

  // warm-up: empty buffer, batch 8 -> 4 real + 4 fresh
  data::ReplayBuffer buf(10);
  Rng rng(5);
  auto b = data::assemble_d_minibatch(buf, real_set, fakes(4), 8, rng);
  CHECK(b.n_real == 4);
  CHECK(b.n_fresh == 4);
  CHECK(b.n_buffer == 0);

  // after warm-up: batch 40 -> 20 real + 10 fresh + 10 buffered
  data::ReplayBuffer buf2(32);
  buf2.insert(fakes(16), rng);
  data::PatchSet big = real_set;
  auto b2 = data::assemble_d_minibatch(buf2, big, fakes(20), 40, rng);
  CHECK(b2.n_real == 20);
  CHECK(b2.n_fresh == 10);
  CHECK(b2.n_buffer == 10);
  CHECK(b2.real.shape() == Shape{20, 1, 4, 4});
  CHECK(b2.fake.shape() == Shape{20, 1, 4, 4});
  int ones = 0;
  for (int v : b2.labels) ones += v;
  CHECK(ones == 20);  // exactly batch/2 ones
  CHECK(b2.labels.size() == 40);

  CHECK_THROWS_AS(data::assemble_d_minibatch(buf2, big, fakes(20), 42, rng),
                  ContractError);
  CHECK_THROWS_AS(data::assemble_d_minibatch(buf2, big, fakes(1), 8, rng),
                  ContractError);
}

TEST_CASE("tensor round trip") {
  auto imgs = std::vector<Image>{noise_image(6, 6, Quality::generated, 1),
                                 noise_image(6, 6, Quality::generated, 2)};
  Tensor<float> t = data::to_tensor(imgs);
  CHECK(t.shape() == Shape{2, 1, 6, 6});
  auto back = data::from_tensor(t, Quality::generated);
  CHECK(back[0].px == imgs[0].px);
  CHECK(back[1].px == imgs[1].px);
}
