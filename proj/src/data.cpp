#include "dspk/data.hpp"

#include <algorithm>
#include <cmath>

namespace dspk::data {
namespace {

std::vector<int> window_starts(int dim, int size, int stride) {
  std::vector<int> pos;
  for (int p = 0; p + size <= dim; p += stride) pos.push_back(p);
  if (pos.empty() || pos.back() + size < dim) pos.push_back(dim - size);
  return pos;
}

}  // namespace

PatchSet extract_patches(const Image& image, int size, double overlap_fraction,
                         const std::string& source) {
  check(size >= 1, "extract_patches: size must be >= 1");
  check(overlap_fraction >= 0.0 && overlap_fraction < 1.0,
        "extract_patches: overlap_fraction must be in [0,1)");
  check_dim(image.h >= size && image.w >= size,
            "extract_patches: image smaller than patch size");
  const int stride =
      std::max(1, int(std::llround(double(size) * (1.0 - overlap_fraction))));
  PatchSet set;
  set.patch_size = size;
  set.tag = image.tag;
  set.source_manifest = source;
  const auto ys = window_starts(image.h, size, stride);
  const auto xs = window_starts(image.w, size, stride);
  for (int y : ys) {
    for (int x : xs) {
      Patch p;
      p.source = source;
      p.ox = x;
      p.oy = y;
      p.img = Image(size, size, image.tag);
      for (int r = 0; r < size; ++r)
        std::copy_n(&image.px[size_t(y + r) * image.w + x], size,
                    &p.img.px[size_t(r) * size]);
      set.patches.push_back(std::move(p));
    }
  }
  return set;
}

PatchSet extract_patches_all(const std::vector<Image>& images, int size,
                             double overlap_fraction,
                             const std::string& manifest_name) {
  check(!images.empty(), "extract_patches_all: empty image list");
  PatchSet all;
  all.patch_size = size;
  all.tag = images.front().tag;
  all.source_manifest = manifest_name;
  for (size_t i = 0; i < images.size(); ++i) {
    PatchSet one = extract_patches(images[i], size, overlap_fraction,
                                   manifest_name + "#" + std::to_string(i));
    for (auto& p : one.patches) all.patches.push_back(std::move(p));
  }
  return all;
}

Image random_crop(const Image& image, int size, Rng& rng) {
  check_dim(image.h >= size && image.w >= size,
            "random_crop: image smaller than crop size");
  const int oy = int(rng.uniform_below(uint64_t(image.h - size + 1)));
  const int ox = int(rng.uniform_below(uint64_t(image.w - size + 1)));
  Image out(size, size, image.tag);
  for (int r = 0; r < size; ++r)
    std::copy_n(&image.px[size_t(oy + r) * image.w + ox], size,
                &out.px[size_t(r) * size]);
  return out;
}

void ReplayBuffer::insert(const std::vector<Image>& patches, Rng& rng) {
  check(capacity_ >= 1, "ReplayBuffer: not initialized");
  for (const auto& p : patches)
    check(p.tag == Quality::generated,
          "ReplayBuffer: only generator outputs may be buffered");
  size_t i = 0;
  while (i < patches.size() && int(pool_.size()) < capacity_) {
    pool_.push_back(patches[i]);
    ++i;
  }
  const size_t remaining = patches.size() - i;
  if (remaining == 0) return;
  check(remaining <= pool_.size(),
        "ReplayBuffer: inserting more than capacity in one call");
  // distinct victims via partial Fisher-Yates
  std::vector<int> idx(pool_.size());
  for (size_t j = 0; j < idx.size(); ++j) idx[j] = int(j);
  for (size_t j = 0; j < remaining; ++j) {
    const size_t pick = j + size_t(rng.uniform_below(idx.size() - j));
    std::swap(idx[j], idx[pick]);
    pool_[size_t(idx[j])] = patches[i + j];
  }
}

std::vector<Image> ReplayBuffer::sample(int k, Rng& rng) const {
  check(k >= 0 && k <= int(pool_.size()), "ReplayBuffer::sample: k out of range");
  std::vector<int> idx(pool_.size());
  for (size_t j = 0; j < idx.size(); ++j) idx[j] = int(j);
  std::vector<Image> out;
  out.reserve(size_t(k));
  for (int j = 0; j < k; ++j) {
    const size_t pick = size_t(j) + size_t(rng.uniform_below(idx.size() - size_t(j)));
    std::swap(idx[size_t(j)], idx[pick]);
    out.push_back(pool_[size_t(idx[size_t(j)])]);
  }
  return out;
}

DBatch assemble_d_minibatch(ReplayBuffer& buf, const PatchSet& real_set,
                            const std::vector<Image>& fresh_fakes, int batch,
                            Rng& rng) {
  check(batch >= 4 && batch % 4 == 0,
        "assemble_d_minibatch: batch must be divisible by 4");
  check(!real_set.patches.empty(), "assemble_d_minibatch: empty real set");
  const int n_real = batch / 2;
  const int want_buffer = batch / 4;
  const int n_buffer = std::min(want_buffer, buf.size());
  const int n_fresh = batch / 2 - n_buffer;
  check(int(fresh_fakes.size()) >= n_fresh,
        "assemble_d_minibatch: not enough fresh fakes");

  std::vector<Image> real;
  real.reserve(size_t(n_real));
  for (int i = 0; i < n_real; ++i) {
    const size_t pick = size_t(rng.uniform_below(real_set.patches.size()));
    real.push_back(real_set.patches[pick].img);
  }
  std::vector<Image> fake(fresh_fakes.begin(), fresh_fakes.begin() + n_fresh);
  for (auto& f : fake)
    check(f.tag == Quality::generated,
          "assemble_d_minibatch: fakes must be generator outputs");
  if (n_buffer > 0) {
    auto sampled = buf.sample(n_buffer, rng);
    for (auto& s : sampled) fake.push_back(std::move(s));
  }

  DBatch out;
  out.real = to_tensor(real);
  out.fake = to_tensor(fake);
  out.labels.assign(size_t(batch), 0);
  for (int i = 0; i < n_real; ++i) out.labels[size_t(i)] = 1;
  out.n_real = n_real;
  out.n_fresh = n_fresh;
  out.n_buffer = n_buffer;
  return out;
}

Tensor<float> to_tensor(const std::vector<Image>& patches) {
  check(!patches.empty(), "to_tensor: empty patch list");
  const int h = patches.front().h, w = patches.front().w;
  Tensor<float> t(Shape{int(patches.size()), 1, h, w});
  float* dst = t.data();
  for (const auto& p : patches) {
    check_dim(p.h == h && p.w == w, "to_tensor: mixed patch sizes");
    std::copy(p.px.begin(), p.px.end(), dst);
    dst += p.px.size();
  }
  return t;
}

std::vector<Image> from_tensor(const Tensor<float>& t, Quality tag) {
  check_dim(t.shape().size() == 4 && t.shape()[1] == 1,
            "from_tensor: expected [N,1,H,W]");
  const int n = t.shape()[0], h = t.shape()[2], w = t.shape()[3];
  std::vector<Image> out;
  out.reserve(size_t(n));
  for (int i = 0; i < n; ++i) {
    Image img(h, w, tag);
    std::copy_n(t.data() + int64_t(i) * h * w, int64_t(h) * w, img.px.begin());
    out.push_back(std::move(img));
  }
  return out;
}

}  // namespace dspk::data
