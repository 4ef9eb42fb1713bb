#pragma once

// Patch extraction (moving window with overlap), random cropping, the replay
// buffer of generated patches, and discriminator minibatch assembly.

#include <string>
#include <vector>

#include "dspk/image.hpp"
#include "dspk/rng.hpp"
#include "dspk/tensor.hpp"

namespace dspk::data {

struct Patch {
  Image img;
  std::string source;
  int ox = 0, oy = 0;  // offset in the source image
};

struct PatchSet {
  std::string source_manifest;
  int patch_size = 0;
  Quality tag = Quality::low;
  std::vector<Patch> patches;
};

// Moving window; stride = size*(1-overlap_fraction); a final window is
// clamped to the image edge when the stride overshoots, so every pixel is
// covered.
PatchSet extract_patches(const Image& image, int size,
                         double overlap_fraction = 0.5,
                         const std::string& source = "");

PatchSet extract_patches_all(const std::vector<Image>& images, int size,
                             double overlap_fraction,
                             const std::string& manifest_name);

// Uniformly random valid offset; consumes rng (y offset first, then x).
Image random_crop(const Image& image, int size, Rng& rng);

// Fixed-capacity pool of generator outputs. Once full, each inserted patch
// replaces a distinct uniformly-chosen victim.
class ReplayBuffer {
 public:
  ReplayBuffer() = default;
  explicit ReplayBuffer(int capacity) : capacity_(capacity) {
    check(capacity >= 1, "ReplayBuffer: capacity must be >= 1");
  }

  int capacity() const { return capacity_; }
  int size() const { return int(pool_.size()); }
  const std::vector<Image>& pool() const { return pool_; }
  std::vector<Image>& mutable_pool() { return pool_; }
  void set_capacity(int c) { capacity_ = c; }

  void insert(const std::vector<Image>& patches, Rng& rng);
  std::vector<Image> sample(int k, Rng& rng) const;  // k distinct entries

 private:
  int capacity_ = 0;
  std::vector<Image> pool_;
};

struct DBatch {
  Tensor<float> real;        // [batch/2, 1, s, s]
  Tensor<float> fake;        // [batch/2, 1, s, s]
  std::vector<int> labels;   // batch entries; 1 = real, 0 = fake
  int n_real = 0, n_fresh = 0, n_buffer = 0;
};

// 50% real / 25% fresh fakes / 25% buffered fakes; an underfilled buffer's
// shortfall is covered by additional fresh fakes (warm-up rule).
DBatch assemble_d_minibatch(ReplayBuffer& buf, const PatchSet& real_set,
                            const std::vector<Image>& fresh_fakes, int batch,
                            Rng& rng);

// Stacks same-sized grayscale patches into [N,1,h,w].
Tensor<float> to_tensor(const std::vector<Image>& patches);
std::vector<Image> from_tensor(const Tensor<float>& t, Quality tag);

}  // namespace dspk::data
