#pragma once

// Versioned binary checkpoint. Layout (all little-endian):
//
//   magic "DSPK" | u32 version | u64 config_hash | u8 phase | u64 counter
//   u8 has_disc | str gen_arch | str disc_arch (strings are u32 len + bytes)
//   u32 tensor_count, then per tensor:
//     u32 name_len | name | u32 rank | u32 dims[rank] | f32 payload
//   adam(G): u64 t | u32 param_count | per param: u64 len, f32 m[], f32 v[]
//   u8 has_d_adam, then adam(D) in the same layout
//   replay buffer: u32 capacity | u32 patch_size | u32 count | f32 patches
//   rng: u32 len | text state
//
// Tensor names carry "g." / "g.buf." / "d." prefixes for the generator
// parameters, generator BN buffers, and discriminator parameters. A file
// must parse to exactly this layout with no trailing bytes; anything else
// raises CheckpointError and no partial state is returned. Save goes through
// a temp file + rename, so save->load->save round-trips byte-identically.
//
// A checkpoint pairs with the TrainConfig whose hash it records; resuming
// assumes the same datasets (manifests are the source of truth for order).

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dspk/networks.hpp"
#include "dspk/tensor.hpp"

namespace dspk::train {

enum class Phase : uint8_t { g_pre = 0, d_pre = 1, gan = 2 };

const char* phase_name(Phase p);

// Compact architecture descriptors stored inside checkpoints so inference
// does not need the original config file.
std::string format_gen_arch(const nn::GeneratorConfig& c);
nn::GeneratorConfig parse_gen_arch(const std::string& s);
std::string format_disc_arch(const nn::DiscriminatorConfig& c);
nn::DiscriminatorConfig parse_disc_arch(const std::string& s);

struct AdamBlob {
  int64_t t = 0;
  std::vector<std::vector<float>> m, v;
};

struct Checkpoint {
  uint32_t version = 1;
  uint64_t config_hash = 0;
  Phase phase = Phase::g_pre;
  int64_t counter = 0;
  bool has_disc = false;
  std::string gen_arch;
  std::string disc_arch;
  std::vector<std::pair<std::string, Tensor<float>>> tensors;
  AdamBlob g_adam;
  bool has_d_adam = false;
  AdamBlob d_adam;
  int buffer_capacity = 0;
  int buffer_patch_size = 0;
  std::vector<std::vector<float>> buffer_patches;
  std::string rng_state;
};

void save_checkpoint_file(const Checkpoint& c, const std::string& path);
Checkpoint load_checkpoint_file(const std::string& path);

}  // namespace dspk::train
