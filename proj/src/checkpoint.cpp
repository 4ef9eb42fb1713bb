#include "dspk/checkpoint.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

namespace dspk::train {

std::string format_gen_arch(const nn::GeneratorConfig& c) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%d %d %d %d %d %d %d %.17g %.17g",
                c.stem_kernel, c.channels, c.n_resblocks, c.convs_per_block,
                c.block_kernel, c.out_channels, c.conv_shortcut ? 1 : 0,
                c.bn_momentum, c.bn_eps);
  return buf;
}

nn::GeneratorConfig parse_gen_arch(const std::string& s) {
  nn::GeneratorConfig c;
  int conv_short = 0;
  if (std::sscanf(s.c_str(), "%d %d %d %d %d %d %d %lg %lg", &c.stem_kernel,
                  &c.channels, &c.n_resblocks, &c.convs_per_block,
                  &c.block_kernel, &c.out_channels, &conv_short,
                  &c.bn_momentum, &c.bn_eps) != 9)
    throw CheckpointError("malformed generator arch descriptor");
  c.conv_shortcut = conv_short != 0;
  return c;
}

std::string format_disc_arch(const nn::DiscriminatorConfig& c) {
  char buf[128];
  std::snprintf(buf, sizeof(buf), "%d %d %d %.17g", c.base_channels,
                c.n_stages, c.kernel, c.leaky_alpha);
  return buf;
}

nn::DiscriminatorConfig parse_disc_arch(const std::string& s) {
  nn::DiscriminatorConfig c;
  if (std::sscanf(s.c_str(), "%d %d %d %lg", &c.base_channels, &c.n_stages,
                  &c.kernel, &c.leaky_alpha) != 4)
    throw CheckpointError("malformed discriminator arch descriptor");
  return c;
}

const char* phase_name(Phase p) {
  switch (p) {
    case Phase::g_pre: return "g_pre";
    case Phase::d_pre: return "d_pre";
    case Phase::gan: return "gan";
  }
  return "?";
}

namespace {

constexpr char kMagic[4] = {'D', 'S', 'P', 'K'};

struct Writer {
  std::ofstream os;
  explicit Writer(const std::string& path)
      : os(path, std::ios::binary | std::ios::trunc) {
    if (!os) throw IoError("cannot write " + path);
  }
  void raw(const void* p, size_t n) {
    os.write(static_cast<const char*>(p), std::streamsize(n));
  }
  void u8(uint8_t v) { raw(&v, 1); }
  void u32(uint32_t v) { raw(&v, 4); }
  void u64(uint64_t v) { raw(&v, 8); }
  void f32s(const float* p, size_t n) { raw(p, 4 * n); }
  void str(const std::string& s) {
    u32(uint32_t(s.size()));
    raw(s.data(), s.size());
  }
};

struct Reader {
  std::ifstream is;
  explicit Reader(const std::string& path) : is(path, std::ios::binary) {
    if (!is) throw CheckpointError("cannot open checkpoint " + path);
  }
  void raw(void* p, size_t n) {
    is.read(static_cast<char*>(p), std::streamsize(n));
    if (size_t(is.gcount()) != n)
      throw CheckpointError("truncated checkpoint file");
  }
  uint8_t u8() {
    uint8_t v;
    raw(&v, 1);
    return v;
  }
  uint32_t u32() {
    uint32_t v;
    raw(&v, 4);
    return v;
  }
  uint64_t u64() {
    uint64_t v;
    raw(&v, 8);
    return v;
  }
  void f32s(float* p, size_t n) { raw(p, 4 * n); }
  std::string str(size_t max_len = 1u << 20) {
    const uint32_t n = u32();
    if (n > max_len) throw CheckpointError("implausible string length");
    std::string s(n, '\0');
    raw(s.data(), n);
    return s;
  }
  void expect_eof() {
    char c;
    is.read(&c, 1);
    if (!is.eof()) throw CheckpointError("trailing bytes after checkpoint");
  }
};

void write_adam(Writer& w, const AdamBlob& a) {
  w.u64(uint64_t(a.t));
  check(a.m.size() == a.v.size(), "checkpoint: malformed adam state");
  w.u32(uint32_t(a.m.size()));
  for (size_t i = 0; i < a.m.size(); ++i) {
    check(a.m[i].size() == a.v[i].size(), "checkpoint: malformed adam moments");
    w.u64(uint64_t(a.m[i].size()));
    w.f32s(a.m[i].data(), a.m[i].size());
    w.f32s(a.v[i].data(), a.v[i].size());
  }
}

AdamBlob read_adam(Reader& r) {
  AdamBlob a;
  a.t = int64_t(r.u64());
  const uint32_t count = r.u32();
  a.m.resize(count);
  a.v.resize(count);
  for (uint32_t i = 0; i < count; ++i) {
    const uint64_t len = r.u64();
    if (len > (1ull << 32)) throw CheckpointError("implausible moment length");
    a.m[i].resize(size_t(len));
    a.v[i].resize(size_t(len));
    r.f32s(a.m[i].data(), size_t(len));
    r.f32s(a.v[i].data(), size_t(len));
  }
  return a;
}

}  // namespace

void save_checkpoint_file(const Checkpoint& c, const std::string& path) {
  const std::string tmp = path + ".tmp";
  {
    Writer w(tmp);
    w.raw(kMagic, 4);
    w.u32(c.version);
    w.u64(c.config_hash);
    w.u8(uint8_t(c.phase));
    w.u64(uint64_t(c.counter));
    w.u8(c.has_disc ? 1 : 0);
    w.str(c.gen_arch);
    w.str(c.disc_arch);
    w.u32(uint32_t(c.tensors.size()));
    for (const auto& [name, t] : c.tensors) {
      w.str(name);
      w.u32(uint32_t(t.shape().size()));
      for (int d : t.shape()) w.u32(uint32_t(d));
      w.f32s(t.data(), size_t(t.size()));
    }
    write_adam(w, c.g_adam);
    w.u8(c.has_d_adam ? 1 : 0);
    if (c.has_d_adam) write_adam(w, c.d_adam);
    w.u32(uint32_t(c.buffer_capacity));
    w.u32(uint32_t(c.buffer_patch_size));
    w.u32(uint32_t(c.buffer_patches.size()));
    for (const auto& p : c.buffer_patches) {
      check(int(p.size()) == c.buffer_patch_size * c.buffer_patch_size,
            "checkpoint: malformed buffer patch");
      w.f32s(p.data(), p.size());
    }
    w.str(c.rng_state);
    w.os.flush();
    if (!w.os) throw IoError("short write to " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp + " to " + path);
}

Checkpoint load_checkpoint_file(const std::string& path) {
  Reader r(path);
  char magic[4];
  r.raw(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0)
    throw CheckpointError("bad magic bytes in " + path);
  Checkpoint c;
  c.version = r.u32();
  if (c.version != 1)
    throw CheckpointError("unsupported checkpoint version " +
                          std::to_string(c.version));
  c.config_hash = r.u64();
  const uint8_t phase = r.u8();
  if (phase > 2) throw CheckpointError("bad phase tag");
  c.phase = Phase(phase);
  c.counter = int64_t(r.u64());
  c.has_disc = r.u8() != 0;
  c.gen_arch = r.str();
  c.disc_arch = r.str();
  const uint32_t count = r.u32();
  for (uint32_t i = 0; i < count; ++i) {
    std::string name = r.str();
    const uint32_t rank = r.u32();
    if (rank > 8) throw CheckpointError("implausible tensor rank");
    Shape shape(rank);
    for (uint32_t d = 0; d < rank; ++d) {
      shape[d] = int(r.u32());
      if (shape[d] <= 0) throw CheckpointError("bad tensor dimension");
    }
    Tensor<float> t(shape);
    r.f32s(t.data(), size_t(t.size()));
    c.tensors.emplace_back(std::move(name), std::move(t));
  }
  c.g_adam = read_adam(r);
  c.has_d_adam = r.u8() != 0;
  if (c.has_d_adam) c.d_adam = read_adam(r);
  c.buffer_capacity = int(r.u32());
  c.buffer_patch_size = int(r.u32());
  const uint32_t npatches = r.u32();
  if (c.buffer_patch_size < 0 || c.buffer_patch_size > 16384)
    throw CheckpointError("implausible buffer patch size");
  for (uint32_t i = 0; i < npatches; ++i) {
    std::vector<float> p(size_t(c.buffer_patch_size) * c.buffer_patch_size);
    r.f32s(p.data(), p.size());
    c.buffer_patches.push_back(std::move(p));
  }
  c.rng_state = r.str();
  r.expect_eof();
  return c;
}

}  // namespace dspk::train
