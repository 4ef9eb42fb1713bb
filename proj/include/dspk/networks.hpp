#pragma once

// The despeckling generator (stem + ResNet chain + projection conv) and the
// strided-convolution discriminator, built as parameterized graphs over the
// tensor ops.

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dspk/ops.hpp"
#include "dspk/rng.hpp"

namespace dspk::nn {

// Ordered, named parameter collection. Iteration order is construction
// order; checkpoints and the optimizer rely on it.
template <typename T>
struct ModelParams {
  std::vector<std::pair<std::string, Tensor<T>>> params;   // trainable
  std::vector<std::pair<std::string, Tensor<T>>> buffers;  // BN running stats

  void add_param(const std::string& name, Tensor<T> t) {
    check(find(params, name) < 0, "ModelParams: duplicate name " + name);
    t.set_requires_grad(true);
    params.emplace_back(name, std::move(t));
  }
  void add_buffer(const std::string& name, Tensor<T> t) {
    check(find(buffers, name) < 0, "ModelParams: duplicate buffer " + name);
    buffers.emplace_back(name, std::move(t));
  }
  Tensor<T>& param(const std::string& name) {
    int i = find(params, name);
    check(i >= 0, "ModelParams: no parameter named " + name);
    return params[size_t(i)].second;
  }
  Tensor<T>& buffer(const std::string& name) {
    int i = find(buffers, name);
    check(i >= 0, "ModelParams: no buffer named " + name);
    return buffers[size_t(i)].second;
  }
  std::vector<Tensor<T>> param_tensors() {
    std::vector<Tensor<T>> out;
    out.reserve(params.size());
    for (auto& kv : params) out.push_back(kv.second);
    return out;
  }
  int64_t scalar_count() const {
    int64_t n = 0;
    for (const auto& kv : params) n += kv.second.size();
    return n;
  }
  void zero_grads() {
    for (auto& kv : params) kv.second.zero_grad();
  }
  void set_requires_grad(bool v) {
    for (auto& kv : params) kv.second.set_requires_grad(v);
  }
  // Fingerprint of parameter values (not buffers, not grads).
  uint64_t value_hash() const {
    uint64_t h = 0xcbf29ce484222325ull;
    for (const auto& kv : params) {
      h = fnv1a(kv.first, h);
      h = fnv1a(kv.second.data(), sizeof(T) * size_t(kv.second.size()), h);
    }
    return h;
  }

 private:
  static int find(const std::vector<std::pair<std::string, Tensor<T>>>& v,
                  const std::string& name) {
    for (size_t i = 0; i < v.size(); ++i)
      if (v[i].first == name) return int(i);
    return -1;
  }
};

struct GeneratorConfig {
  int stem_kernel = 7;
  int channels = 64;
  int n_resblocks = 6;
  int convs_per_block = 3;
  int block_kernel = 3;
  int out_channels = 1;
  bool conv_shortcut = false;  // 1x1-conv shortcut instead of the scalar
  double bn_momentum = 0.9;
  double bn_eps = 1e-5;

  void validate() const;
};

struct DiscriminatorConfig {
  int base_channels = 32;
  int n_stages = 3;  // each stage: stride-1 conv then stride-2 conv
  int kernel = 3;
  double leaky_alpha = 0.2;

  void validate() const;
};

template <typename T>
struct GeneratorModel {
  GeneratorConfig cfg;
  ModelParams<T> p;
};

template <typename T>
struct DiscriminatorModel {
  DiscriminatorConfig cfg;
  ModelParams<T> p;
};

template <typename T>
GeneratorModel<T> build_generator(const GeneratorConfig& cfg, uint64_t seed);

template <typename T>
DiscriminatorModel<T> build_discriminator(const DiscriminatorConfig& cfg,
                                          uint64_t seed);

// Fully convolutional; output shape equals input shape. Infer mode uses the
// stored BN statistics and clamps the output to [0,1].
template <typename T>
Tensor<T> generator_forward(GeneratorModel<T>& gen, const Tensor<T>& batch,
                            Mode mode, Tape<T>* tape);

// Probabilities in (0,1), one per sample.
template <typename T>
Tensor<T> discriminator_forward(DiscriminatorModel<T>& disc,
                                const Tensor<T>& batch, Mode mode,
                                Tape<T>* tape);

template <typename T>
Tensor<T> generator_forward(GeneratorModel<T>& gen, const Tensor<T>& batch,
                            Mode mode, std::nullptr_t) {
  return generator_forward(gen, batch, mode, static_cast<Tape<T>*>(nullptr));
}

template <typename T>
Tensor<T> discriminator_forward(DiscriminatorModel<T>& disc,
                                const Tensor<T>& batch, Mode mode,
                                std::nullptr_t) {
  return discriminator_forward(disc, batch, mode, static_cast<Tape<T>*>(nullptr));
}

}  // namespace dspk::nn
