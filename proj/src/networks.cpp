#include "dspk/networks.hpp"

#include <cmath>

namespace dspk::nn {
namespace {

// He-normal initialization for a conv kernel [F,C,k,k].
template <typename T>
Tensor<T> he_conv(Rng& rng, int f, int c, int k) {
  Tensor<T> w(Shape{f, c, k, k});
  const double std = std::sqrt(2.0 / (double(c) * k * k));
  for (int64_t i = 0; i < w.size(); ++i) w.data()[i] = T(rng.normal() * std);
  return w;
}

template <typename T>
void add_bn(ModelParams<T>& p, const std::string& prefix, int c) {
  p.add_param(prefix + ".g", Tensor<T>::full(Shape{c}, T(1)));
  p.add_param(prefix + ".b", Tensor<T>::zeros(Shape{c}));
  p.add_buffer(prefix + ".rm", Tensor<T>::zeros(Shape{c}));
  p.add_buffer(prefix + ".rv", Tensor<T>::full(Shape{c}, T(1)));
}

template <typename T>
Tensor<T> conv_layer(ModelParams<T>& p, const std::string& prefix,
                     Tape<T>* tape, const Tensor<T>& x, int stride) {
  return conv2d(tape, x, p.param(prefix + ".w"), p.param(prefix + ".b"),
                stride, Padding::same);
}

template <typename T>
Tensor<T> bn_layer(ModelParams<T>& p, const std::string& prefix, Tape<T>* tape,
                   const Tensor<T>& x, Mode mode, const GeneratorConfig& cfg) {
  return batch_norm(tape, x, p.param(prefix + ".g"), p.param(prefix + ".b"),
                    p.buffer(prefix + ".rm"), p.buffer(prefix + ".rv"), mode,
                    cfg.bn_momentum, cfg.bn_eps);
}

template <typename T>
void layer_finite(const Tensor<T>& t, const std::string& layer) {
  if (!all_finite(t))
    throw NumericError("generator: non-finite activations at layer " + layer);
}

}  // namespace

void GeneratorConfig::validate() const {
  check(n_resblocks >= 1, "GeneratorConfig: n_resblocks must be >= 1");
  check(channels >= 1, "GeneratorConfig: channels must be >= 1");
  check(convs_per_block >= 1, "GeneratorConfig: convs_per_block must be >= 1");
  check(out_channels >= 1, "GeneratorConfig: out_channels must be >= 1");
  check(stem_kernel >= 1 && stem_kernel % 2 == 1,
        "GeneratorConfig: stem_kernel must be odd");
  check(block_kernel >= 1 && block_kernel % 2 == 1,
        "GeneratorConfig: block_kernel must be odd");
  check(bn_momentum >= 0 && bn_momentum < 1,
        "GeneratorConfig: bn_momentum must be in [0,1)");
  check(bn_eps > 0, "GeneratorConfig: bn_eps must be positive");
}

void DiscriminatorConfig::validate() const {
  check(base_channels >= 1, "DiscriminatorConfig: base_channels must be >= 1");
  check(n_stages >= 1, "DiscriminatorConfig: n_stages must be >= 1");
  check(kernel >= 1 && kernel % 2 == 1,
        "DiscriminatorConfig: kernel must be odd");
  check(leaky_alpha >= 0 && leaky_alpha < 1,
        "DiscriminatorConfig: leaky_alpha must be in [0,1)");
}

template <typename T>
GeneratorModel<T> build_generator(const GeneratorConfig& cfg, uint64_t seed) {
  cfg.validate();
  Rng rng(seed);
  GeneratorModel<T> gen;
  gen.cfg = cfg;
  auto& p = gen.p;

  p.add_param("stem.conv.w", he_conv<T>(rng, cfg.channels, 1, cfg.stem_kernel));
  p.add_param("stem.conv.b", Tensor<T>::zeros(Shape{cfg.channels}));
  add_bn(p, "stem.bn", cfg.channels);

  for (int i = 0; i < cfg.n_resblocks; ++i) {
    const std::string b = "block" + std::to_string(i);
    for (int j = 0; j < cfg.convs_per_block; ++j) {
      const std::string c = b + ".conv" + std::to_string(j);
      p.add_param(c + ".w", he_conv<T>(rng, cfg.channels, cfg.channels,
                                       cfg.block_kernel));
      p.add_param(c + ".b", Tensor<T>::zeros(Shape{cfg.channels}));
      add_bn(p, b + ".bn" + std::to_string(j), cfg.channels);
    }
    if (cfg.conv_shortcut) {
      p.add_param(b + ".short.w", he_conv<T>(rng, cfg.channels, cfg.channels, 1));
      p.add_param(b + ".short.b", Tensor<T>::zeros(Shape{cfg.channels}));
    } else {
      // learnable scalar shortcut weight, starts as a plain identity pass
      p.add_param(b + ".short.w", Tensor<T>::full(Shape{1}, T(1)));
    }
  }

  p.add_param("final.conv.w",
              he_conv<T>(rng, cfg.out_channels, cfg.channels, cfg.block_kernel));
  p.add_param("final.conv.b", Tensor<T>::zeros(Shape{cfg.out_channels}));
  return gen;
}

template <typename T>
Tensor<T> generator_forward(GeneratorModel<T>& gen, const Tensor<T>& batch,
                            Mode mode, Tape<T>* tape) {
  const GeneratorConfig& cfg = gen.cfg;
  auto& p = gen.p;
  check_dim(batch.shape().size() == 4 && batch.shape()[1] == 1,
            "generator_forward: input must be [N,1,H,W]");
  check_dim(batch.shape()[2] >= cfg.stem_kernel &&
                batch.shape()[3] >= cfg.stem_kernel,
            "generator_forward: spatial size below stem kernel");
  check_finite(batch, "generator input");

  Tensor<T> h = conv_layer(p, "stem.conv", tape, batch, 1);
  h = bn_layer(p, "stem.bn", tape, h, mode, cfg);
  h = relu(tape, h);
  layer_finite(h, "stem");

  for (int i = 0; i < cfg.n_resblocks; ++i) {
    const std::string b = "block" + std::to_string(i);
    Tensor<T> branch = h;
    for (int j = 0; j < cfg.convs_per_block; ++j) {
      branch = conv_layer(p, b + ".conv" + std::to_string(j), tape, branch, 1);
      branch = bn_layer(p, b + ".bn" + std::to_string(j), tape, branch, mode, cfg);
      branch = relu(tape, branch);
    }
    Tensor<T> shortcut =
        cfg.conv_shortcut
            ? conv_layer(p, b + ".short", tape, h, 1)
            : scalar_scale(tape, h, p.param(b + ".short.w"));
    h = relu(tape, add(tape, shortcut, branch));
    layer_finite(h, b);
  }

  Tensor<T> out = conv_layer(p, "final.conv", tape, h, 1);
  layer_finite(out, "final");
  if (mode == Mode::infer) out = clamp_val(tape, out, 0.0, 1.0);
  return out;
}

template <typename T>
DiscriminatorModel<T> build_discriminator(const DiscriminatorConfig& cfg,
                                          uint64_t seed) {
  cfg.validate();
  Rng rng(seed);
  DiscriminatorModel<T> disc;
  disc.cfg = cfg;
  auto& p = disc.p;

  int in_ch = 1;
  for (int s = 0; s < cfg.n_stages; ++s) {
    const std::string st = "stage" + std::to_string(s);
    const int ch = cfg.base_channels << s;  // doubles at each strided conv
    p.add_param(st + ".conv0.w", he_conv<T>(rng, ch, in_ch, cfg.kernel));
    p.add_param(st + ".conv0.b", Tensor<T>::zeros(Shape{ch}));
    p.add_param(st + ".conv1.w", he_conv<T>(rng, ch * 2, ch, cfg.kernel));
    p.add_param(st + ".conv1.b", Tensor<T>::zeros(Shape{ch * 2}));
    in_ch = ch * 2;
  }
  Tensor<T> hw(Shape{in_ch});
  const double std = std::sqrt(2.0 / double(in_ch));
  for (int64_t i = 0; i < hw.size(); ++i) hw.data()[i] = T(rng.normal() * std);
  p.add_param("head.w", hw);
  p.add_param("head.b", Tensor<T>::zeros(Shape{1}));
  return disc;
}

template <typename T>
Tensor<T> discriminator_forward(DiscriminatorModel<T>& disc,
                                const Tensor<T>& batch, Mode /*mode*/,
                                Tape<T>* tape) {
  const DiscriminatorConfig& cfg = disc.cfg;
  auto& p = disc.p;
  check_dim(batch.shape().size() == 4 && batch.shape()[1] == 1,
            "discriminator_forward: input must be [N,1,H,W]");
  const int min_side = 1 << cfg.n_stages;
  check_dim(batch.shape()[2] >= min_side && batch.shape()[3] >= min_side,
            "discriminator_forward: spatial size too small for the stride chain");
  check_finite(batch, "discriminator input");

  Tensor<T> h = batch;
  for (int s = 0; s < cfg.n_stages; ++s) {
    const std::string st = "stage" + std::to_string(s);
    h = leaky_relu(tape, conv_layer(p, st + ".conv0", tape, h, 1), cfg.leaky_alpha);
    h = leaky_relu(tape, conv_layer(p, st + ".conv1", tape, h, 2), cfg.leaky_alpha);
    if (!all_finite(h))
      throw NumericError("discriminator: non-finite activations at " + st);
  }
  Tensor<T> pooled = global_avg_pool(tape, h);
  Tensor<T> logit = linear_vec(tape, pooled, p.param("head.w"), p.param("head.b"));
  Tensor<T> prob = sigmoid(tape, logit);
  // keep outputs strictly inside (0,1); float sigmoid saturates to 1.0
  return clamp_val(tape, prob, 1e-7, 1.0 - 1e-7);
}

template GeneratorModel<float> build_generator<float>(const GeneratorConfig&, uint64_t);
template GeneratorModel<double> build_generator<double>(const GeneratorConfig&, uint64_t);
template DiscriminatorModel<float> build_discriminator<float>(const DiscriminatorConfig&, uint64_t);
template DiscriminatorModel<double> build_discriminator<double>(const DiscriminatorConfig&, uint64_t);
template Tensor<float> generator_forward<float>(GeneratorModel<float>&, const Tensor<float>&, Mode, Tape<float>*);
template Tensor<double> generator_forward<double>(GeneratorModel<double>&, const Tensor<double>&, Mode, Tape<double>*);
template Tensor<float> discriminator_forward<float>(DiscriminatorModel<float>&, const Tensor<float>&, Mode, Tape<float>*);
template Tensor<double> discriminator_forward<double>(DiscriminatorModel<double>&, const Tensor<double>&, Mode, Tape<double>*);

}  // namespace dspk::nn
