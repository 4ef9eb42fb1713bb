#include "dspk/losses.hpp"

#include <cmath>

namespace dspk::loss {

void MsSsimConfig::validate() const {
  check(scales >= 1, "MsSsimConfig: scales must be >= 1");
  check(static_cast<int>(sigmas.size()) == scales,
        "MsSsimConfig: need one sigma per scale");
  double prev = 0.0;
  for (double s : sigmas) {
    check(s > prev, "MsSsimConfig: sigmas must be positive and strictly increasing");
    prev = s;
  }
  check(c1 > 0 && c2 > 0, "MsSsimConfig: C1 and C2 must be positive");
}

int MsSsimConfig::min_spatial() const {
  const double smax = sigmas.back();
  return 2 * static_cast<int>(std::ceil(3.0 * smax)) + 1;
}

void GanLossConfig::validate() const {
  check(lambda >= 0, "GanLossConfig: lambda must be >= 0");
  ms_ssim.validate();
}

template <typename T>
Tensor<T> l1_loss(Tape<T>* tape, const Tensor<T>& output, const Tensor<T>& input) {
  check_dim(output.shape() == input.shape(), "l1_loss: shape mismatch");
  return mean_all(tape, abs_val(tape, sub(tape, output, input)));
}

namespace {

template <typename T>
Tensor<T> mean_neg_log(Tape<T>* tape, const Tensor<T>& p) {
  return mul_const(tape, mean_all(tape, log_val(tape, p)), -1.0);
}

}  // namespace

template <typename T>
Tensor<T> discriminator_loss(Tape<T>* tape, const Tensor<T>& d_real,
                             const Tensor<T>& d_fake) {
  check(d_real.defined() && d_fake.defined() && d_real.size() >= 1 &&
            d_fake.size() >= 1,
        "discriminator_loss: empty batch");
  Tensor<T> pr = clamp_val(tape, d_real, kProbEps, 1.0 - kProbEps);
  Tensor<T> pf = clamp_val(tape, d_fake, kProbEps, 1.0 - kProbEps);
  Tensor<T> one_minus_pf = add_const(tape, mul_const(tape, pf, -1.0), 1.0);
  return add(tape, mean_neg_log(tape, pr), mean_neg_log(tape, one_minus_pf));
}

template <typename T>
Tensor<T> adversarial_term(Tape<T>* tape, const Tensor<T>& d_fake) {
  check(d_fake.defined() && d_fake.size() >= 1, "adversarial_term: empty batch");
  Tensor<T> pf = clamp_val(tape, d_fake, kProbEps, 1.0 - kProbEps);
  return mean_neg_log(tape, pf);
}

template <typename T>
Tensor<T> ms_ssim_loss(Tape<T>* tape, const Tensor<T>& output,
                       const Tensor<T>& input, const MsSsimConfig& cfg) {
  cfg.validate();
  check_dim(output.shape() == input.shape(), "ms_ssim_loss: shape mismatch");
  check_dim(output.shape().size() == 4, "ms_ssim_loss: input must be [N,C,H,W]");
  const int need = cfg.min_spatial();
  check_dim(output.shape()[2] >= need && output.shape()[3] >= need,
            "ms_ssim_loss: image too small for the largest Gaussian kernel");

  const Tensor<T>& x = input;
  const Tensor<T>& y = output;
  Tensor<T> score;  // [N]
  for (int j = 0; j < cfg.scales; ++j) {
    const double sigma = cfg.sigmas[size_t(j)];
    Tensor<T> mu_x = gaussian_blur(tape, x, sigma);
    Tensor<T> mu_y = gaussian_blur(tape, y, sigma);
    // sigma^2 = G*(a.b) - mu_a.mu_b
    Tensor<T> sxx = sub(tape, gaussian_blur(tape, mul(tape, x, x), sigma),
                        mul(tape, mu_x, mu_x));
    Tensor<T> syy = sub(tape, gaussian_blur(tape, mul(tape, y, y), sigma),
                        mul(tape, mu_y, mu_y));
    Tensor<T> sxy = sub(tape, gaussian_blur(tape, mul(tape, x, y), sigma),
                        mul(tape, mu_x, mu_y));
    Tensor<T> cs = div(tape, add_const(tape, mul_const(tape, sxy, 2.0), cfg.c2),
                       add_const(tape, add(tape, sxx, syy), cfg.c2));
    Tensor<T> cs_bar = sample_mean(tape, cs);
    score = score.defined() ? mul(tape, score, cs_bar) : cs_bar;
    if (j == cfg.scales - 1) {
      // luminance at the coarsest scale
      Tensor<T> l = div(
          tape,
          add_const(tape, mul_const(tape, mul(tape, mu_x, mu_y), 2.0), cfg.c1),
          add_const(tape,
                    add(tape, mul(tape, mu_x, mu_x), mul(tape, mu_y, mu_y)),
                    cfg.c1));
      score = mul(tape, score, sample_mean(tape, l));
    }
  }
  return add_const(tape, mul_const(tape, mean_all(tape, score), -1.0), 1.0);
}

template <typename T>
GeneratorLoss<T> generator_total_loss(Tape<T>* tape, const Tensor<T>& d_fake,
                                      const Tensor<T>& output,
                                      const Tensor<T>& input,
                                      const GanLossConfig& cfg) {
  cfg.validate();
  GeneratorLoss<T> parts;
  parts.adversarial = adversarial_term(tape, d_fake);
  parts.l1 = l1_loss(tape, output, input);
  parts.ms_ssim = ms_ssim_loss(tape, output, input, cfg.ms_ssim);
  parts.total = add(
      tape, parts.adversarial,
      mul_const(tape, add(tape, parts.l1, parts.ms_ssim), cfg.lambda));
  return parts;
}

#define DSPK_INSTANTIATE_LOSSES(T)                                            \
  template Tensor<T> l1_loss<T>(Tape<T>*, const Tensor<T>&, const Tensor<T>&); \
  template Tensor<T> discriminator_loss<T>(Tape<T>*, const Tensor<T>&,        \
                                           const Tensor<T>&);                 \
  template Tensor<T> adversarial_term<T>(Tape<T>*, const Tensor<T>&);         \
  template Tensor<T> ms_ssim_loss<T>(Tape<T>*, const Tensor<T>&,              \
                                     const Tensor<T>&, const MsSsimConfig&);  \
  template GeneratorLoss<T> generator_total_loss<T>(                          \
      Tape<T>*, const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,         \
      const GanLossConfig&);

DSPK_INSTANTIATE_LOSSES(float)
DSPK_INSTANTIATE_LOSSES(double)

}  // namespace dspk::loss
