#pragma once

// Training objectives: l1 reconstruction, discriminator binary cross-entropy,
// the non-saturating adversarial term, the multi-scale SSIM structural loss,
// and their weighted combination.

#include <vector>

#include "dspk/ops.hpp"

namespace dspk::loss {

struct MsSsimConfig {
  int scales = 3;
  std::vector<double> sigmas = {0.5, 1.0, 2.0};  // ascending, one per scale
  double c1 = 0.01;
  double c2 = 0.01;

  void validate() const;
  // smallest spatial extent the largest kernel fits
  int min_spatial() const;
};

struct GanLossConfig {
  double lambda = 0.5;  // structural-loss weight
  MsSsimConfig ms_ssim;

  void validate() const;
};

// Probabilities are clamped to [kProbEps, 1-kProbEps] before any log.
inline constexpr double kProbEps = 1e-7;

// mean |output - input| over batch and pixels.
template <typename T>
Tensor<T> l1_loss(Tape<T>* tape, const Tensor<T>& output, const Tensor<T>& input);

// mean(-log d_real) + mean(-log(1 - d_fake))
template <typename T>
Tensor<T> discriminator_loss(Tape<T>* tape, const Tensor<T>& d_real,
                             const Tensor<T>& d_fake);

// mean(-log d_fake), the non-saturating generator objective.
template <typename T>
Tensor<T> adversarial_term(Tape<T>* tape, const Tensor<T>& d_fake);

// 1 - mean_batch[ l_M * prod_j cs_j ]; luminance/contrast maps are averaged
// spatially before the product. Same-resolution scales, indexed by sigma.
template <typename T>
Tensor<T> ms_ssim_loss(Tape<T>* tape, const Tensor<T>& output,
                       const Tensor<T>& input,
                       const MsSsimConfig& cfg = MsSsimConfig{});

template <typename T>
struct GeneratorLoss {
  Tensor<T> total, adversarial, l1, ms_ssim;
};

// adversarial + lambda * (l1 + ms_ssim), with the components kept for logging.
template <typename T>
GeneratorLoss<T> generator_total_loss(Tape<T>* tape, const Tensor<T>& d_fake,
                                      const Tensor<T>& output,
                                      const Tensor<T>& input,
                                      const GanLossConfig& cfg);

}  // namespace dspk::loss
