#pragma once

// Differentiable operations over Tensor<T>. Every op computes its forward
// result immediately; when `tape` is non-null and an input is tracked, a
// backward rule is recorded. Passing tape == nullptr runs inference-only.
//
// Layout is N,C,H,W row-major throughout. Reductions accumulate in double
// regardless of T and are always sequential, so results do not depend on the
// backend or thread count.

#include "dspk/tensor.hpp"

namespace dspk {

enum class Padding { same, valid };
enum class Mode { train, infer };

struct Conv2dGeom {
  int64_t N, C, H, W, F, k, stride;
  int64_t padH, padW;  // leading pad (zero padding)
  int64_t Ho, Wo;
};

Conv2dGeom conv2d_geometry(const Shape& x, const Shape& w, int stride, Padding pad);

template <typename T>
Tensor<T> conv2d(Tape<T>* tape, const Tensor<T>& x, const Tensor<T>& w,
                 const Tensor<T>& b, int stride, Padding pad);

// Running statistics live in `running_mean` / `running_var` (shape [C], not
// tracked); train mode updates them in place.
template <typename T>
Tensor<T> batch_norm(Tape<T>* tape, const Tensor<T>& x, const Tensor<T>& gamma,
                     const Tensor<T>& beta, Tensor<T>& running_mean,
                     Tensor<T>& running_var, Mode mode, double momentum,
                     double eps);

template <typename T>
Tensor<T> relu(Tape<T>* tape, const Tensor<T>& x);

template <typename T>
Tensor<T> leaky_relu(Tape<T>* tape, const Tensor<T>& x, double alpha);

template <typename T>
Tensor<T> sigmoid(Tape<T>* tape, const Tensor<T>& x);

// [N,C,H,W] -> [N,C]
template <typename T>
Tensor<T> global_avg_pool(Tape<T>* tape, const Tensor<T>& x);

// x:[N,C] w:[C] b:[1] -> [N]
template <typename T>
Tensor<T> linear_vec(Tape<T>* tape, const Tensor<T>& x, const Tensor<T>& w,
                     const Tensor<T>& b);

// Separable Gaussian, radius ceil(3*sigma), symmetric reflection at borders,
// weights normalized to sum exactly 1.
template <typename T>
Tensor<T> gaussian_blur(Tape<T>* tape, const Tensor<T>& x, double sigma);

template <typename T>
Tensor<T> add(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> sub(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> mul(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> div(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> add_const(Tape<T>* tape, const Tensor<T>& a, double c);
template <typename T>
Tensor<T> mul_const(Tape<T>* tape, const Tensor<T>& a, double c);

// out = s[0] * x, s a tracked scalar tensor (the weighted shortcut).
template <typename T>
Tensor<T> scalar_scale(Tape<T>* tape, const Tensor<T>& x, const Tensor<T>& s);

template <typename T>
Tensor<T> abs_val(Tape<T>* tape, const Tensor<T>& x);
template <typename T>
Tensor<T> log_val(Tape<T>* tape, const Tensor<T>& x);
template <typename T>
Tensor<T> clamp_val(Tape<T>* tape, const Tensor<T>& x, double lo, double hi);

template <typename T>
Tensor<T> sum_all(Tape<T>* tape, const Tensor<T>& x);  // -> [1]
template <typename T>
Tensor<T> mean_all(Tape<T>* tape, const Tensor<T>& x);  // -> [1]

// Mean over all non-batch dimensions: [N,...] -> [N]
template <typename T>
Tensor<T> sample_mean(Tape<T>* tape, const Tensor<T>& x);

}  // namespace dspk
