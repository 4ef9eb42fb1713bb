// Convolution, batch normalization, pooling, the scalar-output affine layer
// and the Gaussian blur, with backward rules.
//
// Convolutions run as im2col + GEMM. The column layout indexes rows by
// (c, ky, kx) ascending, matching the flattened kernel layout, so GEMM's
// k-ascending accumulation reproduces the reference loop order exactly.

#include <cmath>
#include <cstring>
#include <vector>

#include "dspk/kernels.hpp"
#include "dspk/ops.hpp"

namespace dspk {
namespace {

template <typename T>
std::vector<T>& scratch(int which) {
  thread_local std::vector<T> bufs[4];
  return bufs[which];
}

template <typename T>
void im2col(const T* x, const Conv2dGeom& g, T* col) {
  const int64_t HW = g.Ho * g.Wo;
  for (int64_t c = 0; c < g.C; ++c) {
    const T* plane = x + c * g.H * g.W;
    for (int64_t ky = 0; ky < g.k; ++ky) {
      for (int64_t kx = 0; kx < g.k; ++kx) {
        T* row = col + ((c * g.k + ky) * g.k + kx) * HW;
        for (int64_t y = 0; y < g.Ho; ++y) {
          const int64_t iy = y * g.stride + ky - g.padH;
          T* dst = row + y * g.Wo;
          if (iy < 0 || iy >= g.H) {
            std::memset(dst, 0, sizeof(T) * g.Wo);
            continue;
          }
          const T* src = plane + iy * g.W;
          for (int64_t ox = 0; ox < g.Wo; ++ox) {
            const int64_t ix = ox * g.stride + kx - g.padW;
            dst[ox] = (ix >= 0 && ix < g.W) ? src[ix] : T(0);
          }
        }
      }
    }
  }
}

// Scatter-add of a column buffer back into an input-shaped gradient.
// Sequential by construction: overlapping windows accumulate in a fixed order.
template <typename T>
void col2im_add(const T* col, const Conv2dGeom& g, T* gx) {
  const int64_t HW = g.Ho * g.Wo;
  for (int64_t c = 0; c < g.C; ++c) {
    T* plane = gx + c * g.H * g.W;
    for (int64_t ky = 0; ky < g.k; ++ky) {
      for (int64_t kx = 0; kx < g.k; ++kx) {
        const T* row = col + ((c * g.k + ky) * g.k + kx) * HW;
        for (int64_t y = 0; y < g.Ho; ++y) {
          const int64_t iy = y * g.stride + ky - g.padH;
          if (iy < 0 || iy >= g.H) continue;
          T* dst = plane + iy * g.W;
          const T* src = row + y * g.Wo;
          for (int64_t ox = 0; ox < g.Wo; ++ox) {
            const int64_t ix = ox * g.stride + kx - g.padW;
            if (ix >= 0 && ix < g.W) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

template <typename T>
void transpose(const T* a, int64_t rows, int64_t cols, T* at) {
  for (int64_t r = 0; r < rows; ++r)
    for (int64_t c = 0; c < cols; ++c) at[c * rows + r] = a[r * cols + c];
}

// Symmetric (even) reflection; preserves total mass for normalized kernels.
inline int64_t mirror_index(int64_t i, int64_t n) {
  if (n == 1) return 0;
  const int64_t period = 2 * n;
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - 1 - i;
}

// 1-D Gaussian taps, double precision, adjusted so the sum is exactly 1.0.
std::vector<double> gaussian_taps(double sigma) {
  const int64_t r = static_cast<int64_t>(std::ceil(3.0 * sigma));
  std::vector<double> w(2 * r + 1);
  double s = 0.0;
  for (int64_t i = -r; i <= r; ++i) {
    w[i + r] = std::exp(-0.5 * double(i * i) / (sigma * sigma));
    s += w[i + r];
  }
  for (auto& v : w) v /= s;
  for (int pass = 0; pass < 4; ++pass) {
    double total = 0.0;
    for (double v : w) total += v;
    if (total == 1.0) break;
    w[r] -= total - 1.0;
  }
  return w;
}

// out[i] = sum_d w[d+r] * in[mirror(i+d)] along a strided line.
template <typename T>
void blur_line(const T* in, int64_t n, int64_t stride,
               const std::vector<double>& w, T* out, int64_t out_stride) {
  const int64_t r = (static_cast<int64_t>(w.size()) - 1) / 2;
  for (int64_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (int64_t d = -r; d <= r; ++d) {
      acc += w[d + r] * double(in[mirror_index(i + d, n) * stride]);
    }
    out[i * out_stride] = T(acc);
  }
}

// Adjoint of blur_line over double buffers (scatter form).
void blur_line_adjoint(const double* gin, int64_t n, int64_t stride,
                       const std::vector<double>& w, double* gout,
                       int64_t out_stride) {
  const int64_t r = (static_cast<int64_t>(w.size()) - 1) / 2;
  for (int64_t i = 0; i < n; ++i) {
    const double g = gin[i * stride];
    for (int64_t d = -r; d <= r; ++d) {
      gout[mirror_index(i + d, n) * out_stride] += w[d + r] * g;
    }
  }
}

template <typename T>
bool track2(Tape<T>* tape, std::initializer_list<const Tensor<T>*> ins) {
  if (tape == nullptr) return false;
  for (const auto* t : ins)
    if (t->requires_grad()) return true;
  return false;
}

}  // namespace

Conv2dGeom conv2d_geometry(const Shape& xs, const Shape& ws, int stride,
                           Padding pad) {
  check_dim(xs.size() == 4, "conv2d: input must be [N,C,H,W]");
  check_dim(ws.size() == 4, "conv2d: kernel must be [F,C,k,k]");
  check_dim(ws[2] == ws[3], "conv2d: kernel must be square");
  check_dim(ws[1] == xs[1], "conv2d: channel mismatch");
  check(stride == 1 || stride == 2, "conv2d: stride must be 1 or 2");
  Conv2dGeom g;
  g.N = xs[0];
  g.C = xs[1];
  g.H = xs[2];
  g.W = xs[3];
  g.F = ws[0];
  g.k = ws[2];
  g.stride = stride;
  if (pad == Padding::same) {
    g.Ho = (g.H + stride - 1) / stride;
    g.Wo = (g.W + stride - 1) / stride;
    const int64_t totH = std::max<int64_t>(0, (g.Ho - 1) * stride + g.k - g.H);
    const int64_t totW = std::max<int64_t>(0, (g.Wo - 1) * stride + g.k - g.W);
    g.padH = totH / 2;
    g.padW = totW / 2;
    check_dim(g.k <= g.H + totH && g.k <= g.W + totW,
              "conv2d: kernel larger than padded input");
  } else {
    check_dim(g.H >= g.k && g.W >= g.k,
              "conv2d: kernel larger than input (valid padding)");
    g.Ho = (g.H - g.k) / stride + 1;
    g.Wo = (g.W - g.k) / stride + 1;
    g.padH = g.padW = 0;
  }
  return g;
}

template <typename T>
Tensor<T> conv2d(Tape<T>* tape, const Tensor<T>& x, const Tensor<T>& w,
                 const Tensor<T>& b, int stride, Padding pad) {
  const Conv2dGeom g = conv2d_geometry(x.shape(), w.shape(), stride, pad);
  check_dim(b.shape() == Shape{int(g.F)}, "conv2d: bias must be [F]");
  check_finite(x, "conv2d input");
  check_finite(w, "conv2d kernel");
  check_finite(b, "conv2d bias");

  const int64_t R = g.C * g.k * g.k;
  const int64_t HW = g.Ho * g.Wo;
  Tensor<T> out(Shape{int(g.N), int(g.F), int(g.Ho), int(g.Wo)});

  auto& col = scratch<T>(0);
  col.resize(static_cast<size_t>(R * HW));
  for (int64_t n = 0; n < g.N; ++n) {
    im2col(x.data() + n * g.C * g.H * g.W, g, col.data());
    T* on = out.data() + n * g.F * HW;
    kern::K<T>::gemm(g.F, HW, R, w.data(), col.data(), on, false);
    for (int64_t f = 0; f < g.F; ++f) {
      kern::K<T>::vaffine(on + f * HW, T(1), b.data()[f], on + f * HW, HW);
    }
  }

  if (track2(tape, {&x, &w, &b})) {
    out.set_requires_grad(true);
    tape->record([x = x, w = w, b = b, out, g, R, HW]() mutable {
      if (!out.has_grad()) return;
      const T* gout = out.grad_values().data();
      if (x.requires_grad()) {
        auto& wt = scratch<T>(1);
        wt.resize(static_cast<size_t>(R * g.F));
        transpose(w.data(), g.F, R, wt.data());
        auto& dcol = scratch<T>(2);
        dcol.resize(static_cast<size_t>(R * HW));
        for (int64_t n = 0; n < g.N; ++n) {
          kern::K<T>::gemm(R, HW, g.F, wt.data(), gout + n * g.F * HW,
                           dcol.data(), false);
          col2im_add(dcol.data(), g, x.grad() + n * g.C * g.H * g.W);
        }
      }
      if (w.requires_grad()) {
        auto& col = scratch<T>(0);
        col.resize(static_cast<size_t>(R * HW));
        auto& colT = scratch<T>(3);
        colT.resize(static_cast<size_t>(R * HW));
        T* gw = w.grad();
        for (int64_t n = 0; n < g.N; ++n) {
          im2col(x.data() + n * g.C * g.H * g.W, g, col.data());
          transpose(col.data(), R, HW, colT.data());
          kern::K<T>::gemm(g.F, R, HW, gout + n * g.F * HW, colT.data(), gw,
                           true);
        }
      }
      if (b.requires_grad()) {
        T* gb = b.grad();
        for (int64_t n = 0; n < g.N; ++n) {
          for (int64_t f = 0; f < g.F; ++f) {
            double acc = 0.0;
            const T* p = gout + (n * g.F + f) * HW;
            for (int64_t i = 0; i < HW; ++i) acc += double(p[i]);
            gb[f] += T(acc);
          }
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> batch_norm(Tape<T>* tape, const Tensor<T>& x, const Tensor<T>& gamma,
                     const Tensor<T>& beta, Tensor<T>& running_mean,
                     Tensor<T>& running_var, Mode mode, double momentum,
                     double eps) {
  check_dim(x.shape().size() == 4, "batch_norm: input must be [N,C,H,W]");
  const int64_t N = x.shape()[0], C = x.shape()[1], H = x.shape()[2],
                W = x.shape()[3];
  check_dim(gamma.shape() == Shape{int(C)} && beta.shape() == Shape{int(C)},
            "batch_norm: gamma/beta must be [C]");
  check_dim(running_mean.shape() == Shape{int(C)} &&
                running_var.shape() == Shape{int(C)},
            "batch_norm: running stats must be [C]");
  check(eps > 0, "batch_norm: eps must be positive");
  const int64_t HW = H * W;
  const int64_t m = N * HW;

  auto means = std::make_shared<std::vector<double>>(C);
  auto invstds = std::make_shared<std::vector<double>>(C);

  if (mode == Mode::train) {
    if (m < 2)
      throw ContractError(
          "batch_norm: train mode needs at least 2 elements per channel "
          "(degenerate statistics)");
    for (int64_t c = 0; c < C; ++c) {
      double sum = 0.0;
      for (int64_t n = 0; n < N; ++n) {
        const T* p = x.data() + (n * C + c) * HW;
        for (int64_t i = 0; i < HW; ++i) sum += double(p[i]);
      }
      const double mean = sum / double(m);
      double sq = 0.0;
      for (int64_t n = 0; n < N; ++n) {
        const T* p = x.data() + (n * C + c) * HW;
        for (int64_t i = 0; i < HW; ++i) {
          const double d = double(p[i]) - mean;
          sq += d * d;
        }
      }
      const double var = sq / double(m);  // population variance
      (*means)[c] = mean;
      (*invstds)[c] = 1.0 / std::sqrt(var + eps);
      running_mean.data()[c] =
          T(momentum * double(running_mean.data()[c]) + (1.0 - momentum) * mean);
      running_var.data()[c] =
          T(momentum * double(running_var.data()[c]) + (1.0 - momentum) * var);
    }
  } else {
    for (int64_t c = 0; c < C; ++c) {
      (*means)[c] = double(running_mean.data()[c]);
      (*invstds)[c] = 1.0 / std::sqrt(double(running_var.data()[c]) + eps);
    }
  }

  Tensor<T> out(x.shape());
  for (int64_t c = 0; c < C; ++c) {
    const T a = T(double(gamma.data()[c]) * (*invstds)[c]);
    const T mean_c = T((*means)[c]);
    const T beta_c = beta.data()[c];
    for (int64_t n = 0; n < N; ++n) {
      const T* src = x.data() + (n * C + c) * HW;
      T* dst = out.data() + (n * C + c) * HW;
      kern::K<T>::bn_norm(src, mean_c, a, beta_c, dst, HW);
    }
  }

  if (track2(tape, {&x, &gamma, &beta})) {
    out.set_requires_grad(true);
    const bool train = mode == Mode::train;
    tape->record([x = x, gamma = gamma, beta = beta, out, means, invstds, N, C, HW, m, train]() mutable {
      if (!out.has_grad()) return;
      const T* gout = out.grad_values().data();
      for (int64_t c = 0; c < C; ++c) {
        const double mean = (*means)[c];
        const double invstd = (*invstds)[c];
        double s1 = 0.0, s2 = 0.0;  // sum(dy), sum(dy * xhat)
        for (int64_t n = 0; n < N; ++n) {
          const T* dy = gout + (n * C + c) * HW;
          const T* xv = x.data() + (n * C + c) * HW;
          for (int64_t i = 0; i < HW; ++i) {
            const double d = double(dy[i]);
            s1 += d;
            s2 += d * (double(xv[i]) - mean) * invstd;
          }
        }
        if (gamma.requires_grad()) gamma.grad()[c] += T(s2);
        if (beta.requires_grad()) beta.grad()[c] += T(s1);
        if (x.requires_grad()) {
          const double gam = double(gamma.data()[c]);
          double c1, c2, c3;
          if (train) {
            // dx = c1*dy + c2*x + c3 expands
            // gamma*invstd*(dy - s1/m - xhat*s2/m), xhat = (x-mean)*invstd
            c1 = gam * invstd;
            c2 = -gam * invstd * invstd * (s2 / double(m));
            c3 = gam * invstd *
                 (mean * invstd * (s2 / double(m)) - s1 / double(m));
          } else {
            c1 = gam * invstd;
            c2 = 0.0;
            c3 = 0.0;
          }
          for (int64_t n = 0; n < N; ++n) {
            kern::K<T>::bn_bwd_point(x.data() + (n * C + c) * HW,
                                     gout + (n * C + c) * HW,
                                     x.grad() + (n * C + c) * HW, T(c1), T(c2),
                                     T(c3), HW);
          }
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> global_avg_pool(Tape<T>* tape, const Tensor<T>& x) {
  check_dim(x.shape().size() == 4, "global_avg_pool: input must be [N,C,H,W]");
  const int64_t N = x.shape()[0], C = x.shape()[1];
  const int64_t HW = int64_t(x.shape()[2]) * x.shape()[3];
  Tensor<T> out(Shape{int(N), int(C)});
  const double inv = 1.0 / double(HW);
  for (int64_t n = 0; n < N; ++n) {
    for (int64_t c = 0; c < C; ++c) {
      double acc = 0.0;
      const T* p = x.data() + (n * C + c) * HW;
      for (int64_t i = 0; i < HW; ++i) acc += double(p[i]);
      out.data()[n * C + c] = T(acc * inv);
    }
  }
  if (track2(tape, {&x})) {
    out.set_requires_grad(true);
    tape->record([x = x, out, N, C, HW, inv]() mutable {
      if (!out.has_grad()) return;
      const T* go = out.grad();
      for (int64_t n = 0; n < N; ++n) {
        for (int64_t c = 0; c < C; ++c) {
          const T g = T(double(go[n * C + c]) * inv);
          T* gx = x.grad() + (n * C + c) * HW;
          for (int64_t i = 0; i < HW; ++i) gx[i] += g;
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> linear_vec(Tape<T>* tape, const Tensor<T>& x, const Tensor<T>& w,
                     const Tensor<T>& b) {
  check_dim(x.shape().size() == 2, "linear_vec: input must be [N,C]");
  const int64_t N = x.shape()[0], C = x.shape()[1];
  check_dim(w.shape() == Shape{int(C)}, "linear_vec: weight must be [C]");
  check_dim(b.size() == 1, "linear_vec: bias must be [1]");
  Tensor<T> out(Shape{int(N)});
  for (int64_t n = 0; n < N; ++n) {
    double acc = double(b.data()[0]);
    const T* row = x.data() + n * C;
    for (int64_t c = 0; c < C; ++c) acc += double(row[c]) * double(w.data()[c]);
    out.data()[n] = T(acc);
  }
  if (track2(tape, {&x, &w, &b})) {
    out.set_requires_grad(true);
    tape->record([x = x, w = w, b = b, out, N, C]() mutable {
      if (!out.has_grad()) return;
      const T* go = out.grad();
      if (x.requires_grad()) {
        for (int64_t n = 0; n < N; ++n)
          kern::K<T>::axpy(go[n], w.data(), x.grad() + n * C, C);
      }
      if (w.requires_grad()) {
        T* gw = w.grad();
        for (int64_t c = 0; c < C; ++c) {
          double acc = 0.0;
          for (int64_t n = 0; n < N; ++n)
            acc += double(go[n]) * double(x.data()[n * C + c]);
          gw[c] += T(acc);
        }
      }
      if (b.requires_grad()) {
        double acc = 0.0;
        for (int64_t n = 0; n < N; ++n) acc += double(go[n]);
        b.grad()[0] += T(acc);
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> gaussian_blur(Tape<T>* tape, const Tensor<T>& x, double sigma) {
  check(sigma > 0, "gaussian_blur: sigma must be positive");
  check_dim(x.shape().size() == 4, "gaussian_blur: input must be [N,C,H,W]");
  const int64_t N = x.shape()[0], C = x.shape()[1], H = x.shape()[2],
                W = x.shape()[3];
  auto taps = std::make_shared<std::vector<double>>(gaussian_taps(sigma));
  Tensor<T> out(x.shape());
  std::vector<T> tmp(static_cast<size_t>(H * W));
  for (int64_t p = 0; p < N * C; ++p) {
    const T* src = x.data() + p * H * W;
    T* dst = out.data() + p * H * W;
    for (int64_t y = 0; y < H; ++y)  // horizontal
      blur_line(src + y * W, W, 1, *taps, tmp.data() + y * W, 1);
    for (int64_t xcol = 0; xcol < W; ++xcol)  // vertical
      blur_line(tmp.data() + xcol, H, W, *taps, dst + xcol, W);
  }
  if (track2(tape, {&x})) {
    out.set_requires_grad(true);
    tape->record([x = x, out, taps, N, C, H, W]() mutable {
      if (!out.has_grad()) return;
      const T* gout = out.grad_values().data();
      std::vector<double> gtmp(static_cast<size_t>(H * W));
      std::vector<double> gsrc(static_cast<size_t>(H * W));
      std::vector<double> gline(static_cast<size_t>(std::max(H, W)));
      for (int64_t p = 0; p < N * C; ++p) {
        const T* go = gout + p * H * W;
        T* gx = x.grad() + p * H * W;
        std::fill(gtmp.begin(), gtmp.end(), 0.0);
        std::fill(gsrc.begin(), gsrc.end(), 0.0);
        // adjoint of the vertical pass
        for (int64_t xcol = 0; xcol < W; ++xcol) {
          for (int64_t y = 0; y < H; ++y) gline[y] = double(go[y * W + xcol]);
          blur_line_adjoint(gline.data(), H, 1, *taps, gtmp.data() + xcol, W);
        }
        // adjoint of the horizontal pass
        for (int64_t y = 0; y < H; ++y)
          blur_line_adjoint(gtmp.data() + y * W, W, 1, *taps,
                            gsrc.data() + y * W, 1);
        for (int64_t i = 0; i < H * W; ++i) gx[i] += T(gsrc[i]);
      }
    });
  }
  return out;
}

#define DSPK_INSTANTIATE_NN_OPS(T)                                            \
  template Tensor<T> conv2d<T>(Tape<T>*, const Tensor<T>&, const Tensor<T>&,  \
                               const Tensor<T>&, int, Padding);               \
  template Tensor<T> batch_norm<T>(Tape<T>*, const Tensor<T>&,                \
                                   const Tensor<T>&, const Tensor<T>&,        \
                                   Tensor<T>&, Tensor<T>&, Mode, double,      \
                                   double);                                   \
  template Tensor<T> global_avg_pool<T>(Tape<T>*, const Tensor<T>&);          \
  template Tensor<T> linear_vec<T>(Tape<T>*, const Tensor<T>&,                \
                                   const Tensor<T>&, const Tensor<T>&);       \
  template Tensor<T> gaussian_blur<T>(Tape<T>*, const Tensor<T>&, double);

DSPK_INSTANTIATE_NN_OPS(float)
DSPK_INSTANTIATE_NN_OPS(double)

}  // namespace dspk
