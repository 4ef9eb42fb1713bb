// Scalar reference kernels. std::fma keeps the accumulation rounding
// identical to the AVX2 backend's vfmadd (both are single-rounding fused
// ops), which is what makes the backends bit-for-bit comparable.

#include <cmath>

#include "dspk/kernels.hpp"
#include "dspk/thread_pool.hpp"

namespace dspk::kern {
namespace {

constexpr int64_t kGemmColBlock = 512;  // columns per parallel task

template <typename T>
void gemm_block(int64_t M, int64_t N, int64_t K, const T* A, const T* B, T* C,
                bool acc, int64_t n0, int64_t n1) {
  for (int64_t m = 0; m < M; ++m) {
    const T* a = A + m * K;
    T* c = C + m * N;
    for (int64_t n = n0; n < n1; ++n) {
      T s = acc ? c[n] : T(0);
      const T* bp = B + n;
      for (int64_t k = 0; k < K; ++k) {
        s = std::fma(a[k], bp[k * N], s);
      }
      c[n] = s;
    }
  }
}

template <typename T>
void gemm_impl(int64_t M, int64_t N, int64_t K, const T* A, const T* B, T* C,
               bool acc) {
  const int64_t nblocks = (N + kGemmColBlock - 1) / kGemmColBlock;
  if (nblocks > 1 && M * N * K > 1 << 16) {
    parallel_for(nblocks, [&](int64_t b) {
      int64_t n0 = b * kGemmColBlock;
      int64_t n1 = n0 + kGemmColBlock < N ? n0 + kGemmColBlock : N;
      gemm_block(M, N, K, A, B, C, acc, n0, n1);
    });
  } else {
    gemm_block(M, N, K, A, B, C, acc, int64_t(0), N);
  }
}

void gemm_f32(int64_t M, int64_t N, int64_t K, const float* A, const float* B,
              float* C, bool acc) {
  gemm_impl(M, N, K, A, B, C, acc);
}

template <typename T>
void vadd_impl(const T* a, const T* b, T* o, int64_t n) {
  for (int64_t i = 0; i < n; ++i) o[i] = a[i] + b[i];
}
template <typename T>
void vsub_impl(const T* a, const T* b, T* o, int64_t n) {
  for (int64_t i = 0; i < n; ++i) o[i] = a[i] - b[i];
}
template <typename T>
void vmul_impl(const T* a, const T* b, T* o, int64_t n) {
  for (int64_t i = 0; i < n; ++i) o[i] = a[i] * b[i];
}
template <typename T>
void vscale_impl(const T* x, T a, T* o, int64_t n) {
  for (int64_t i = 0; i < n; ++i) o[i] = a * x[i];
}
template <typename T>
void vaffine_impl(const T* x, T a, T b, T* o, int64_t n) {
  for (int64_t i = 0; i < n; ++i) o[i] = std::fma(a, x[i], b);
}
template <typename T>
void axpy_impl(T a, const T* x, T* y, int64_t n) {
  for (int64_t i = 0; i < n; ++i) y[i] = std::fma(a, x[i], y[i]);
}
template <typename T>
void relu_impl(const T* x, T* o, int64_t n) {
  for (int64_t i = 0; i < n; ++i) o[i] = x[i] > T(0) ? x[i] : T(0);
}
// Subgradient at 0 is 0: only strictly positive inputs pass gradient.
template <typename T>
void relu_bwd_impl(const T* x, const T* gy, T* gx, int64_t n) {
  for (int64_t i = 0; i < n; ++i) gx[i] += x[i] > T(0) ? gy[i] : T(0);
}
template <typename T>
void leaky_impl(const T* x, T alpha, T* o, int64_t n) {
  for (int64_t i = 0; i < n; ++i) o[i] = x[i] > T(0) ? x[i] : alpha * x[i];
}
template <typename T>
void leaky_bwd_impl(const T* x, T alpha, const T* gy, T* gx, int64_t n) {
  for (int64_t i = 0; i < n; ++i) gx[i] += x[i] > T(0) ? gy[i] : alpha * gy[i];
}
template <typename T>
void clamp_impl(const T* x, T lo, T hi, T* o, int64_t n) {
  for (int64_t i = 0; i < n; ++i) {
    T v = x[i];
    o[i] = v < lo ? lo : (v > hi ? hi : v);
  }
}
template <typename T>
void vmadd_impl(const T* a, const T* b, T* o, int64_t n) {
  for (int64_t i = 0; i < n; ++i) o[i] = o[i] + a[i] * b[i];
}
template <typename T>
void bn_norm_impl(const T* x, T mean, T a, T beta, T* o, int64_t n) {
  for (int64_t i = 0; i < n; ++i) o[i] = std::fma(a, x[i] - mean, beta);
}
template <typename T>
void bn_bwd_point_impl(const T* x, const T* dy, T* gx, T c1, T c2, T c3,
                       int64_t n) {
  for (int64_t i = 0; i < n; ++i) {
    gx[i] += std::fma(c1, dy[i], std::fma(c2, x[i], c3));
  }
}

}  // namespace

const KernelTable& scalar_table() {
  static const KernelTable t = {
      "scalar",
      gemm_f32,
      vadd_impl<float>,
      vsub_impl<float>,
      vmul_impl<float>,
      vscale_impl<float>,
      vaffine_impl<float>,
      axpy_impl<float>,
      relu_impl<float>,
      relu_bwd_impl<float>,
      leaky_impl<float>,
      leaky_bwd_impl<float>,
      clamp_impl<float>,
      vmadd_impl<float>,
      bn_norm_impl<float>,
      bn_bwd_point_impl<float>,
  };
  return t;
}

void K<double>::gemm(int64_t M, int64_t N, int64_t Kd, const double* A,
                     const double* B, double* C, bool acc) {
  gemm_impl(M, N, Kd, A, B, C, acc);
}
void K<double>::vadd(const double* a, const double* b, double* o, int64_t n) { vadd_impl(a, b, o, n); }
void K<double>::vsub(const double* a, const double* b, double* o, int64_t n) { vsub_impl(a, b, o, n); }
void K<double>::vmul(const double* a, const double* b, double* o, int64_t n) { vmul_impl(a, b, o, n); }
void K<double>::vscale(const double* x, double a, double* o, int64_t n) { vscale_impl(x, a, o, n); }
void K<double>::vaffine(const double* x, double a, double b, double* o, int64_t n) { vaffine_impl(x, a, b, o, n); }
void K<double>::axpy(double a, const double* x, double* y, int64_t n) { axpy_impl(a, x, y, n); }
void K<double>::relu(const double* x, double* o, int64_t n) { relu_impl(x, o, n); }
void K<double>::relu_bwd(const double* x, const double* gy, double* gx, int64_t n) { relu_bwd_impl(x, gy, gx, n); }
void K<double>::leaky(const double* x, double alpha, double* o, int64_t n) { leaky_impl(x, alpha, o, n); }
void K<double>::leaky_bwd(const double* x, double alpha, const double* gy, double* gx, int64_t n) { leaky_bwd_impl(x, alpha, gy, gx, n); }
void K<double>::clamp(const double* x, double lo, double hi, double* o, int64_t n) { clamp_impl(x, lo, hi, o, n); }
void K<double>::vmadd(const double* a, const double* b, double* o, int64_t n) { vmadd_impl(a, b, o, n); }
void K<double>::bn_norm(const double* x, double mean, double a, double beta, double* o, int64_t n) { bn_norm_impl(x, mean, a, beta, o, n); }
void K<double>::bn_bwd_point(const double* x, const double* dy, double* gx, double c1, double c2, double c3, int64_t n) { bn_bwd_point_impl(x, dy, gx, c1, c2, c3, n); }

}  // namespace dspk::kern
