// AVX2/FMA kernels. Each output element is computed independently and in the
// same accumulation order as the scalar reference, so the two backends agree
// bit-for-bit. This translation unit is compiled with -mavx2 -mfma and only
// entered when the dispatcher has verified CPU support.

#if defined(__x86_64__) || defined(_M_X64)

#include <immintrin.h>

#include <cmath>

#include "dspk/kernels.hpp"
#include "dspk/thread_pool.hpp"

namespace dspk::kern {
namespace {

constexpr int64_t kGemmColBlock = 512;

// 1xNR strip for one row of C; NR = 16 (two ymm accumulators).
inline void gemm_row_n16(int64_t N, int64_t K, const float* a, const float* B,
                         float* c, bool acc, int64_t n) {
  __m256 acc0 = acc ? _mm256_loadu_ps(c + n) : _mm256_setzero_ps();
  __m256 acc1 = acc ? _mm256_loadu_ps(c + n + 8) : _mm256_setzero_ps();
  const float* bp = B + n;
  for (int64_t k = 0; k < K; ++k, bp += N) {
    __m256 av = _mm256_set1_ps(a[k]);
    acc0 = _mm256_fmadd_ps(av, _mm256_loadu_ps(bp), acc0);
    acc1 = _mm256_fmadd_ps(av, _mm256_loadu_ps(bp + 8), acc1);
  }
  _mm256_storeu_ps(c + n, acc0);
  _mm256_storeu_ps(c + n + 8, acc1);
}

inline void gemm_row_n8(int64_t N, int64_t K, const float* a, const float* B,
                        float* c, bool acc, int64_t n) {
  __m256 acc0 = acc ? _mm256_loadu_ps(c + n) : _mm256_setzero_ps();
  const float* bp = B + n;
  for (int64_t k = 0; k < K; ++k, bp += N) {
    acc0 = _mm256_fmadd_ps(_mm256_set1_ps(a[k]), _mm256_loadu_ps(bp), acc0);
  }
  _mm256_storeu_ps(c + n, acc0);
}

// 4 rows x 16 columns register tile.
inline void gemm_tile_m4n16(int64_t N, int64_t K, const float* A, int64_t lda,
                            const float* B, float* C, bool acc, int64_t m,
                            int64_t n) {
  __m256 r[4][2];
  for (int i = 0; i < 4; ++i) {
    float* c = C + (m + i) * N + n;
    r[i][0] = acc ? _mm256_loadu_ps(c) : _mm256_setzero_ps();
    r[i][1] = acc ? _mm256_loadu_ps(c + 8) : _mm256_setzero_ps();
  }
  const float* bp = B + n;
  for (int64_t k = 0; k < K; ++k, bp += N) {
    __m256 b0 = _mm256_loadu_ps(bp);
    __m256 b1 = _mm256_loadu_ps(bp + 8);
    for (int i = 0; i < 4; ++i) {
      __m256 av = _mm256_set1_ps(A[(m + i) * lda + k]);
      r[i][0] = _mm256_fmadd_ps(av, b0, r[i][0]);
      r[i][1] = _mm256_fmadd_ps(av, b1, r[i][1]);
    }
  }
  for (int i = 0; i < 4; ++i) {
    float* c = C + (m + i) * N + n;
    _mm256_storeu_ps(c, r[i][0]);
    _mm256_storeu_ps(c + 8, r[i][1]);
  }
}

void gemm_block(int64_t M, int64_t N, int64_t K, const float* A,
                const float* B, float* C, bool acc, int64_t n0, int64_t n1) {
  int64_t n = n0;
  for (; n + 16 <= n1; n += 16) {
    int64_t m = 0;
    for (; m + 4 <= M; m += 4) gemm_tile_m4n16(N, K, A, K, B, C, acc, m, n);
    for (; m < M; ++m) gemm_row_n16(N, K, A + m * K, B, C + m * N, acc, n);
  }
  for (; n + 8 <= n1; n += 8) {
    for (int64_t m = 0; m < M; ++m)
      gemm_row_n8(N, K, A + m * K, B, C + m * N, acc, n);
  }
  // scalar tail, same fused accumulation
  for (; n < n1; ++n) {
    for (int64_t m = 0; m < M; ++m) {
      const float* a = A + m * K;
      float s = acc ? C[m * N + n] : 0.0f;
      const float* bp = B + n;
      for (int64_t k = 0; k < K; ++k) s = std::fma(a[k], bp[k * N], s);
      C[m * N + n] = s;
    }
  }
}

void gemm_avx2(int64_t M, int64_t N, int64_t K, const float* A, const float* B,
               float* C, bool acc) {
  const int64_t nblocks = (N + kGemmColBlock - 1) / kGemmColBlock;
  if (nblocks > 1 && M * N * K > 1 << 16) {
    parallel_for(nblocks, [&](int64_t b) {
      int64_t n0 = b * kGemmColBlock;
      int64_t n1 = n0 + kGemmColBlock < N ? n0 + kGemmColBlock : N;
      gemm_block(M, N, K, A, B, C, acc, n0, n1);
    });
  } else {
    gemm_block(M, N, K, A, B, C, acc, 0, N);
  }
}

void vadd_avx2(const float* a, const float* b, float* o, int64_t n) {
  int64_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(o + i, _mm256_add_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
  for (; i < n; ++i) o[i] = a[i] + b[i];
}

void vsub_avx2(const float* a, const float* b, float* o, int64_t n) {
  int64_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(o + i, _mm256_sub_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
  for (; i < n; ++i) o[i] = a[i] - b[i];
}

void vmul_avx2(const float* a, const float* b, float* o, int64_t n) {
  int64_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(o + i, _mm256_mul_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
  for (; i < n; ++i) o[i] = a[i] * b[i];
}

void vscale_avx2(const float* x, float a, float* o, int64_t n) {
  __m256 av = _mm256_set1_ps(a);
  int64_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(o + i, _mm256_mul_ps(av, _mm256_loadu_ps(x + i)));
  for (; i < n; ++i) o[i] = a * x[i];
}

void vaffine_avx2(const float* x, float a, float b, float* o, int64_t n) {
  __m256 av = _mm256_set1_ps(a), bv = _mm256_set1_ps(b);
  int64_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(o + i, _mm256_fmadd_ps(av, _mm256_loadu_ps(x + i), bv));
  for (; i < n; ++i) o[i] = std::fma(a, x[i], b);
}

void axpy_avx2(float a, const float* x, float* y, int64_t n) {
  __m256 av = _mm256_set1_ps(a);
  int64_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(y + i, _mm256_fmadd_ps(av, _mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i)));
  for (; i < n; ++i) y[i] = std::fma(a, x[i], y[i]);
}

void relu_avx2(const float* x, float* o, int64_t n) {
  __m256 z = _mm256_setzero_ps();
  int64_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(o + i, _mm256_max_ps(_mm256_loadu_ps(x + i), z));
  for (; i < n; ++i) o[i] = x[i] > 0.0f ? x[i] : 0.0f;
}

void relu_bwd_avx2(const float* x, const float* gy, float* gx, int64_t n) {
  __m256 z = _mm256_setzero_ps();
  int64_t i = 0;
  for (; i + 8 <= n; i += 8) {
    __m256 mask = _mm256_cmp_ps(_mm256_loadu_ps(x + i), z, _CMP_GT_OQ);
    __m256 g = _mm256_and_ps(mask, _mm256_loadu_ps(gy + i));
    _mm256_storeu_ps(gx + i, _mm256_add_ps(_mm256_loadu_ps(gx + i), g));
  }
  for (; i < n; ++i) gx[i] += x[i] > 0.0f ? gy[i] : 0.0f;
}

void leaky_avx2(const float* x, float alpha, float* o, int64_t n) {
  __m256 av = _mm256_set1_ps(alpha);
  __m256 z = _mm256_setzero_ps();
  int64_t i = 0;
  for (; i + 8 <= n; i += 8) {
    __m256 xv = _mm256_loadu_ps(x + i);
    __m256 mask = _mm256_cmp_ps(xv, z, _CMP_GT_OQ);
    _mm256_storeu_ps(o + i, _mm256_blendv_ps(_mm256_mul_ps(av, xv), xv, mask));
  }
  for (; i < n; ++i) o[i] = x[i] > 0.0f ? x[i] : alpha * x[i];
}

void leaky_bwd_avx2(const float* x, float alpha, const float* gy, float* gx,
                    int64_t n) {
  __m256 av = _mm256_set1_ps(alpha);
  __m256 z = _mm256_setzero_ps();
  int64_t i = 0;
  for (; i + 8 <= n; i += 8) {
    __m256 gv = _mm256_loadu_ps(gy + i);
    __m256 mask = _mm256_cmp_ps(_mm256_loadu_ps(x + i), z, _CMP_GT_OQ);
    __m256 g = _mm256_blendv_ps(_mm256_mul_ps(av, gv), gv, mask);
    _mm256_storeu_ps(gx + i, _mm256_add_ps(_mm256_loadu_ps(gx + i), g));
  }
  for (; i < n; ++i) gx[i] += x[i] > 0.0f ? gy[i] : alpha * gy[i];
}

void clamp_avx2(const float* x, float lo, float hi, float* o, int64_t n) {
  __m256 lov = _mm256_set1_ps(lo), hiv = _mm256_set1_ps(hi);
  int64_t i = 0;
  for (; i + 8 <= n; i += 8) {
    __m256 v = _mm256_loadu_ps(x + i);
    __m256 t = _mm256_blendv_ps(v, lov, _mm256_cmp_ps(v, lov, _CMP_LT_OQ));
    _mm256_storeu_ps(o + i, _mm256_blendv_ps(t, hiv, _mm256_cmp_ps(t, hiv, _CMP_GT_OQ)));
  }
  for (; i < n; ++i) {
    float v = x[i];
    o[i] = v < lo ? lo : (v > hi ? hi : v);
  }
}

void vmadd_avx2(const float* a, const float* b, float* o, int64_t n) {
  int64_t i = 0;
  for (; i + 8 <= n; i += 8) {
    __m256 p = _mm256_mul_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i));
    _mm256_storeu_ps(o + i, _mm256_add_ps(_mm256_loadu_ps(o + i), p));
  }
  for (; i < n; ++i) o[i] = o[i] + a[i] * b[i];
}

void bn_norm_avx2(const float* x, float mean, float a, float beta, float* o,
                  int64_t n) {
  __m256 mv = _mm256_set1_ps(mean), av = _mm256_set1_ps(a), bv = _mm256_set1_ps(beta);
  int64_t i = 0;
  for (; i + 8 <= n; i += 8) {
    __m256 d = _mm256_sub_ps(_mm256_loadu_ps(x + i), mv);
    _mm256_storeu_ps(o + i, _mm256_fmadd_ps(av, d, bv));
  }
  for (; i < n; ++i) o[i] = std::fma(a, x[i] - mean, beta);
}

void bn_bwd_point_avx2(const float* x, const float* dy, float* gx, float c1,
                       float c2, float c3, int64_t n) {
  __m256 c1v = _mm256_set1_ps(c1), c2v = _mm256_set1_ps(c2), c3v = _mm256_set1_ps(c3);
  int64_t i = 0;
  for (; i + 8 <= n; i += 8) {
    __m256 inner = _mm256_fmadd_ps(c2v, _mm256_loadu_ps(x + i), c3v);
    __m256 g = _mm256_fmadd_ps(c1v, _mm256_loadu_ps(dy + i), inner);
    _mm256_storeu_ps(gx + i, _mm256_add_ps(_mm256_loadu_ps(gx + i), g));
  }
  for (; i < n; ++i) gx[i] += std::fma(c1, dy[i], std::fma(c2, x[i], c3));
}

}  // namespace

const KernelTable& avx2_table() {
  static const KernelTable t = {
      "avx2",
      gemm_avx2,
      vadd_avx2,
      vsub_avx2,
      vmul_avx2,
      vscale_avx2,
      vaffine_avx2,
      axpy_avx2,
      relu_avx2,
      relu_bwd_avx2,
      leaky_avx2,
      leaky_bwd_avx2,
      clamp_avx2,
      vmadd_avx2,
      bn_norm_avx2,
      bn_bwd_point_avx2,
  };
  return t;
}

}  // namespace dspk::kern

#endif  // x86_64
