#pragma once

// Compute kernels behind the tensor ops. Two float backends ship: a scalar
// reference and an AVX2 variant selected at runtime (DSPK_BACKEND=scalar|simd
// overrides). Both accumulate with fused multiply-adds in the same order, so
// their results are bit-identical; the equivalence suite asserts this.
// Double kernels exist scalar-only and back the finite-difference tests.
//
// Rounding contract (both backends must follow it exactly):
//   gemm     C[m,n] (+)= fma(A[m,k], B[k,n], acc), k ascending
//   vaffine  o[i] = fma(a, x[i], b)
//   bn_bwd   gx[i] += fma(c1, dy[i], fma(c2, x[i], c3))
// Reductions are not part of this layer; callers keep them sequential.

#include <cstdint>

namespace dspk::kern {

enum class Backend { scalar, simd };

bool simd_available();
Backend active_backend();
void set_backend(Backend b);  // throws ContractError if unavailable
const char* backend_name();

struct KernelTable {
  const char* name;
  // C[MxN] = A[MxK] * B[KxN], row-major; accumulates into C when acc is set.
  void (*gemm)(int64_t M, int64_t N, int64_t K, const float* A, const float* B,
               float* C, bool acc);
  void (*vadd)(const float* a, const float* b, float* o, int64_t n);
  void (*vsub)(const float* a, const float* b, float* o, int64_t n);
  void (*vmul)(const float* a, const float* b, float* o, int64_t n);
  void (*vscale)(const float* x, float a, float* o, int64_t n);      // o = a*x
  void (*vaffine)(const float* x, float a, float b, float* o, int64_t n);
  void (*axpy)(float a, const float* x, float* y, int64_t n);        // y += a*x
  void (*relu)(const float* x, float* o, int64_t n);
  void (*relu_bwd)(const float* x, const float* gy, float* gx, int64_t n);
  void (*leaky)(const float* x, float alpha, float* o, int64_t n);
  void (*leaky_bwd)(const float* x, float alpha, const float* gy, float* gx,
                    int64_t n);
  void (*clamp)(const float* x, float lo, float hi, float* o, int64_t n);
  // o[i] = o[i] + a[i]*b[i] (unfused, both backends)
  void (*vmadd)(const float* a, const float* b, float* o, int64_t n);
  // o[i] = a*(x[i]-mean) + beta, fused; keeps the constant-channel case exact
  void (*bn_norm)(const float* x, float mean, float a, float beta, float* o,
                  int64_t n);
  // gx[i] += c1*dy[i] + c2*x[i] + c3 (batch-norm backward pointwise term)
  void (*bn_bwd_point)(const float* x, const float* dy, float* gx, float c1,
                       float c2, float c3, int64_t n);
};

const KernelTable& scalar_table();
#if defined(__x86_64__) || defined(_M_X64)
const KernelTable& avx2_table();
#endif
const KernelTable& active();

// Typed entry points used by the ops layer. Float routes through the
// dispatch table; double runs the scalar reference directly.
template <typename T>
struct K;

template <>
struct K<float> {
  static void gemm(int64_t M, int64_t N, int64_t Kd, const float* A,
                   const float* B, float* C, bool acc) {
    active().gemm(M, N, Kd, A, B, C, acc);
  }
  static void vadd(const float* a, const float* b, float* o, int64_t n) { active().vadd(a, b, o, n); }
  static void vsub(const float* a, const float* b, float* o, int64_t n) { active().vsub(a, b, o, n); }
  static void vmul(const float* a, const float* b, float* o, int64_t n) { active().vmul(a, b, o, n); }
  static void vscale(const float* x, float a, float* o, int64_t n) { active().vscale(x, a, o, n); }
  static void vaffine(const float* x, float a, float b, float* o, int64_t n) { active().vaffine(x, a, b, o, n); }
  static void axpy(float a, const float* x, float* y, int64_t n) { active().axpy(a, x, y, n); }
  static void relu(const float* x, float* o, int64_t n) { active().relu(x, o, n); }
  static void relu_bwd(const float* x, const float* gy, float* gx, int64_t n) { active().relu_bwd(x, gy, gx, n); }
  static void leaky(const float* x, float alpha, float* o, int64_t n) { active().leaky(x, alpha, o, n); }
  static void leaky_bwd(const float* x, float alpha, const float* gy, float* gx, int64_t n) { active().leaky_bwd(x, alpha, gy, gx, n); }
  static void clamp(const float* x, float lo, float hi, float* o, int64_t n) { active().clamp(x, lo, hi, o, n); }
  static void vmadd(const float* a, const float* b, float* o, int64_t n) { active().vmadd(a, b, o, n); }
  static void bn_norm(const float* x, float mean, float a, float beta, float* o, int64_t n) { active().bn_norm(x, mean, a, beta, o, n); }
  static void bn_bwd_point(const float* x, const float* dy, float* gx, float c1, float c2, float c3, int64_t n) { active().bn_bwd_point(x, dy, gx, c1, c2, c3, n); }
};

template <>
struct K<double> {
  static void gemm(int64_t M, int64_t N, int64_t Kd, const double* A,
                   const double* B, double* C, bool acc);
  static void vadd(const double* a, const double* b, double* o, int64_t n);
  static void vsub(const double* a, const double* b, double* o, int64_t n);
  static void vmul(const double* a, const double* b, double* o, int64_t n);
  static void vscale(const double* x, double a, double* o, int64_t n);
  static void vaffine(const double* x, double a, double b, double* o, int64_t n);
  static void axpy(double a, const double* x, double* y, int64_t n);
  static void relu(const double* x, double* o, int64_t n);
  static void relu_bwd(const double* x, const double* gy, double* gx, int64_t n);
  static void leaky(const double* x, double alpha, double* o, int64_t n);
  static void leaky_bwd(const double* x, double alpha, const double* gy, double* gx, int64_t n);
  static void clamp(const double* x, double lo, double hi, double* o, int64_t n);
  static void vmadd(const double* a, const double* b, double* o, int64_t n);
  static void bn_norm(const double* x, double mean, double a, double beta, double* o, int64_t n);
  static void bn_bwd_point(const double* x, const double* dy, double* gx, double c1, double c2, double c3, int64_t n);
};

}  // namespace dspk::kern
