#include <atomic>
#include <cstdlib>
#include <cstring>

#include "dspk/common.hpp"
#include "dspk/kernels.hpp"

namespace dspk::kern {
namespace {

bool cpu_has_avx2_fma() {
#if defined(__x86_64__) || defined(_M_X64)
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

std::atomic<const KernelTable*> g_active{nullptr};

const KernelTable* initial_table() {
  Backend want = cpu_has_avx2_fma() ? Backend::simd : Backend::scalar;
  if (const char* env = std::getenv("DSPK_BACKEND")) {
    if (std::strcmp(env, "scalar") == 0) want = Backend::scalar;
    if (std::strcmp(env, "simd") == 0) want = Backend::simd;
  }
#if defined(__x86_64__) || defined(_M_X64)
  if (want == Backend::simd && cpu_has_avx2_fma()) return &avx2_table();
#endif
  return &scalar_table();
}

}  // namespace

bool simd_available() { return cpu_has_avx2_fma(); }

const KernelTable& active() {
  const KernelTable* t = g_active.load(std::memory_order_acquire);
  if (t == nullptr) {
    t = initial_table();
    g_active.store(t, std::memory_order_release);
  }
  return *t;
}

Backend active_backend() {
  return &active() == &scalar_table() ? Backend::scalar : Backend::simd;
}

void set_backend(Backend b) {
  if (b == Backend::scalar) {
    g_active.store(&scalar_table(), std::memory_order_release);
    return;
  }
#if defined(__x86_64__) || defined(_M_X64)
  if (cpu_has_avx2_fma()) {
    g_active.store(&avx2_table(), std::memory_order_release);
    return;
  }
#endif
  throw ContractError("set_backend: SIMD backend not available on this CPU");
}

const char* backend_name() { return active().name; }

}  // namespace dspk::kern
