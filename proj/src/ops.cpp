// Elementwise ops, activations and reductions, with their backward rules.

#include <cmath>
#include <cstring>

#include "dspk/kernels.hpp"
#include "dspk/ops.hpp"

namespace dspk {

namespace {

template <typename T>
bool finite_scan(const T* p, int64_t n);

template <>
bool finite_scan<float>(const float* p, int64_t n) {
  uint32_t bad = 0;
  for (int64_t i = 0; i < n; ++i) {
    uint32_t bits;
    std::memcpy(&bits, p + i, 4);
    bad |= static_cast<uint32_t>(((bits >> 23) & 0xffu) == 0xffu);
  }
  return bad == 0;
}

template <>
bool finite_scan<double>(const double* p, int64_t n) {
  for (int64_t i = 0; i < n; ++i) {
    if (!std::isfinite(p[i])) return false;
  }
  return true;
}

template <typename T>
void check_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  check_dim(a.shape() == b.shape(), std::string(op) + ": shape mismatch " +
                                        shape_str(a.shape()) + " vs " +
                                        shape_str(b.shape()));
}

template <typename T>
bool track(Tape<T>* tape, std::initializer_list<const Tensor<T>*> ins) {
  if (tape == nullptr) return false;
  for (const auto* t : ins) {
    if (t->requires_grad()) return true;
  }
  return false;
}

}  // namespace

template <typename T>
bool all_finite(const Tensor<T>& t) {
  return finite_scan(t.data(), t.size());
}

template <typename T>
void check_finite(const Tensor<T>& t, const std::string& context) {
  if (!all_finite(t)) throw NumericError(context + ": non-finite values");
}

template <typename T>
Tensor<T> add(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b) {
  check_same_shape(a, b, "add");
  Tensor<T> out(a.shape());
  kern::K<T>::vadd(a.data(), b.data(), out.data(), a.size());
  if (track(tape, {&a, &b})) {
    out.set_requires_grad(true);
    tape->record([a = a, b = b, out]() mutable {
      if (!out.has_grad()) return;
      const T* go = out.grad();
      if (a.requires_grad()) kern::K<T>::axpy(T(1), go, a.grad(), a.size());
      if (b.requires_grad()) kern::K<T>::axpy(T(1), go, b.grad(), b.size());
    });
  }
  return out;
}

template <typename T>
Tensor<T> sub(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b) {
  check_same_shape(a, b, "sub");
  Tensor<T> out(a.shape());
  kern::K<T>::vsub(a.data(), b.data(), out.data(), a.size());
  if (track(tape, {&a, &b})) {
    out.set_requires_grad(true);
    tape->record([a = a, b = b, out]() mutable {
      if (!out.has_grad()) return;
      const T* go = out.grad();
      if (a.requires_grad()) kern::K<T>::axpy(T(1), go, a.grad(), a.size());
      if (b.requires_grad()) kern::K<T>::axpy(T(-1), go, b.grad(), b.size());
    });
  }
  return out;
}

template <typename T>
Tensor<T> mul(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b) {
  check_same_shape(a, b, "mul");
  Tensor<T> out(a.shape());
  kern::K<T>::vmul(a.data(), b.data(), out.data(), a.size());
  if (track(tape, {&a, &b})) {
    out.set_requires_grad(true);
    tape->record([a = a, b = b, out]() mutable {
      if (!out.has_grad()) return;
      const T* go = out.grad();
      if (a.requires_grad()) kern::K<T>::vmadd(go, b.data(), a.grad(), a.size());
      if (b.requires_grad()) kern::K<T>::vmadd(go, a.data(), b.grad(), b.size());
    });
  }
  return out;
}

template <typename T>
Tensor<T> div(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b) {
  check_same_shape(a, b, "div");
  Tensor<T> out(a.shape());
  const T* ap = a.data();
  const T* bp = b.data();
  T* op = out.data();
  for (int64_t i = 0; i < a.size(); ++i) op[i] = ap[i] / bp[i];
  if (track(tape, {&a, &b})) {
    out.set_requires_grad(true);
    tape->record([a = a, b = b, out]() mutable {
      if (!out.has_grad()) return;
      const T* go = out.grad();
      const T* bv = b.data();
      const T* ov = out.data();
      int64_t n = a.size();
      if (a.requires_grad()) {
        T* ga = a.grad();
        for (int64_t i = 0; i < n; ++i) ga[i] += go[i] / bv[i];
      }
      if (b.requires_grad()) {
        T* gb = b.grad();
        for (int64_t i = 0; i < n; ++i) gb[i] -= go[i] * ov[i] / bv[i];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> add_const(Tape<T>* tape, const Tensor<T>& a, double c) {
  Tensor<T> out(a.shape());
  kern::K<T>::vaffine(a.data(), T(1), T(c), out.data(), a.size());
  if (track(tape, {&a})) {
    out.set_requires_grad(true);
    tape->record([a = a, out]() mutable {
      if (!out.has_grad()) return;
      kern::K<T>::axpy(T(1), out.grad(), a.grad(), a.size());
    });
  }
  return out;
}

template <typename T>
Tensor<T> mul_const(Tape<T>* tape, const Tensor<T>& a, double c) {
  Tensor<T> out(a.shape());
  kern::K<T>::vscale(a.data(), T(c), out.data(), a.size());
  if (track(tape, {&a})) {
    out.set_requires_grad(true);
    tape->record([a = a, out, c]() mutable {
      if (!out.has_grad()) return;
      kern::K<T>::axpy(T(c), out.grad(), a.grad(), a.size());
    });
  }
  return out;
}

template <typename T>
Tensor<T> scalar_scale(Tape<T>* tape, const Tensor<T>& x, const Tensor<T>& s) {
  check_dim(s.size() == 1, "scalar_scale: scale must be a [1] tensor");
  Tensor<T> out(x.shape());
  kern::K<T>::vscale(x.data(), s.data()[0], out.data(), x.size());
  if (track(tape, {&x, &s})) {
    out.set_requires_grad(true);
    tape->record([x = x, s = s, out]() mutable {
      if (!out.has_grad()) return;
      const T* go = out.grad();
      if (x.requires_grad()) kern::K<T>::axpy(s.data()[0], go, x.grad(), x.size());
      if (s.requires_grad()) {
        double acc = 0.0;
        const T* xv = x.data();
        for (int64_t i = 0; i < x.size(); ++i) acc += double(go[i]) * double(xv[i]);
        s.grad()[0] += T(acc);
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> relu(Tape<T>* tape, const Tensor<T>& x) {
  Tensor<T> out(x.shape());
  kern::K<T>::relu(x.data(), out.data(), x.size());
  if (track(tape, {&x})) {
    out.set_requires_grad(true);
    tape->record([x = x, out]() mutable {
      if (!out.has_grad()) return;
      kern::K<T>::relu_bwd(x.data(), out.grad(), x.grad(), x.size());
    });
  }
  return out;
}

template <typename T>
Tensor<T> leaky_relu(Tape<T>* tape, const Tensor<T>& x, double alpha) {
  Tensor<T> out(x.shape());
  kern::K<T>::leaky(x.data(), T(alpha), out.data(), x.size());
  if (track(tape, {&x})) {
    out.set_requires_grad(true);
    tape->record([x = x, out, alpha]() mutable {
      if (!out.has_grad()) return;
      kern::K<T>::leaky_bwd(x.data(), T(alpha), out.grad(), x.grad(), x.size());
    });
  }
  return out;
}

template <typename T>
Tensor<T> sigmoid(Tape<T>* tape, const Tensor<T>& x) {
  Tensor<T> out(x.shape());
  const T* xp = x.data();
  T* op = out.data();
  for (int64_t i = 0; i < x.size(); ++i) {
    T v = xp[i];
    if (v >= T(0)) {
      op[i] = T(1) / (T(1) + std::exp(-v));
    } else {
      T e = std::exp(v);
      op[i] = e / (T(1) + e);
    }
  }
  if (track(tape, {&x})) {
    out.set_requires_grad(true);
    tape->record([x = x, out]() mutable {
      if (!out.has_grad()) return;
      const T* go = out.grad();
      const T* ov = out.data();
      T* gx = x.grad();
      for (int64_t i = 0; i < x.size(); ++i)
        gx[i] += go[i] * ov[i] * (T(1) - ov[i]);
    });
  }
  return out;
}

template <typename T>
Tensor<T> abs_val(Tape<T>* tape, const Tensor<T>& x) {
  Tensor<T> out(x.shape());
  const T* xp = x.data();
  T* op = out.data();
  for (int64_t i = 0; i < x.size(); ++i) op[i] = std::abs(xp[i]);
  if (track(tape, {&x})) {
    out.set_requires_grad(true);
    tape->record([x = x, out]() mutable {
      if (!out.has_grad()) return;
      const T* go = out.grad();
      const T* xv = x.data();
      T* gx = x.grad();
      // subgradient at 0 is 0
      for (int64_t i = 0; i < x.size(); ++i)
        gx[i] += xv[i] > T(0) ? go[i] : (xv[i] < T(0) ? -go[i] : T(0));
    });
  }
  return out;
}

template <typename T>
Tensor<T> log_val(Tape<T>* tape, const Tensor<T>& x) {
  Tensor<T> out(x.shape());
  const T* xp = x.data();
  T* op = out.data();
  for (int64_t i = 0; i < x.size(); ++i) op[i] = std::log(xp[i]);
  if (track(tape, {&x})) {
    out.set_requires_grad(true);
    tape->record([x = x, out]() mutable {
      if (!out.has_grad()) return;
      const T* go = out.grad();
      const T* xv = x.data();
      T* gx = x.grad();
      for (int64_t i = 0; i < x.size(); ++i) gx[i] += go[i] / xv[i];
    });
  }
  return out;
}

template <typename T>
Tensor<T> clamp_val(Tape<T>* tape, const Tensor<T>& x, double lo, double hi) {
  check(lo < hi, "clamp: lo must be < hi");
  Tensor<T> out(x.shape());
  kern::K<T>::clamp(x.data(), T(lo), T(hi), out.data(), x.size());
  if (track(tape, {&x})) {
    out.set_requires_grad(true);
    tape->record([x = x, out, lo, hi]() mutable {
      if (!out.has_grad()) return;
      const T* go = out.grad();
      const T* xv = x.data();
      T* gx = x.grad();
      // gradient passes only strictly inside the interval
      for (int64_t i = 0; i < x.size(); ++i)
        if (xv[i] > T(lo) && xv[i] < T(hi)) gx[i] += go[i];
    });
  }
  return out;
}

template <typename T>
Tensor<T> sum_all(Tape<T>* tape, const Tensor<T>& x) {
  Tensor<T> out(Shape{1});
  double acc = 0.0;
  const T* xp = x.data();
  for (int64_t i = 0; i < x.size(); ++i) acc += double(xp[i]);
  out.data()[0] = T(acc);
  if (track(tape, {&x})) {
    out.set_requires_grad(true);
    tape->record([x = x, out]() mutable {
      if (!out.has_grad()) return;
      T g = out.grad()[0];
      T* gx = x.grad();
      for (int64_t i = 0; i < x.size(); ++i) gx[i] += g;
    });
  }
  return out;
}

template <typename T>
Tensor<T> mean_all(Tape<T>* tape, const Tensor<T>& x) {
  Tensor<T> out(Shape{1});
  double acc = 0.0;
  const T* xp = x.data();
  for (int64_t i = 0; i < x.size(); ++i) acc += double(xp[i]);
  const double inv = 1.0 / double(x.size());
  out.data()[0] = T(acc * inv);
  if (track(tape, {&x})) {
    out.set_requires_grad(true);
    tape->record([x = x, out, inv]() mutable {
      if (!out.has_grad()) return;
      T g = T(double(out.grad()[0]) * inv);
      T* gx = x.grad();
      for (int64_t i = 0; i < x.size(); ++i) gx[i] += g;
    });
  }
  return out;
}

template <typename T>
Tensor<T> sample_mean(Tape<T>* tape, const Tensor<T>& x) {
  check_dim(x.shape().size() >= 2, "sample_mean: need a batch dimension");
  const int64_t n = x.shape()[0];
  const int64_t m = x.size() / n;
  Tensor<T> out(Shape{int(n)});
  const double inv = 1.0 / double(m);
  for (int64_t i = 0; i < n; ++i) {
    double acc = 0.0;
    const T* row = x.data() + i * m;
    for (int64_t j = 0; j < m; ++j) acc += double(row[j]);
    out.data()[i] = T(acc * inv);
  }
  if (track(tape, {&x})) {
    out.set_requires_grad(true);
    tape->record([x = x, out, n, m, inv]() mutable {
      if (!out.has_grad()) return;
      const T* go = out.grad();
      T* gx = x.grad();
      for (int64_t i = 0; i < n; ++i) {
        T g = T(double(go[i]) * inv);
        T* row = gx + i * m;
        for (int64_t j = 0; j < m; ++j) row[j] += g;
      }
    });
  }
  return out;
}

#define DSPK_INSTANTIATE_OPS(T)                                               \
  template bool all_finite<T>(const Tensor<T>&);                              \
  template void check_finite<T>(const Tensor<T>&, const std::string&);       \
  template Tensor<T> add<T>(Tape<T>*, const Tensor<T>&, const Tensor<T>&);   \
  template Tensor<T> sub<T>(Tape<T>*, const Tensor<T>&, const Tensor<T>&);   \
  template Tensor<T> mul<T>(Tape<T>*, const Tensor<T>&, const Tensor<T>&);   \
  template Tensor<T> div<T>(Tape<T>*, const Tensor<T>&, const Tensor<T>&);   \
  template Tensor<T> add_const<T>(Tape<T>*, const Tensor<T>&, double);       \
  template Tensor<T> mul_const<T>(Tape<T>*, const Tensor<T>&, double);       \
  template Tensor<T> scalar_scale<T>(Tape<T>*, const Tensor<T>&, const Tensor<T>&); \
  template Tensor<T> relu<T>(Tape<T>*, const Tensor<T>&);                    \
  template Tensor<T> leaky_relu<T>(Tape<T>*, const Tensor<T>&, double);      \
  template Tensor<T> sigmoid<T>(Tape<T>*, const Tensor<T>&);                 \
  template Tensor<T> abs_val<T>(Tape<T>*, const Tensor<T>&);                 \
  template Tensor<T> log_val<T>(Tape<T>*, const Tensor<T>&);                 \
  template Tensor<T> clamp_val<T>(Tape<T>*, const Tensor<T>&, double, double); \
  template Tensor<T> sum_all<T>(Tape<T>*, const Tensor<T>&);                 \
  template Tensor<T> mean_all<T>(Tape<T>*, const Tensor<T>&);                \
  template Tensor<T> sample_mean<T>(Tape<T>*, const Tensor<T>&);

DSPK_INSTANTIATE_OPS(float)
DSPK_INSTANTIATE_OPS(double)

}  // namespace dspk
