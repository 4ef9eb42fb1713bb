#include "dspk/adam.hpp"

#include <cmath>

namespace dspk {

template <typename T>
void AdamState<T>::step(std::vector<Tensor<T>>& params, double lr) {
  check(lr > 0, "adam_step: learning rate must be positive");
  if (m_.empty()) {
    m_.resize(params.size());
    v_.resize(params.size());
    for (size_t i = 0; i < params.size(); ++i) {
      m_[i].assign(static_cast<size_t>(params[i].size()), T(0));
      v_[i].assign(static_cast<size_t>(params[i].size()), T(0));
    }
  }
  check(m_.size() == params.size(), "adam_step: state/parameter count mismatch");
  ++t_;
  const double b1 = cfg_.beta1, b2 = cfg_.beta2;
  const double bc1 = 1.0 - std::pow(b1, double(t_));
  const double bc2 = 1.0 - std::pow(b2, double(t_));
  for (size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    check(m_[i].size() == static_cast<size_t>(p.size()),
          "adam_step: moment shape mismatch");
    const bool has_grad = p.has_grad();
    const T* g = has_grad ? p.grad() : nullptr;
    T* pv = p.data();
    T* mv = m_[i].data();
    T* vv = v_[i].data();
    for (int64_t j = 0; j < p.size(); ++j) {
      const double gj = has_grad ? double(g[j]) : 0.0;
      const double mj = b1 * double(mv[j]) + (1.0 - b1) * gj;
      const double vj = b2 * double(vv[j]) + (1.0 - b2) * gj * gj;
      mv[j] = T(mj);
      vv[j] = T(vj);
      const double mhat = mj / bc1;
      const double vhat = vj / bc2;
      pv[j] = T(double(pv[j]) - lr * mhat / (std::sqrt(vhat) + cfg_.eps));
    }
  }
}

template class AdamState<float>;
template class AdamState<double>;

}  // namespace dspk
