#pragma once

// Adam with bias correction (the standard moment-estimate form). One state
// object serves an ordered parameter list; moment buffers are keyed by
// position so save/load round-trips exactly.

#include <cstdint>
#include <vector>

#include "dspk/tensor.hpp"

namespace dspk {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename T>
class AdamState {
 public:
  AdamState() = default;
  explicit AdamState(AdamConfig cfg) : cfg_(cfg) {}

  const AdamConfig& config() const { return cfg_; }
  int64_t step_count() const { return t_; }

  std::vector<std::vector<T>>& first_moments() { return m_; }
  std::vector<std::vector<T>>& second_moments() { return v_; }
  const std::vector<std::vector<T>>& first_moments() const { return m_; }
  const std::vector<std::vector<T>>& second_moments() const { return v_; }
  void set_step_count(int64_t t) { t_ = t; }

  // One update over `params` using their accumulated .grad() fields.
  // Parameters without allocated gradients are treated as zero-gradient.
  void step(std::vector<Tensor<T>>& params, double lr);

 private:
  AdamConfig cfg_;
  int64_t t_ = 0;
  std::vector<std::vector<T>> m_, v_;
};

}  // namespace dspk
