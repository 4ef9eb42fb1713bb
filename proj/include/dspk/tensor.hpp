#pragma once

// Dense row-major tensor with optional gradient storage, plus the gradient
// tape. Tensors have shared-reference semantics: copies alias the same
// storage, which is what lets tape closures hold cheap handles to the values
// they need during the backward pass.

#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include "dspk/common.hpp"

namespace dspk {

using Shape = std::vector<int>;

inline int64_t numel(const Shape& s) {
  int64_t n = 1;
  for (int d : s) {
    check_dim(d > 0, "shape dimensions must be positive");
    n *= d;
  }
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string r = "[";
  for (size_t i = 0; i < s.size(); ++i) r += (i ? "," : "") + std::to_string(s[i]);
  return r + "]";
}

template <typename T>
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape shape, bool requires_grad = false)
      : s_(std::make_shared<Storage>()) {
    s_->shape = std::move(shape);
    s_->data.assign(static_cast<size_t>(numel(s_->shape)), T(0));
    s_->requires_grad = requires_grad;
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    return Tensor(std::move(shape), requires_grad);
  }

  static Tensor full(Shape shape, T value, bool requires_grad = false) {
    Tensor t(std::move(shape), requires_grad);
    for (auto& v : t.s_->data) v = value;
    return t;
  }

  static Tensor from(Shape shape, std::vector<T> values, bool requires_grad = false) {
    Tensor t;
    t.s_ = std::make_shared<Storage>();
    check_dim(numel(shape) == static_cast<int64_t>(values.size()),
              "Tensor::from: value count does not match shape");
    t.s_->shape = std::move(shape);
    t.s_->data = std::move(values);
    t.s_->requires_grad = requires_grad;
    return t;
  }

  bool defined() const { return s_ != nullptr; }
  const Shape& shape() const { return s_->shape; }
  int64_t size() const { return static_cast<int64_t>(s_->data.size()); }

  T* data() { return s_->data.data(); }
  const T* data() const { return s_->data.data(); }
  std::vector<T>& values() { return s_->data; }
  const std::vector<T>& values() const { return s_->data; }

  bool requires_grad() const { return s_->requires_grad; }
  void set_requires_grad(bool v) { s_->requires_grad = v; }

  bool has_grad() const { return !s_->grad.empty(); }
  // Allocates (zeroed) on first touch.
  T* grad() {
    if (s_->grad.empty()) s_->grad.assign(s_->data.size(), T(0));
    return s_->grad.data();
  }
  const std::vector<T>& grad_values() const { return s_->grad; }
  void zero_grad() {
    if (!s_->grad.empty()) std::fill(s_->grad.begin(), s_->grad.end(), T(0));
  }

  // Deep copy; grad is not copied.
  Tensor clone() const {
    Tensor t;
    t.s_ = std::make_shared<Storage>();
    t.s_->shape = s_->shape;
    t.s_->data = s_->data;
    t.s_->requires_grad = s_->requires_grad;
    return t;
  }

  bool same_storage(const Tensor& o) const { return s_ == o.s_; }

 private:
  struct Storage {
    Shape shape;
    std::vector<T> data;
    std::vector<T> grad;
    bool requires_grad = false;
  };
  std::shared_ptr<Storage> s_;
};

// Ordered list of backward rules for one forward computation. Consumed by a
// single backward() call; reuse after that is a contract error.
template <typename T>
class Tape {
 public:
  void record(std::function<void()> backward_rule) {
    check(!consumed_, "Tape: cannot record after backward");
    nodes_.push_back(std::move(backward_rule));
  }

  size_t size() const { return nodes_.size(); }
  bool consumed() const { return consumed_; }

  // Seeds d(loss)/d(loss) = 1 and runs every rule in reverse order.
  void backward(Tensor<T> loss) {
    check(!consumed_, "Tape::backward: tape already consumed");
    check(loss.defined() && loss.size() == 1,
          "Tape::backward: loss must be a scalar tensor");
    check(loss.requires_grad(),
          "Tape::backward: loss does not depend on any tracked tensor");
    consumed_ = true;
    loss.grad()[0] = T(1);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
    nodes_.clear();
  }

 private:
  std::vector<std::function<void()>> nodes_;
  bool consumed_ = false;
};

template <typename T>
bool all_finite(const Tensor<T>& t);

template <typename T>
void check_finite(const Tensor<T>& t, const std::string& context);

}  // namespace dspk
