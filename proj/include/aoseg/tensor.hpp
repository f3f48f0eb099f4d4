// Dense tensor with an optional gradient buffer, plus the operation tape
// used to replay adjoints in reverse. Values are contiguous row-major;
// image tensors follow [N, C, H, W] layout.
//
// Tensors are cheap shared handles: copies alias the same storage, which
// is what lets tape closures accumulate gradients into the right buffers.
// The scalar type is a template parameter so the same network code runs
// in float for training and in double for high-precision gradient checks.

#pragma once

#include <Eigen/Core>
#include <functional>
#include <initializer_list>
#include <memory>
#include <utility>

#include "aoseg/common.hpp"

namespace aoseg {

template <class S>
using ArrayX = Eigen::Array<S, Eigen::Dynamic, 1>;

template <class S>
class Tensor {
 public:
  Tensor() : s_(std::make_shared<Storage>()) {}

  explicit Tensor(Shape shape, S fill = S(0)) : s_(std::make_shared<Storage>()) {
    for (int e : shape)
      if (e <= 0) throw Error("tensor: nonpositive extent in shape " + shape_str(shape));
    s_->shape = std::move(shape);
    s_->values = ArrayX<S>::Constant(numel(s_->shape), fill);
  }

  static Tensor from(Shape shape, std::initializer_list<S> vals) {
    Tensor t(std::move(shape));
    if (static_cast<std::int64_t>(vals.size()) != t.size())
      throw Error("tensor: initializer size does not match shape " + shape_str(t.shape()));
    std::int64_t i = 0;
    for (S v : vals) t.s_->values[i++] = v;
    return t;
  }

  // Deep copy (fresh storage, tracking state reset).
  Tensor clone() const {
    Tensor t;
    t.s_->shape = s_->shape;
    t.s_->values = s_->values;
    return t;
  }

  const Shape& shape() const { return s_->shape; }
  int dim(int i) const { return s_->shape[static_cast<std::size_t>(i)]; }
  std::int64_t size() const { return s_->values.size(); }

  ArrayX<S>& values() { return s_->values; }
  const ArrayX<S>& values() const { return s_->values; }
  S* data() { return s_->values.data(); }
  const S* data() const { return s_->values.data(); }

  bool tracked() const { return s_->tracked; }

  // Enables gradient accumulation; allocates a zeroed grad buffer.
  void set_tracked(bool on) {
    s_->tracked = on;
    if (on && s_->grad.size() != s_->values.size())
      s_->grad = ArrayX<S>::Zero(s_->values.size());
  }

  ArrayX<S>& grad() {
    if (!s_->tracked) throw Error("tensor: grad requested on untracked tensor");
    return s_->grad;
  }
  const ArrayX<S>& grad() const {
    if (!s_->tracked) throw Error("tensor: grad requested on untracked tensor");
    return s_->grad;
  }

  void zero_grad() {
    if (s_->tracked) s_->grad.setZero();
  }

  // Flat index into [N, C, H, W] storage.
  std::int64_t index4(int n, int c, int y, int x) const {
    const Shape& s = s_->shape;
    return ((static_cast<std::int64_t>(n) * s[1] + c) * s[2] + y) * s[3] + x;
  }
  S& at4(int n, int c, int y, int x) { return s_->values[index4(n, c, y, x)]; }
  S at4(int n, int c, int y, int x) const { return s_->values[index4(n, c, y, x)]; }

  bool same_storage(const Tensor& o) const { return s_ == o.s_; }

 private:
  struct Storage {
    Shape shape;
    ArrayX<S> values;
    ArrayX<S> grad;
    bool tracked = false;
  };
  std::shared_ptr<Storage> s_;
};

// Throws if the tensor contains NaN or Inf.
template <class S>
void assert_finite(const Tensor<S>& t, const std::string& what) {
  if (!t.values().isFinite().all())
    throw Error("non-finite values in " + what + " " + shape_str(t.shape()));
}

// Ordered record of executed operations. Each op pushes a closure that
// propagates the adjoint from its output to its inputs; backward() replays
// the closures in exact reverse execution order.
template <class S>
class Graph {
 public:
  void record(std::function<void()> backprop) { tape_.push_back(std::move(backprop)); }

  // Seeds the loss adjoint with 1 and replays the tape. Every tracked leaf
  // that participated ends up with its exact adjoint accumulated in grad().
  void backward(const Tensor<S>& loss) {
    if (consumed_)
      throw Error("graph: backward already ran; call reset() before reusing the graph");
    if (loss.size() != 1)
      throw Error("graph: backward requires a scalar loss, got shape " + shape_str(loss.shape()));
    if (!loss.tracked())
      throw Error("graph: loss is not tracked by this graph");
    Tensor<S> l = loss;
    l.grad().setConstant(S(1));
    for (auto it = tape_.rbegin(); it != tape_.rend(); ++it) (*it)();
    consumed_ = true;
  }

  void reset() {
    tape_.clear();
    consumed_ = false;
  }

  bool consumed() const { return consumed_; }
  std::size_t size() const { return tape_.size(); }

 private:
  std::vector<std::function<void()>> tape_;
  bool consumed_ = false;
};

}  // namespace aoseg
