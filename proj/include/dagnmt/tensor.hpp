#pragma once

// Reverse-mode autodiff over dense row-major double tensors. A Tensor is a
// cheap handle on shared storage; ops record parent handles plus a backward
// closure. Graphs are rebuilt every step and freed by RAII once the last
// handle drops. A graph is confined to one thread; parameter values may be
// shared read-only across inference threads.

#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace dagnmt {

using Shape = std::vector<int>;

// log-space "minus infinity" sentinel that survives logsumexp arithmetic
constexpr double kNegInf = -1e9;

std::string shape_str(const Shape& s);
size_t shape_numel(const Shape& s);

class Tensor;

struct Node {
  std::vector<Tensor> parents;
  // invoked with the output tensor; accumulates into parents' grads
  std::function<void(const Tensor&)> backward;
};

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }

  const Shape& shape() const { return check().shape; }
  int dim(int i) const;
  size_t numel() const { return check().values.size(); }
  int rows() const { return dim(0); }
  int cols() const { return dim(1); }

  std::vector<double>& values() { return check().values; }
  const std::vector<double>& values() const { return check().values; }
  double* data() { return check().values.data(); }
  const double* data() const { return check().values.data(); }

  // gradient slot, lazily allocated to the tensor's shape
  std::vector<double>& grad() {
    Impl& im = check();
    if (im.grad.empty()) im.grad.assign(im.values.size(), 0.0);
    return im.grad;
  }
  const std::vector<double>* grad_if_present() const {
    const Impl& im = check();
    return im.grad.empty() ? nullptr : &im.grad;
  }
  bool has_grad() const { return impl_ && !impl_->grad.empty(); }
  void zero_grad() {
    Impl& im = check();
    if (!im.grad.empty()) std::fill(im.grad.begin(), im.grad.end(), 0.0);
  }

  bool requires_grad() const { return impl_ && impl_->requires_grad; }
  void set_requires_grad(bool v) { check().requires_grad = v; }

  double item() const;  // scalar tensors only

  std::shared_ptr<Node>& node() { return check().node; }
  const std::shared_ptr<Node>& node() const { return check().node; }

  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

 private:
  struct Impl {
    Shape shape;
    std::vector<double> values;
    std::vector<double> grad;  // empty until first touched
    bool requires_grad = false;
    std::shared_ptr<Node> node;
  };

  Impl& check() {
    if (!impl_) throw std::runtime_error("undefined tensor");
    return *impl_;
  }
  const Impl& check() const {
    if (!impl_) throw std::runtime_error("undefined tensor");
    return *impl_;
  }

  std::shared_ptr<Impl> impl_;
};

// Accumulates d(loss)/d(t) into every reachable tensor with requires_grad.
// loss must be scalar. Repeated calls accumulate into leaf gradients; callers
// zero grads between steps.
void backward(const Tensor& loss);

// Thread-local flag: when disabled, ops skip node creation (inference path).
bool grad_enabled();
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

}  // namespace dagnmt
