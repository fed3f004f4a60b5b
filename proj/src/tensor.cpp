#include "dagnmt/tensor.hpp"

#include <algorithm>
#include <unordered_set>

namespace dagnmt {

std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(s[i]);
  }
  out += "]";
  return out;
}

size_t shape_numel(const Shape& s) {
  size_t n = 1;
  for (int d : s) {
    if (d < 0) throw std::invalid_argument("negative dimension in shape " + shape_str(s));
    n *= static_cast<size_t>(d);
  }
  return n;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  Tensor t;
  t.impl_ = std::make_shared<Impl>();
  t.impl_->values.assign(shape_numel(shape), 0.0);
  t.impl_->shape = std::move(shape);
  t.impl_->requires_grad = requires_grad;
  return t;
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  std::fill(t.impl_->values.begin(), t.impl_->values.end(), value);
  return t;
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  if (shape_numel(shape) != values.size())
    throw std::invalid_argument("Tensor::from: " + std::to_string(values.size()) +
                                " values do not fill shape " + shape_str(shape));
  Tensor t;
  t.impl_ = std::make_shared<Impl>();
  t.impl_->shape = std::move(shape);
  t.impl_->values = std::move(values);
  t.impl_->requires_grad = requires_grad;
  return t;
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from({1}, {value}, requires_grad);
}

int Tensor::dim(int i) const {
  const Shape& s = shape();
  if (i < 0 || static_cast<size_t>(i) >= s.size())
    throw std::invalid_argument("dim index " + std::to_string(i) + " out of range for " +
                                shape_str(s));
  return s[static_cast<size_t>(i)];
}

double Tensor::item() const {
  if (numel() != 1)
    throw std::invalid_argument("item() on non-scalar tensor " + shape_str(shape()));
  return values()[0];
}

void backward(const Tensor& loss) {
  if (loss.numel() != 1)
    throw std::invalid_argument("backward: loss must be scalar, got " + shape_str(loss.shape()));
  // iterative post-order DFS; nodes may be pushed more than once, expansion
  // happens once (marking at push time would misorder diamond graphs)
  std::unordered_set<const void*> seen;
  std::vector<Tensor> order;
  std::vector<std::pair<Tensor, bool>> stack;
  stack.emplace_back(loss, false);
  while (!stack.empty()) {
    auto [t, expanded] = stack.back();
    stack.pop_back();
    if (expanded) {
      order.push_back(t);
      continue;
    }
    const void* key = &t.values();
    if (seen.count(key)) continue;
    seen.insert(key);
    stack.emplace_back(t, true);
    if (t.node()) {
      for (const Tensor& p : t.node()->parents) {
        if (!seen.count(&p.values())) stack.emplace_back(p, false);
      }
    }
  }
  // leaf grads accumulate across calls; interior grads are per-invocation
  for (Tensor& t : order)
    if (t.node()) t.zero_grad();
  Tensor root = loss;
  root.grad()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Tensor& t = *it;
    if (t.node() && t.node()->backward) {
      t.grad();  // a child may have skipped a zero contribution entirely
      t.node()->backward(t);
    }
  }
}

namespace {
thread_local bool g_grad_enabled = true;
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

}  // namespace dagnmt
