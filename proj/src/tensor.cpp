#include "han/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_set>

#include "han/errors.hpp"

namespace han {

namespace {
thread_local bool g_grad_enabled = true;
thread_local std::size_t g_last_backward_nodes = 0;
}  // namespace

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

void TensorImpl::accumulate_grad(std::span<const Real> g) {
  if (!has_grad) {
    grad.assign(g.begin(), g.end());
    has_grad = true;
    return;
  }
  for (std::size_t i = 0; i < g.size(); ++i) grad[i] += g[i];
}

Tensor Tensor::zeros(const Shape& shape, bool requires_grad) {
  return full(shape, 0.0, requires_grad);
}

Tensor Tensor::full(const Shape& shape, Real value, bool requires_grad) {
  return from_data(shape, std::vector<Real>(shape_numel(shape), value), requires_grad);
}

Tensor Tensor::from_data(const Shape& shape, std::vector<Real> values, bool requires_grad) {
  for (auto d : shape) {
    if (d == 0) throw ShapeError("tensor extents must be positive, got " + shape_to_string(shape));
  }
  if (values.size() != shape_numel(shape)) {
    throw ShapeError("value count " + std::to_string(values.size()) +
                     " does not match shape " + shape_to_string(shape));
  }
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = shape;
  impl->data = std::move(values);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::scalar(Real value, bool requires_grad) {
  return from_data({1}, {value}, requires_grad);
}

const Shape& Tensor::shape() const { return impl_->shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= impl_->shape.size()) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for " +
                     shape_to_string(impl_->shape));
  }
  return impl_->shape[axis];
}

std::size_t Tensor::numel() const { return impl_->data.size(); }

std::span<const Real> Tensor::data() const { return impl_->data; }

std::span<Real> Tensor::mutable_data() { return impl_->data; }

Real Tensor::item() const {
  if (numel() != 1) {
    throw ShapeError("item() needs a single-element tensor, got " + shape_to_string(shape()));
  }
  return impl_->data[0];
}

bool Tensor::requires_grad() const { return impl_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool flag) {
  impl_->requires_grad = flag;
  return *this;
}

bool Tensor::is_leaf() const { return impl_->grad_fn == nullptr; }

bool Tensor::has_grad() const { return impl_->has_grad; }

std::span<const Real> Tensor::grad() const {
  if (!impl_->has_grad) return {};
  return impl_->grad;
}

void Tensor::clear_grad() {
  impl_->has_grad = false;
  impl_->grad.clear();
}

void Tensor::backward() const {
  if (numel() != 1) {
    throw ShapeError("backward() needs a scalar output, got " + shape_to_string(shape()));
  }
  if (!impl_->requires_grad) {
    throw std::logic_error("backward() called on a tensor that does not require grad");
  }

  // Iterative post-order DFS gives a topological order of graph nodes.
  std::vector<TensorImpl*> order;
  std::unordered_set<TensorImpl*> visited;
  std::vector<std::pair<TensorImpl*, std::size_t>> stack;
  stack.emplace_back(impl_.get(), 0);
  visited.insert(impl_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (node->grad_fn && next < node->grad_fn->inputs.size()) {
      TensorImpl* child = node->grad_fn->inputs[next++].get();
      if (child->requires_grad && visited.insert(child).second) {
        stack.emplace_back(child, 0);
      }
      continue;
    }
    order.push_back(node);
    stack.pop_back();
  }

  const Real one = 1.0;
  impl_->accumulate_grad(std::span<const Real>(&one, 1));
  std::size_t visited_nodes = 0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorImpl* t = *it;
    if (!t->grad_fn || !t->has_grad) continue;
    t->grad_fn->backward(*t);
    ++visited_nodes;
  }
  g_last_backward_nodes = visited_nodes;
}

Tensor Tensor::detach() const {
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = impl_->shape;
  impl->data = impl_->data;
  return Tensor(std::move(impl));
}

Tensor Tensor::clone() const {
  Tensor t = detach();
  t.impl()->requires_grad = impl_->requires_grad;
  return t;
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }

NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_enabled() { return g_grad_enabled; }

namespace detail {

Tensor make_result(std::string op, Shape shape, std::vector<Real> values,
                   std::vector<Tensor> inputs,
                   std::function<void(const TensorImpl& out)> backward) {
  Tensor out = Tensor::from_data(shape, std::move(values));
  if (!g_grad_enabled) return out;
  const bool tracked = std::any_of(inputs.begin(), inputs.end(),
                                   [](const Tensor& t) { return t.requires_grad(); });
  if (!tracked) return out;
  auto node = std::make_shared<Node>();
  node->op = std::move(op);
  node->inputs.reserve(inputs.size());
  for (auto& t : inputs) node->inputs.push_back(t.impl_ptr());
  node->backward = std::move(backward);
  out.impl()->requires_grad = true;
  out.impl()->grad_fn = std::move(node);
  return out;
}

std::size_t last_backward_node_count() { return g_last_backward_nodes; }

}  // namespace detail

}  // namespace han
