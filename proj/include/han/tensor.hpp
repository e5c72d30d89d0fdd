#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace han {

using Real = double;
using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);

struct TensorImpl;

// Backward record attached to the output of a differentiable operation.
// `backward` reads the output gradient and accumulates into the inputs.
struct Node {
  std::string op;
  std::vector<std::shared_ptr<TensorImpl>> inputs;
  std::function<void(const TensorImpl& out)> backward;
};

struct TensorImpl {
  Shape shape;
  std::vector<Real> data;
  bool requires_grad = false;
  bool has_grad = false;
  std::vector<Real> grad;
  std::shared_ptr<Node> grad_fn;

  // Adds `g` into the gradient buffer, allocating it on first use.
  void accumulate_grad(std::span<const Real> g);
};

// Shared handle over a dense row-major array. Copies alias the same storage,
// as in most dynamic-tape frameworks; use clone() for a deep copy.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}

  static Tensor zeros(const Shape& shape, bool requires_grad = false);
  static Tensor full(const Shape& shape, Real value, bool requires_grad = false);
  static Tensor from_data(const Shape& shape, std::vector<Real> values,
                          bool requires_grad = false);
  static Tensor scalar(Real value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t dim(std::size_t axis) const;
  std::size_t rank() const { return shape().size(); }
  std::size_t numel() const;

  std::span<const Real> data() const;
  // In-place writes are reserved for optimizer steps and initialization.
  std::span<Real> mutable_data();
  Real item() const;
  Real at(std::size_t flat_index) const { return data()[flat_index]; }

  bool requires_grad() const;
  Tensor& set_requires_grad(bool flag);
  bool is_leaf() const;
  bool has_grad() const;
  std::span<const Real> grad() const;
  void clear_grad();

  // Reverse pass from a single-element tensor; seeds d(self)/d(self) = 1.
  void backward() const;

  Tensor detach() const;
  Tensor clone() const;

  TensorImpl* impl() const { return impl_.get(); }
  const std::shared_ptr<TensorImpl>& impl_ptr() const { return impl_; }

 private:
  std::shared_ptr<TensorImpl> impl_;
};

// Disables graph recording on the current thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

namespace detail {

// Builds an operation result. When any input tracks gradients (and recording
// is enabled) the result is attached to a Node carrying `backward`.
Tensor make_result(std::string op, Shape shape, std::vector<Real> values,
                   std::vector<Tensor> inputs,
                   std::function<void(const TensorImpl& out)> backward);

// Number of nodes visited by the most recent backward() on this thread.
std::size_t last_backward_node_count();

}  // namespace detail

}  // namespace han
