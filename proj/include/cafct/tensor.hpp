#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace cafct {

// Extents of a dense row-major array. Rank-0 (empty shape) is a scalar.
using Shape = std::vector<int>;

int64_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// Throws std::invalid_argument when cond is false.
void check_arg(bool cond, const std::string& msg);

namespace detail {

// One recorded operation (or leaf) of the compute graph. backward_fn reads
// this node's grad and accumulates into the parents' grads; leaves have no
// backward_fn.
struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // sized lazily, on first backward touch
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  int64_t size() const { return static_cast<int64_t>(value.size()); }
  bool is_leaf() const { return !backward_fn; }
  double* grad_data();  // allocates (zero-filled) if needed
};

}  // namespace detail

// Dense float64 tensor with shared-ownership handle semantics. Values are
// treated as immutable once produced by an operation; optimizer updates
// mutate leaf tensors in place between recorded steps.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<double> data, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int rank() const { return static_cast<int>(node_->shape.size()); }
  int dim(int axis) const { return node_->shape[static_cast<size_t>(axis)]; }
  int64_t size() const { return node_->size(); }

  double* data() { return node_->value.data(); }
  const double* data() const { return node_->value.data(); }
  std::vector<double>& values() { return node_->value; }
  const std::vector<double>& values() const { return node_->value; }

  // Value of a 1-element tensor.
  double item() const;

  bool requires_grad() const { return node_->requires_grad; }

  // Gradient buffer, allocated zero-filled on first use.
  double* grad_data() { return node_->grad_data(); }
  const std::vector<double>& grad_vec() const;
  void zero_grad();

  // Deep copy as a detached leaf.
  Tensor clone(bool requires_grad = false) const;

  const std::shared_ptr<detail::Node>& node() const { return node_; }
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<detail::Node> node_;
};

// A named trainable tensor, as collected from a model. The gradient slot
// lives inside the tensor and accumulates across backward() calls until
// zero_grad().
struct Parameter {
  std::string name;
  Tensor tensor;
};

using ParamVisitor = std::function<void(const std::string& name, Tensor& tensor)>;

// Reverse-mode accumulation from a 1-element tensor. Every node's backward
// function runs exactly once; non-leaf grads are reset at the start of each
// call while leaf grads accumulate.
void backward(const Tensor& loss);

// RAII switch that stops operations from recording autodiff nodes (forward
// values only). Nestable; thread-local.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

bool grad_recording_enabled();

}  // namespace cafct
