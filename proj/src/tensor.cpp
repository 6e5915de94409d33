#include "cafct/tensor.hpp"

#include <algorithm>
#include <stdexcept>
#include <unordered_set>

namespace cafct {

int64_t numel(const Shape& shape) {
  int64_t n = 1;
  for (int e : shape) n *= e;
  return n;
}

std::string shape_str(const Shape& shape) {
  if (shape.empty()) return "scalar";
  std::string s;
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) s += 'x';
    s += std::to_string(shape[i]);
  }
  return s;
}

void check_arg(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

namespace detail {

double* Node::grad_data() {
  if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  return grad.data();
}

}  // namespace detail

namespace {

std::shared_ptr<detail::Node> make_leaf(Shape shape, std::vector<double> data, bool requires_grad) {
  for (int e : shape) check_arg(e >= 1, "tensor: nonpositive extent in shape " + shape_str(shape));
  check_arg(static_cast<int64_t>(data.size()) == numel(shape),
            "tensor: data length " + std::to_string(data.size()) + " does not match shape " + shape_str(shape));
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->value = std::move(data);
  node->requires_grad = requires_grad;
  return node;
}

thread_local int g_no_grad_depth = 0;

}  // namespace

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  const auto n = numel(shape);
  return Tensor(make_leaf(std::move(shape), std::vector<double>(static_cast<size_t>(n), 0.0), requires_grad));
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const auto n = numel(shape);
  return Tensor(make_leaf(std::move(shape), std::vector<double>(static_cast<size_t>(n), value), requires_grad));
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data, bool requires_grad) {
  return Tensor(make_leaf(std::move(shape), std::move(data), requires_grad));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor(make_leaf(Shape{}, {value}, requires_grad));
}

double Tensor::item() const {
  check_arg(size() == 1, "item: tensor of shape " + shape_str(shape()) + " is not a scalar");
  return node_->value[0];
}

const std::vector<double>& Tensor::grad_vec() const {
  node_->grad_data();
  return node_->grad;
}

void Tensor::zero_grad() {
  std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

Tensor Tensor::clone(bool requires_grad) const {
  return Tensor(make_leaf(node_->shape, node_->value, requires_grad));
}

void backward(const Tensor& loss) {
  check_arg(loss.defined(), "backward: undefined tensor");
  check_arg(loss.size() == 1,
            "backward: loss has shape " + shape_str(loss.shape()) + ", expected a scalar");

  // Iterative post-order DFS; the reversed order runs children before parents.
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> seen;
  struct Frame {
    detail::Node* node;
    size_t next_parent;
  };
  std::vector<Frame> stack;
  detail::Node* root = loss.node().get();
  if (seen.insert(root).second) stack.push_back({root, 0});
  while (!stack.empty()) {
    Frame& top = stack.back();
    if (top.next_parent < top.node->parents.size()) {
      detail::Node* parent = top.node->parents[top.next_parent++].get();
      if (seen.insert(parent).second) stack.push_back({parent, 0});
    } else {
      order.push_back(top.node);
      stack.pop_back();
    }
  }

  // Fresh grads for recorded nodes; leaves keep accumulating across calls.
  for (detail::Node* node : order) {
    if (!node->is_leaf()) {
      node->grad.assign(node->value.size(), 0.0);
    } else if (node->requires_grad) {
      node->grad_data();
    }
  }

  root->grad_data()[0] += 1.0;

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* node = *it;
    if (node->backward_fn) node->backward_fn(*node);
  }
}

NoGradGuard::NoGradGuard() { ++g_no_grad_depth; }
NoGradGuard::~NoGradGuard() { --g_no_grad_depth; }

bool grad_recording_enabled() { return g_no_grad_depth == 0; }

}  // namespace cafct
