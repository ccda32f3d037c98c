#include "cvqa/tensor.hpp"

#include <sstream>
#include <unordered_set>

#include "cvqa/errors.hpp"

namespace cvqa {

int64_t shape_size(const Shape& shape) {
  int64_t n = 1;
  for (int64_t d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << "x";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  for (int64_t d : shape) {
    if (d <= 0) throw UsageError("tensor dimensions must be positive, got " + shape_str(shape));
  }
  auto node = std::make_shared<detail::TensorNode>();
  node->values.assign(static_cast<size_t>(shape_size(shape)), 0.0);
  node->shape = std::move(shape);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::full(Shape shape, double value) {
  Tensor t = zeros(std::move(shape));
  for (double& v : t.values()) v = value;
  return t;
}

Tensor Tensor::from_values(Shape shape, std::vector<double> values, bool requires_grad) {
  if (static_cast<int64_t>(values.size()) != shape_size(shape)) {
    throw UsageError("value count " + std::to_string(values.size()) +
                     " does not match shape " + shape_str(shape));
  }
  Tensor t = zeros(std::move(shape), requires_grad);
  t.values() = std::move(values);
  return t;
}

Tensor Tensor::scalar(double value) { return from_values({}, {value}); }

double Tensor::item() const {
  if (size() != 1) throw UsageError("item() requires a scalar tensor, shape is " + shape_str(shape()));
  return node_->values[0];
}

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1) {
    throw UsageError("backward requires a scalar loss, shape is " +
                     (loss.defined() ? shape_str(loss.shape()) : std::string("<undefined>")));
  }
  if (!loss.requires_grad()) return;  // loss independent of any parameter

  // Iterative post-order DFS over parent edges.
  std::vector<detail::TensorNode*> order;
  std::unordered_set<detail::TensorNode*> visited;
  std::vector<std::pair<detail::TensorNode*, size_t>> stack;
  stack.emplace_back(loss.node(), 0);
  visited.insert(loss.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      detail::TensorNode* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) {
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  loss.node()->grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if ((*it)->backward_fn) (*it)->backward_fn(**it);
  }
}

}  // namespace cvqa
