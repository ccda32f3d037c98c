#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace cvqa {

using Shape = std::vector<int64_t>;

int64_t shape_size(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

struct TensorNode {
  Shape shape;
  std::vector<double> values;
  std::vector<double> grad;  // allocated on first touch, same length as values
  bool requires_grad = false;
  // Graph edges; populated only when requires_grad is set so inference
  // graphs do not retain their inputs.
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void(TensorNode&)> backward_fn;

  std::vector<double>& grad_buffer() {
    if (grad.size() != values.size()) grad.assign(values.size(), 0.0);
    return grad;
  }
};

}  // namespace detail

// Dense row-major tensor participating in a reverse-mode differentiable
// graph. Copying a Tensor copies the handle, not the storage.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value);
  static Tensor from_values(Shape shape, std::vector<double> values,
                            bool requires_grad = false);
  static Tensor scalar(double value);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  size_t rank() const { return node_->shape.size(); }
  int64_t dim(size_t i) const { return node_->shape[i]; }
  int64_t size() const { return static_cast<int64_t>(node_->values.size()); }

  std::vector<double>& values() { return node_->values; }
  const std::vector<double>& values() const { return node_->values; }

  // Gradient accumulated by the last backward() calls; zeros if untouched.
  const std::vector<double>& grad() const { return node_->grad_buffer(); }
  std::vector<double>& mutable_grad() { return node_->grad_buffer(); }
  void zero_grad() { node_->grad.assign(node_->values.size(), 0.0); }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool flag) { node_->requires_grad = flag; }

  // Value of a scalar (single-element) tensor.
  double item() const;

  double& at(int64_t r, int64_t c) { return node_->values[r * dim(1) + c]; }
  double at(int64_t r, int64_t c) const { return node_->values[r * dim(1) + c]; }

  detail::TensorNode* node() const { return node_.get(); }
  const std::shared_ptr<detail::TensorNode>& handle() const { return node_; }

  explicit Tensor(std::shared_ptr<detail::TensorNode> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<detail::TensorNode> node_;
};

// Reverse-mode sweep from a scalar loss. Accumulates into the grad buffers of
// every reachable tensor with requires_grad; leaves keep accumulating across
// calls until zero_grad. Each graph is meant to be swept once.
void backward(const Tensor& loss);

}  // namespace cvqa
