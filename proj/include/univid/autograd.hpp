#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "univid/tensor.hpp"

// Tape-free reverse-mode differentiation. Each Var owns a node holding its
// value, its accumulated gradient and a closure that pushes the gradient into
// the node's inputs. Graphs are only recorded when some input requires a
// gradient, so inference builds no graph at all.
namespace univid::ag {

struct Node;
using NodePtr = std::shared_ptr<Node>;

struct Node {
  Tensor value;
  Tensor grad;  // empty until something flows into it
  bool requires_grad = false;
  std::vector<NodePtr> inputs;
  std::function<void(Node&)> backward;

  // Gradient buffer of input i, allocated on first use; nullptr when that
  // input does not take part in differentiation.
  Tensor* input_grad(size_t i);
};

class Var {
 public:
  Var() = default;
  explicit Var(Tensor value, bool requires_grad = false);

  bool defined() const noexcept { return node_ != nullptr; }
  const Tensor& value() const { return node_->value; }
  Tensor& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  int64_t dim(int axis) const { return node_->value.dim(axis); }
  int64_t numel() const { return node_->value.numel(); }

  bool requires_grad() const noexcept { return node_ && node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }

  bool has_grad() const { return node_ && !node_->grad.empty(); }
  // Zero tensor of the value's shape when no gradient has arrived.
  Tensor grad() const;
  void zero_grad() { node_->grad = Tensor(); }

  const NodePtr& node() const noexcept { return node_; }

  // Builds an op result. The closure is kept only when an input requires grad.
  static Var from_op(Tensor value, std::vector<Var> inputs, std::function<void(Node&)> backward);

 private:
  NodePtr node_;
};

// Accumulates d(root)/d(leaf) into every reachable leaf. root must hold one element.
void backward(const Var& root);

}  // namespace univid::ag
