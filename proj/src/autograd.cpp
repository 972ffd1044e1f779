#include "univid/autograd.hpp"

#include <unordered_set>

#include "univid/error.hpp"

namespace univid::ag {

Tensor* Node::input_grad(size_t i) {
  Node& in = *inputs[i];
  if (!in.requires_grad) return nullptr;
  if (in.grad.empty()) in.grad = Tensor(in.value.shape());
  return &in.grad;
}

Var::Var(Tensor value, bool requires_grad) : node_(std::make_shared<Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

Tensor Var::grad() const {
  if (node_->grad.empty()) return Tensor(node_->value.shape());
  return node_->grad;
}

Var Var::from_op(Tensor value, std::vector<Var> inputs, std::function<void(Node&)> backward) {
  Var out(std::move(value));
  bool any = false;
  for (const Var& v : inputs) any = any || v.requires_grad();
  if (!any) return out;
  out.node_->requires_grad = true;
  out.node_->backward = std::move(backward);
  out.node_->inputs.reserve(inputs.size());
  for (Var& v : inputs) out.node_->inputs.push_back(v.node_);
  return out;
}

void backward(const Var& root) {
  if (!root.defined()) throw Error("backward on undefined variable");
  if (root.numel() != 1) throw ShapeError("backward requires a single-element root, got " + shape_str(root.shape()));
  if (!root.requires_grad()) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, size_t>> stack{{root.node().get(), 0}};
  seen.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node* child = node->inputs[next++].get();
      if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  Node& r = *root.node();
  if (r.grad.empty()) r.grad = Tensor(r.value.shape());
  r.grad[0] += 1.0f;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node& n = **it;
    if (n.backward && !n.grad.empty()) n.backward(n);
  }
  // Intermediate gradients are not needed once propagated.
  for (Node* n : order)
    if (n->backward) n->grad = Tensor();
}

}  // namespace univid::ag
