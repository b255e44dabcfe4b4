#include "seqpool/graph.hpp"

#include <algorithm>

#include "seqpool/errors.hpp"

namespace seqpool {

const Tensor& Node::grad() const {
  // Materializes the zero buffer when backward never reached this node.
  return impl_->grad_buffer();
}

Node Graph::parameter(Tensor init) {
  auto node = std::make_unique<detail::NodeImpl>();
  node->value = std::move(init);
  node->requires_grad = true;
  nodes_.push_back(std::move(node));
  return Node(nodes_.back().get());
}

Node Graph::constant(Tensor value) {
  auto node = std::make_unique<detail::NodeImpl>();
  node->value = std::move(value);
  nodes_.push_back(std::move(node));
  return Node(nodes_.back().get());
}

Node Graph::make(Tensor value, std::vector<Node> parents,
                 std::function<void(detail::NodeImpl&)> backward) {
  auto node = std::make_unique<detail::NodeImpl>();
  node->value = std::move(value);
  node->parents.reserve(parents.size());
  for (Node p : parents) {
    node->parents.push_back(p.impl());
    node->requires_grad = node->requires_grad || p.impl()->requires_grad;
  }
  if (node->requires_grad) node->backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Node(nodes_.back().get());
}

void Graph::truncate(std::size_t mark) {
  if (mark > nodes_.size()) throw Error("truncate mark beyond tape end");
  nodes_.resize(mark);
}

void Graph::zero_grads() {
  for (auto& node : nodes_) node->grad_live = false;
}

void Graph::backward(Node root) {
  if (!root.valid()) throw Error("backward on an empty node handle");
  if (root.size() != 1) throw DimensionError("backward root must be a scalar");

  // Iterative post-order DFS; each node enters 'order' after its parents.
  ++epoch_;
  std::vector<detail::NodeImpl*> order;
  std::vector<std::pair<detail::NodeImpl*, std::size_t>> stack;
  if (root.impl()->requires_grad || root.impl()->parents.empty())
    stack.emplace_back(root.impl(), 0);
  root.impl()->visit_epoch = epoch_;
  while (!stack.empty()) {
    auto& [node, next_parent] = stack.back();
    if (next_parent < node->parents.size()) {
      detail::NodeImpl* parent = node->parents[next_parent++];
      if (parent->visit_epoch != epoch_ && parent->requires_grad) {
        parent->visit_epoch = epoch_;
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root.impl()->grad_buffer().fill(1.0);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::NodeImpl* node = *it;
    if (node->backward && node->grad_live) node->backward(*node);
  }
}

}  // namespace seqpool
