#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <vector>

#include "seqpool/tensor.hpp"

namespace seqpool {

namespace detail {

struct NodeImpl {
  Tensor value;
  Tensor grad;  // allocated on first use, always value's shape
  bool requires_grad = false;
  bool grad_live = false;
  std::vector<NodeImpl*> parents;
  std::function<void(NodeImpl&)> backward;  // accumulates into parents' grads
  std::size_t visit_epoch = 0;

  /// Gradient buffer, zero-filled on first access since the last reset.
  Tensor& grad_buffer() {
    if (!grad_live) {
      if (grad.same_shape(value))
        grad.fill(0.0);
      else
        grad = Tensor(value.shape());
      grad_live = true;
    }
    return grad;
  }
};

}  // namespace detail

/// Cheap handle to a node owned by a Graph.
class Node {
 public:
  Node() = default;
  explicit Node(detail::NodeImpl* impl) : impl_(impl) {}

  const Tensor& value() const { return impl_->value; }
  Tensor& value() { return impl_->value; }

  /// Accumulated gradient. A zero tensor when backward never reached the node.
  const Tensor& grad() const;

  bool requires_grad() const { return impl_->requires_grad; }
  std::size_t size() const { return impl_->value.size(); }
  const std::vector<std::size_t>& shape() const { return impl_->value.shape(); }
  bool valid() const { return impl_ != nullptr; }

  detail::NodeImpl* impl() const { return impl_; }

 private:
  detail::NodeImpl* impl_ = nullptr;
};

/// Reverse-mode tape. Parameters are long-lived nodes created up front;
/// per-iteration subgraphs are appended after a checkpoint() mark and
/// dropped again with truncate(). backward() walks the subgraph reachable
/// from a scalar root in topological order, visiting each node once, and
/// sums gradients where paths merge.
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  /// Trainable leaf.
  Node parameter(Tensor init);

  /// Non-trainable leaf.
  Node constant(Tensor value);

  /// Interior node; the ops layer builds everything through this.
  Node make(Tensor value, std::vector<Node> parents,
            std::function<void(detail::NodeImpl&)> backward);

  std::size_t checkpoint() const { return nodes_.size(); }

  /// Drops every node created after the mark. Handles to them become invalid.
  void truncate(std::size_t mark);

  /// Resets the gradients of all live nodes.
  void zero_grads();

  /// Reverse sweep from a scalar root; seeds the root gradient with one.
  void backward(Node root);

  std::size_t node_count() const { return nodes_.size(); }

 private:
  std::vector<std::unique_ptr<detail::NodeImpl>> nodes_;
  std::size_t epoch_ = 0;
};

}  // namespace seqpool
