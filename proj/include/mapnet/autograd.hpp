#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "mapnet/tensor.hpp"

namespace mapnet {

// Reverse-mode autodiff over a dynamically built graph. Ops allocate a Node
// whose backward_fn pulls the node's grad and accumulates into the parents'
// grads. When no input requires gradients the op records nothing, so
// inference builds plain values.
struct Node {
    Tensor value;
    Tensor grad;  // lazily allocated to value's shape
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward_fn;

    Tensor& grad_buffer();
};

class Var {
  public:
    Var() = default;
    explicit Var(std::shared_ptr<Node> n) : node_(std::move(n)) {}

    static Var leaf(Tensor value, bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const Tensor& val() const { return node_->value; }
    Tensor& mutable_val() { return node_->value; }
    const Tensor& grad() const { return node_->grad; }
    void clear_grad() { node_->grad = Tensor(); }
    bool requires_grad() const { return node_ && node_->requires_grad; }
    const std::shared_ptr<Node>& node() const { return node_; }

    const std::vector<int>& shape() const { return node_->value.shape(); }
    int dim(int i) const { return node_->value.dim(i); }
    int rank() const { return node_->value.rank(); }

  private:
    std::shared_ptr<Node> node_;
};

// Seeds d(root)/d(root) = 1 (root must be scalar) and propagates through the
// graph in reverse topological order.
void backward(const Var& root);

// Helper used by op implementations.
Var make_op(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backward_fn);

}  // namespace mapnet
