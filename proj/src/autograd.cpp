#include "mapnet/autograd.hpp"

#include <unordered_set>

namespace mapnet {

Tensor& Node::grad_buffer() {
    if (grad.empty()) grad = Tensor(value.shape());
    return grad;
}

Var Var::leaf(Tensor value, bool requires_grad) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->requires_grad = requires_grad;
    return Var(std::move(n));
}

Var make_op(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backward_fn) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    bool needs = false;
    for (const auto& p : parents) needs = needs || p.requires_grad();
    n->requires_grad = needs;
    if (needs) {
        n->parents.reserve(parents.size());
        for (auto& p : parents) n->parents.push_back(p.node());
        n->backward_fn = std::move(backward_fn);
    }
    return Var(std::move(n));
}

void backward(const Var& root) {
    MAPNET_REQUIRE(root.defined() && root.val().size() == 1, "backward root must be scalar");
    if (!root.requires_grad()) return;

    // Iterative DFS post-order; reversed it yields a valid topological order.
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    struct Frame {
        Node* n;
        size_t next_child;
    };
    std::vector<Frame> stack;
    stack.push_back({root.node().get(), 0});
    visited.insert(root.node().get());
    while (!stack.empty()) {
        Frame& f = stack.back();
        if (f.next_child < f.n->parents.size()) {
            Node* child = f.n->parents[f.next_child++].get();
            if (child->requires_grad && !visited.count(child)) {
                visited.insert(child);
                stack.push_back({child, 0});
            }
        } else {
            order.push_back(f.n);
            stack.pop_back();
        }
    }

    root.node()->grad_buffer()[0] = 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
    }
}

}  // namespace mapnet
