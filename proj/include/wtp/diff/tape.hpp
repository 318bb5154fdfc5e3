#pragma once

#include <functional>
#include <memory>
#include <stdexcept>
#include <vector>

#include "wtp/diff/tensor.hpp"

namespace wtp::diff {

// One value in the computation graph. Gradient buffers are allocated
// lazily the first time a child accumulates into them.
template <class T>
struct Node {
    Tensor<T> val;
    std::vector<T> grad;
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node<T>>> parents;
    std::function<void(Node<T>&)> backward_fn;  // reads self.grad, accumulates into parents
    const char* op = "";

    std::vector<T>& ensure_grad() {
        if (grad.size() != val.numel()) grad.assign(val.numel(), T(0));
        return grad;
    }
    void zero_grad() { grad.assign(val.numel(), T(0)); }
    bool has_grad() const { return grad.size() == val.numel(); }
};

template <class T>
using NodePtr = std::shared_ptr<Node<T>>;

// Long-lived value outside any tape (parameters, constants).
template <class T>
NodePtr<T> make_leaf(Tensor<T> val, bool requires_grad = false) {
    auto n = std::make_shared<Node<T>>();
    n->val = std::move(val);
    n->requires_grad = requires_grad;
    n->op = "leaf";
    return n;
}

// Records forward ops in creation order; backward replays them in reverse.
// Single forward/backward over a tape is single-threaded by contract.
template <class T>
class Tape {
 public:
    NodePtr<T> make(Tensor<T> val, std::vector<NodePtr<T>> parents, const char* op) {
        auto n = std::make_shared<Node<T>>();
        n->val = std::move(val);
        n->parents = std::move(parents);
        n->op = op;
        for (const auto& p : n->parents)
            if (p && p->requires_grad) n->requires_grad = true;
        nodes_.push_back(n);
        return n;
    }

    void backward(const NodePtr<T>& root) {
        if (root->val.numel() != 1)
            throw std::invalid_argument("backward: root must be a scalar");
        root->ensure_grad()[0] = T(1);
        for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
            Node<T>& n = **it;
            if (n.requires_grad && n.has_grad() && n.backward_fn) n.backward_fn(n);
        }
    }

    void clear() { nodes_.clear(); }
    size_t size() const { return nodes_.size(); }

 private:
    std::vector<NodePtr<T>> nodes_;
};

}  // namespace wtp::diff
