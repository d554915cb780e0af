#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "bbecog/common.hpp"

namespace bbecog {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& s) {
    std::size_t n = 1;
    for (std::size_t e : s) n *= e;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << "]";
    return os.str();
}

namespace autograd {

// Thread-local switch; ops record backward closures only while enabled.
inline bool& grad_mode_flag() {
    thread_local bool enabled = true;
    return enabled;
}

inline bool grad_enabled() { return grad_mode_flag(); }

struct NoGradGuard {
    bool prev;
    NoGradGuard() : prev(grad_mode_flag()) { grad_mode_flag() = false; }
    ~NoGradGuard() { grad_mode_flag() = prev; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;
};

}  // namespace autograd

using autograd::NoGradGuard;

namespace detail {

template <typename S>
struct TensorNode {
    Shape shape;
    std::vector<S> values;
    bool requires_grad = false;
    std::vector<S> grad;  // empty until first accumulation
    std::vector<std::shared_ptr<TensorNode>> parents;
    std::function<void(TensorNode&)> backward_fn;  // reads this->grad, accumulates into parents

    std::size_t numel() const { return values.size(); }
    bool is_leaf() const { return !backward_fn; }
    void ensure_grad() {
        if (grad.empty()) grad.assign(values.size(), S(0));
    }
};

}  // namespace detail

// Dense row-major tensor handle with optional reverse-mode gradient tracking.
// Copying the handle shares the underlying buffer. Tensors produced by ops are
// treated as immutable; leaf tensors (data, parameters) may be mutated through
// data() — parameters are updated in place by the optimizer.
template <typename S>
class BasicTensor {
public:
    using Scalar = S;
    using Node = detail::TensorNode<S>;

    BasicTensor() = default;
    explicit BasicTensor(std::shared_ptr<Node> n) : node_(std::move(n)) {}

    static BasicTensor zeros(Shape shape, bool requires_grad = false) {
        return filled(std::move(shape), S(0), requires_grad);
    }

    static BasicTensor filled(Shape shape, S value, bool requires_grad = false) {
        auto n = std::make_shared<Node>();
        n->values.assign(shape_numel(shape), value);
        n->shape = std::move(shape);
        n->requires_grad = requires_grad;
        return BasicTensor(std::move(n));
    }

    static BasicTensor from_data(Shape shape, std::vector<S> data, bool requires_grad = false) {
        if (shape_numel(shape) != data.size()) {
            throw ShapeError("tensor data length " + std::to_string(data.size()) +
                             " does not match shape " + shape_str(shape));
        }
        auto n = std::make_shared<Node>();
        n->shape = std::move(shape);
        n->values = std::move(data);
        n->requires_grad = requires_grad;
        return BasicTensor(std::move(n));
    }

    static BasicTensor scalar(S v, bool requires_grad = false) {
        return from_data({1}, {v}, requires_grad);
    }

    bool defined() const { return node_ != nullptr; }

    const Shape& shape() const { return node_->shape; }
    std::size_t rank() const { return node_->shape.size(); }
    std::size_t numel() const { return node_->values.size(); }
    std::size_t extent(std::size_t axis) const { return node_->shape.at(axis); }

    S* data() { return node_->values.data(); }
    const S* data() const { return node_->values.data(); }
    std::vector<S>& values() { return node_->values; }
    const std::vector<S>& values() const { return node_->values; }

    bool requires_grad() const { return node_->requires_grad; }
    BasicTensor& set_requires_grad(bool v) {
        node_->requires_grad = v;
        return *this;
    }

    bool has_grad() const { return !node_->grad.empty(); }
    const std::vector<S>& grad() const { return node_->grad; }
    void zero_grad() { node_->grad.clear(); }

    S item() const {
        if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape()));
        return node_->values[0];
    }

    // Row-major multi-index access, for tests and staging code.
    S at(std::initializer_list<std::size_t> idx) const {
        return node_->values[flat_index(idx)];
    }
    S& at(std::initializer_list<std::size_t> idx) { return node_->values[flat_index(idx)]; }

    const std::shared_ptr<Node>& node() const { return node_; }

private:
    std::size_t flat_index(std::initializer_list<std::size_t> idx) const {
        if (idx.size() != rank()) throw ShapeError("index rank mismatch");
        std::size_t flat = 0;
        std::size_t axis = 0;
        for (std::size_t i : idx) {
            if (i >= node_->shape[axis]) throw ShapeError("index out of range");
            flat = flat * node_->shape[axis] + i;
            ++axis;
        }
        return flat;
    }

    std::shared_ptr<Node> node_;
};

// Runs reverse-mode accumulation from a scalar loss. Gradients on leaf tensors
// with requires_grad accumulate across calls (callers reset with zero_grad);
// intermediate nodes get transient gradients that are released before return.
template <typename S>
void backward(const BasicTensor<S>& loss) {
    if (!loss.defined() || loss.numel() != 1) {
        throw std::invalid_argument("backward: loss must be a defined scalar tensor");
    }
    using Node = detail::TensorNode<S>;
    Node* root = loss.node().get();
    if (!root->requires_grad && root->is_leaf()) return;  // nothing depends on anything

    // Iterative post-order DFS over parents.
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    struct Frame {
        Node* node;
        std::size_t next_parent;
    };
    std::vector<Frame> stack;
    stack.push_back({root, 0});
    visited.insert(root);
    while (!stack.empty()) {
        Frame& f = stack.back();
        if (f.next_parent < f.node->parents.size()) {
            Node* p = f.node->parents[f.next_parent++].get();
            if (visited.insert(p).second) stack.push_back({p, 0});
        } else {
            order.push_back(f.node);
            stack.pop_back();
        }
    }

    root->ensure_grad();
    root->grad[0] += S(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
    }
    // Keep gradients on leaves only.
    for (Node* n : order) {
        if (!n->is_leaf()) n->grad.clear();
    }
}

using Tensor = BasicTensor<float>;

}  // namespace bbecog
