// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <unordered_set>
#include <vector>

#include "mtx/error.hpp"

namespace mtx {

using Shape = std::vector<size_t>;

inline size_t shape_numel(const Shape& s) {
    size_t n = 1;
    for (size_t e : s) n *= e;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) out += "x";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

namespace detail {
template <typename T>
void check_finite(const std::vector<T>& v, const char* where) {
    for (T x : v) {
        if (!std::isfinite(double(x)))
            fail(ErrorCode::numeric, std::string("non-finite value produced by ") + where);
    }
}
} // namespace detail

// Reverse-mode autograd node. Value is computed eagerly; backward_fn reads
// this node's grad and accumulates into the parents' grads. Nodes form a DAG
// (parents only), so shared_ptr ownership cannot cycle.
template <typename T>
struct TensorNode {
    Shape shape;
    std::vector<T> value;
    std::vector<T> grad;  // sized on first use, zero-initialized
    bool requires_grad = false;
    std::vector<std::shared_ptr<TensorNode>> parents;
    std::function<void(TensorNode&)> backward_fn;

    size_t numel() const { return value.size(); }
    void ensure_grad() {
        if (grad.size() != value.size()) grad.assign(value.size(), T(0));
    }
};

// Value-semantics handle over a shared node.
template <typename T>
class Tensor {
public:
    Tensor() = default;

    static Tensor from_data(Shape shape, std::vector<T> data, bool requires_grad = false) {
        require(!shape.empty(), ErrorCode::shape, "tensor rank must be >= 1");
        require(shape_numel(shape) == data.size(), ErrorCode::shape,
                "tensor data size " + std::to_string(data.size()) + " does not match shape " +
                    shape_str(shape));
        detail::check_finite(data, "tensor construction");
        auto n = std::make_shared<TensorNode<T>>();
        n->shape = std::move(shape);
        n->value = std::move(data);
        n->requires_grad = requires_grad;
        return Tensor(std::move(n));
    }

    static Tensor zeros(Shape shape, bool requires_grad = false) {
        size_t n = shape_numel(shape);
        return from_data(std::move(shape), std::vector<T>(n, T(0)), requires_grad);
    }

    static Tensor full(Shape shape, T v, bool requires_grad = false) {
        size_t n = shape_numel(shape);
        return from_data(std::move(shape), std::vector<T>(n, v), requires_grad);
    }

    static Tensor scalar(T v, bool requires_grad = false) {
        return from_data({1}, {v}, requires_grad);
    }

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    size_t rank() const { return node_->shape.size(); }
    size_t numel() const { return node_->value.size(); }
    std::vector<T>& data() { return node_->value; }
    const std::vector<T>& data() const { return node_->value; }
    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool b) { node_->requires_grad = b; }

    // Gradient buffer; zeros if backward never touched this tensor.
    const std::vector<T>& grad() const {
        const_cast<TensorNode<T>*>(node_.get())->ensure_grad();
        return node_->grad;
    }
    void zero_grad() { node_->grad.assign(node_->value.size(), T(0)); }

    T item() const {
        require(numel() == 1, ErrorCode::shape, "item() requires a single-element tensor");
        return node_->value[0];
    }

    TensorNode<T>* node() const { return node_.get(); }
    const std::shared_ptr<TensorNode<T>>& node_ptr() const { return node_; }

    explicit Tensor(std::shared_ptr<TensorNode<T>> n) : node_(std::move(n)) {}

private:
    std::shared_ptr<TensorNode<T>> node_;
};

namespace detail {

// Shared factory for op results. Validates the produced values so a NaN/Inf
// is reported at the op that created it, not downstream.
template <typename T>
Tensor<T> make_op(Shape shape, std::vector<T> value,
                  std::vector<std::shared_ptr<TensorNode<T>>> parents,
                  std::function<void(TensorNode<T>&)> backward_fn, const char* where) {
    require(shape_numel(shape) == value.size(), ErrorCode::shape,
            std::string("internal: op output size mismatch in ") + where);
    check_finite(value, where);
    auto n = std::make_shared<TensorNode<T>>();
    n->shape = std::move(shape);
    n->value = std::move(value);
    bool rg = false;
    for (auto& p : parents) rg = rg || p->requires_grad;
    n->requires_grad = rg;
    if (rg) {
        n->parents = std::move(parents);
        n->backward_fn = std::move(backward_fn);
    }
    return Tensor<T>(std::move(n));
}

} // namespace detail

// Reverse accumulation from a scalar loss. Repeated calls without zeroing
// accumulate into existing grads.
template <typename T>
void backward(const Tensor<T>& loss) {
    require(loss.numel() == 1, ErrorCode::shape, "backward requires a scalar loss");
    require(loss.requires_grad(), ErrorCode::shape,
            "backward target does not depend on any gradient-tracked tensor");

    // Iterative topological sort over the requires_grad subgraph.
    std::vector<TensorNode<T>*> order;
    std::unordered_set<TensorNode<T>*> visited;
    std::vector<std::pair<TensorNode<T>*, size_t>> stack;
    stack.push_back({loss.node(), 0});
    visited.insert(loss.node());
    while (!stack.empty()) {
        auto& [n, idx] = stack.back();
        if (idx < n->parents.size()) {
            TensorNode<T>* p = n->parents[idx].get();
            ++idx;
            if (p->requires_grad && !visited.count(p)) {
                visited.insert(p);
                stack.push_back({p, 0});
            }
        } else {
            order.push_back(n);
            stack.pop_back();
        }
    }

    // Interior grads are scratch space for this traversal; only leaves
    // (parameters, inputs) accumulate across calls.
    for (auto* n : order)
        if (n->backward_fn) n->grad.assign(n->value.size(), T(0));
    loss.node()->ensure_grad();
    loss.node()->grad[0] += T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        TensorNode<T>* n = *it;
        if (n->backward_fn) {
            for (auto& p : n->parents) p->ensure_grad();
            n->backward_fn(*n);
        }
    }
}

} // namespace mtx
