#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace specrec::ad {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

template <typename T>
struct Node;

// Propagates the node's gradient into its parents.
template <typename T>
using BackwardFn = std::function<void(Node<T>&)>;

template <typename T>
struct Node {
    Shape shape;
    std::vector<T> value;
    std::vector<T> grad; // empty until something flows into it
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    BackwardFn<T> backward;
    const char* op = "leaf";

    bool is_leaf() const { return !backward; }
    // Allocates on first use.
    std::span<T> grad_buffer() {
        if (grad.empty()) grad.assign(value.size(), T(0));
        return grad;
    }
};

/// Shared handle to a dense row-major array that may take part in reverse-mode
/// differentiation. Copies alias the same storage.
template <typename T>
class Tensor {
public:
    using value_type = T;

    Tensor() = default;
    Tensor(Shape shape, std::vector<T> values, bool requires_grad = false);
    explicit Tensor(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

    static Tensor zeros(Shape shape, bool requires_grad = false) { return full(std::move(shape), T(0), requires_grad); }
    static Tensor full(Shape shape, T value, bool requires_grad = false);
    static Tensor scalar(T value, bool requires_grad = false) { return full({1}, value, requires_grad); }

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
    std::size_t rank() const { return node_->shape.size(); }
    std::size_t numel() const { return node_->value.size(); }

    std::span<const T> values() const { return node_->value; }
    // For optimisers and initialisers; ops treat their inputs as immutable.
    std::span<T> mutable_values() { return node_->value; }
    T item() const;

    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool flag) { node_->requires_grad = flag; }
    bool has_grad() const { return !node_->grad.empty(); }
    std::span<const T> grad() const { return node_->grad; }
    std::span<T> mutable_grad() { return node_->grad_buffer(); }
    void zero_grad() { node_->grad.clear(); }

    const char* op() const { return node_->op; }
    const std::shared_ptr<Node<T>>& node() const { return node_; }

    // Same values, cut from the graph.
    Tensor detach() const { return Tensor(shape(), node_->value, false); }

private:
    std::shared_ptr<Node<T>> node_;
};

// Thread-local switch; while disabled ops record no graph.
bool grad_enabled();

class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

/// Builds the result of a differentiable op. When grad mode is on and any
/// input requires grad, the result records `inputs` and `backward`.
template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T> value, std::vector<Tensor<T>> inputs, BackwardFn<T> backward,
                      const char* op);

/// Reverse-mode sweep from a scalar. Leaf gradients accumulate (+=) across
/// calls; intermediate gradients are released once propagated.
template <typename T>
void backward(const Tensor<T>& loss);

} // namespace specrec::ad
