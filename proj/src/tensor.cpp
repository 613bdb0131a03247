#include "specrec/tensor.hpp"

#include <unordered_set>

#include "specrec/error.hpp"

namespace specrec::ad {

namespace {
thread_local bool g_grad_enabled = true;
}

std::size_t numel(const Shape& shape) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

std::string to_string(const Shape& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += "x";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> values, bool requires_grad) {
    if (ad::numel(shape) != values.size()) {
        throw ShapeError("tensor shape " + ad::to_string(shape) + " needs " + std::to_string(ad::numel(shape)) +
                         " values, got " + std::to_string(values.size()));
    }
    node_ = std::make_shared<Node<T>>();
    node_->shape = std::move(shape);
    node_->value = std::move(values);
    node_->requires_grad = requires_grad;
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value, bool requires_grad) {
    const auto n = ad::numel(shape);
    return Tensor(std::move(shape), std::vector<T>(n, value), requires_grad);
}

template <typename T>
T Tensor<T>::item() const {
    if (numel() != 1) throw UsageError("item() on a tensor with " + std::to_string(numel()) + " elements");
    return node_->value[0];
}

template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T> value, std::vector<Tensor<T>> inputs, BackwardFn<T> backward,
                      const char* op) {
    Tensor<T> out(std::move(shape), std::move(value), false);
    bool needs = false;
    if (grad_enabled()) {
        for (const auto& in : inputs) needs = needs || (in.defined() && in.requires_grad());
    }
    auto& node = *out.node();
    node.op = op;
    if (needs) {
        node.requires_grad = true;
        node.backward = std::move(backward);
        for (auto& in : inputs) node.parents.push_back(in.node());
    }
    return out;
}

template <typename T>
void backward(const Tensor<T>& loss) {
    if (!loss.defined()) throw UsageError("backward() on an undefined tensor");
    if (loss.numel() != 1) {
        throw UsageError("backward() needs a scalar loss, got shape " + to_string(loss.shape()));
    }
    if (!loss.requires_grad()) throw UsageError("backward() on a tensor that does not require grad");

    // Iterative post-order DFS gives a topological order (parents before children).
    std::vector<Node<T>*> order;
    std::unordered_set<Node<T>*> visited;
    std::vector<std::pair<Node<T>*, std::size_t>> stack{{loss.node().get(), 0}};
    visited.insert(loss.node().get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node<T>* parent = node->parents[next++].get();
            if (parent->requires_grad && visited.insert(parent).second) stack.emplace_back(parent, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    loss.node()->grad_buffer()[0] += T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node<T>* node = *it;
        if (node->is_leaf() || node->grad.empty()) continue;
        node->backward(*node);
        node->grad.clear();
        node->grad.shrink_to_fit();
    }
}

template class Tensor<float>;
template class Tensor<double>;
template Tensor<float> make_result(Shape, std::vector<float>, std::vector<Tensor<float>>, BackwardFn<float>,
                                   const char*);
template Tensor<double> make_result(Shape, std::vector<double>, std::vector<Tensor<double>>, BackwardFn<double>,
                                    const char*);
template void backward(const Tensor<float>&);
template void backward(const Tensor<double>&);

} // namespace specrec::ad
