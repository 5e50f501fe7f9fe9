#pragma once

#include "twoshot/autodiff/tensor.hpp"

#include <functional>
#include <string_view>
#include <vector>

namespace twoshot::ad {

enum class OpKind {
    add,
    sub,
    mul,
    scalar_mul,
    matmul,
    conv2d_3x3_pad1,
    relu,
    sigmoid,
    channel_softmax,
    log,
    sum,
    mean,
    gather_labels,
    neg_sq_l2_affinity,
    concat_channels,
    avgpool2,
    upsample2_nearest,
    reshape,
};

std::string_view op_name(OpKind kind);
// Throws std::invalid_argument for names outside the primitive set.
OpKind op_kind_from_name(std::string_view name);

template <typename T>
struct Node {
    OpKind kind;
    std::vector<Tensor<T>> inputs;
    Tensor<T> output;
    // Reads output.grad() and accumulates into the grad buffers of inputs that
    // require grad.
    std::function<void(Node&)> backward;
};

// Tape of recorded operations in creation (hence topological) order.
template <typename T>
class Graph {
public:
    explicit Graph(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;
    Graph(Graph&&) = default;
    Graph& operator=(Graph&&) = default;

    bool grad_enabled() const { return grad_enabled_; }

    // Appends a node when grad is enabled and any input requires grad; the
    // output's requires_grad flag is set to match.
    void record(OpKind kind, std::vector<Tensor<T>> inputs, Tensor<T>& output,
                std::function<void(Node<T>&)> backward);

    // Accumulates d(loss)/d(x) into every requires_grad tensor reachable from
    // loss. One call per graph.
    void backward(const Tensor<T>& loss);

    std::size_t size() const { return nodes_.size(); }
    const std::vector<Node<T>>& nodes() const { return nodes_; }

private:
    std::vector<Node<T>> nodes_;
    bool grad_enabled_ = true;
    bool consumed_ = false;
};

extern template class Graph<float>;
extern template class Graph<double>;

}  // namespace twoshot::ad
