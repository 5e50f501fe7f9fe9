#include "twoshot/autodiff/graph.hpp"

#include <array>
#include <stdexcept>
#include <string>
#include <utility>

namespace twoshot::ad {

namespace {

constexpr std::array<std::pair<OpKind, std::string_view>, 18> kOpNames{{
    {OpKind::add, "add"},
    {OpKind::sub, "sub"},
    {OpKind::mul, "mul"},
    {OpKind::scalar_mul, "scalar_mul"},
    {OpKind::matmul, "matmul"},
    {OpKind::conv2d_3x3_pad1, "conv2d_3x3_pad1"},
    {OpKind::relu, "relu"},
    {OpKind::sigmoid, "sigmoid"},
    {OpKind::channel_softmax, "channel_softmax"},
    {OpKind::log, "log"},
    {OpKind::sum, "sum"},
    {OpKind::mean, "mean"},
    {OpKind::gather_labels, "gather_labels"},
    {OpKind::neg_sq_l2_affinity, "neg_sq_l2_affinity"},
    {OpKind::concat_channels, "concat_channels"},
    {OpKind::avgpool2, "avgpool2"},
    {OpKind::upsample2_nearest, "upsample2_nearest"},
    {OpKind::reshape, "reshape"},
}};

}  // namespace

std::string_view op_name(OpKind kind) {
    for (const auto& [k, name] : kOpNames) {
        if (k == kind) return name;
    }
    return "unknown";
}

OpKind op_kind_from_name(std::string_view name) {
    for (const auto& [k, n] : kOpNames) {
        if (n == name) return k;
    }
    throw std::invalid_argument("unknown op kind '" + std::string(name) + "'");
}

template <typename T>
void Graph<T>::record(OpKind kind, std::vector<Tensor<T>> inputs, Tensor<T>& output,
                      std::function<void(Node<T>&)> backward) {
    bool needs = false;
    if (grad_enabled_) {
        for (const auto& in : inputs) needs = needs || in.requires_grad();
    }
    output.set_requires_grad(needs);
    if (!needs) return;
    if (consumed_) throw std::logic_error("graph: cannot record after backward");
    nodes_.push_back(Node<T>{kind, std::move(inputs), output, std::move(backward)});
}

template <typename T>
void Graph<T>::backward(const Tensor<T>& loss) {
    if (nodes_.empty()) throw std::invalid_argument("backward: empty graph");
    if (consumed_) throw std::logic_error("backward: graph already backpropagated");
    if (!loss.defined() || loss.numel() != 1) {
        throw std::invalid_argument("backward: loss must be scalar, got shape " +
                                    (loss.defined() ? shape_string(loss.shape()) : std::string("<undefined>")));
    }
    std::size_t last = nodes_.size();
    for (std::size_t i = nodes_.size(); i-- > 0;) {
        if (nodes_[i].output.same_storage(loss)) {
            last = i;
            break;
        }
    }
    if (last == nodes_.size()) throw std::invalid_argument("backward: loss is not produced by this graph");

    consumed_ = true;
    Tensor<T> seed = loss;
    seed.grad_buffer()[0] += T{1};
    for (std::size_t i = last + 1; i-- > 0;) {
        auto& node = nodes_[i];
        if (!node.output.has_grad()) continue;
        node.backward(node);
    }
}

template class Graph<float>;
template class Graph<double>;

}  // namespace twoshot::ad
