#pragma once

#include "twoshot/autodiff/graph.hpp"
#include "twoshot/autodiff/tensor.hpp"

#include <span>
#include <vector>

// Differentiable primitives. Every op validates shapes and throws
// std::invalid_argument naming the op and the offending shapes.
//
// Spatial ops use NCHW layout. "Channel" ops act on axis 1 of any tensor of
// rank >= 2, treating axis 0 as outer and the product of trailing axes as
// inner.
namespace twoshot::ad {

template <typename T> Tensor<T> add(Graph<T>& g, const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> sub(Graph<T>& g, const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> mul(Graph<T>& g, const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> scalar_mul(Graph<T>& g, const Tensor<T>& a, T s);

// [M,K] x [K,N] -> [M,N]
template <typename T> Tensor<T> matmul(Graph<T>& g, const Tensor<T>& a, const Tensor<T>& b);

// x [N,Cin,H,W], weight [Cout,Cin,3,3], bias [Cout] or undefined.
// Stride 1, zero padding 1.
template <typename T>
Tensor<T> conv2d_3x3_pad1(Graph<T>& g, const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias);

template <typename T> Tensor<T> relu(Graph<T>& g, const Tensor<T>& x);
template <typename T> Tensor<T> sigmoid(Graph<T>& g, const Tensor<T>& x);

// Softmax along axis 1, max-subtracted.
template <typename T> Tensor<T> channel_softmax(Graph<T>& g, const Tensor<T>& x);

// Natural log with inputs clamped at 1e-12; the clamped region has zero gradient.
template <typename T> Tensor<T> log(Graph<T>& g, const Tensor<T>& x);

template <typename T> Tensor<T> sum(Graph<T>& g, const Tensor<T>& x);
template <typename T> Tensor<T> mean(Graph<T>& g, const Tensor<T>& x);

// p [N,C,...] and one integer label per (n, inner) position -> [N,1,...] with
// out[n,0,i] = p[n,label,i]. Labels are constants.
template <typename T>
Tensor<T> gather_labels(Graph<T>& g, const Tensor<T>& p, std::span<const int> labels);

// memory [C,M], query [C,Q] -> [M,Q] with out[m,q] = -scale * |memory[:,m] - query[:,q]|^2.
template <typename T>
Tensor<T> neg_sq_l2_affinity(Graph<T>& g, const Tensor<T>& memory, const Tensor<T>& query, T scale);

template <typename T> Tensor<T> concat_channels(Graph<T>& g, const std::vector<Tensor<T>>& parts);

template <typename T> Tensor<T> avgpool2(Graph<T>& g, const Tensor<T>& x);
template <typename T> Tensor<T> upsample2_nearest(Graph<T>& g, const Tensor<T>& x);

// Same data, new shape with equal element count.
template <typename T> Tensor<T> reshape(Graph<T>& g, const Tensor<T>& x, Shape shape);

struct OpAttrs {
    double scalar = 1.0;     // scalar_mul factor, affinity scale
    std::vector<int> labels;  // gather_labels
    Shape shape;              // reshape
};

// Dispatch by kind. conv2d_3x3_pad1 takes {x, weight} or {x, weight, bias}.
template <typename T>
Tensor<T> forward(Graph<T>& g, OpKind kind, const std::vector<Tensor<T>>& inputs, const OpAttrs& attrs = {});

}  // namespace twoshot::ad
