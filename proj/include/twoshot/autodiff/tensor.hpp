#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace twoshot::ad {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

// Dense array taking part in a differentiation graph.
//
// Tensor is a shared handle: copies alias the same storage, which is how a
// parameter held in a ParameterSet and the same parameter referenced by graph
// nodes stay one object. Use clone() for an independent copy.
template <typename T>
class Tensor {
public:
    Tensor() = default;
    Tensor(Shape shape, std::vector<T> data, bool requires_grad = false);

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, T value, bool requires_grad = false);
    static Tensor scalar(T value, bool requires_grad = false);

    bool defined() const { return static_cast<bool>(impl_); }
    const Shape& shape() const;
    std::size_t rank() const { return shape().size(); }
    std::size_t dim(std::size_t axis) const { return shape().at(axis); }
    std::size_t numel() const;

    std::span<const T> data() const;
    std::span<T> mutable_data();
    T item() const;

    bool requires_grad() const;
    void set_requires_grad(bool value);

    bool has_grad() const;
    // Zero-filled on first access.
    std::span<T> grad_buffer();
    std::span<const T> grad() const;
    void zero_grad();

    // Independent copy of the values, detached from any graph.
    Tensor clone() const;
    Tensor detach() const { return clone(); }

    bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

private:
    struct Storage {
        Shape shape;
        std::vector<T> data;
        std::vector<T> grad;
        bool requires_grad = false;
    };
    std::shared_ptr<Storage> impl_;

    Storage& storage() const;
};

template <typename To, typename From>
Tensor<To> tensor_cast(const Tensor<From>& src, bool requires_grad);

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace twoshot::ad
