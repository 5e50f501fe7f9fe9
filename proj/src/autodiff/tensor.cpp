#include "twoshot/autodiff/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>

namespace twoshot::ad {

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

std::string shape_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ',';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data, bool requires_grad) : impl_(std::make_shared<Storage>()) {
    if (shape_numel(shape) != data.size()) {
        throw std::invalid_argument("tensor: shape " + shape_string(shape) + " does not match data length " +
                                    std::to_string(data.size()));
    }
    impl_->shape = std::move(shape);
    impl_->data = std::move(data);
    impl_->requires_grad = requires_grad;
}

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
    return full(std::move(shape), T{0}, requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value, bool requires_grad) {
    auto n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<T>(n, value), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value, bool requires_grad) {
    return Tensor(Shape{1}, std::vector<T>{value}, requires_grad);
}

template <typename T>
typename Tensor<T>::Storage& Tensor<T>::storage() const {
    if (!impl_) throw std::logic_error("tensor: use of undefined tensor");
    return *impl_;
}

template <typename T>
const Shape& Tensor<T>::shape() const {
    return storage().shape;
}

template <typename T>
std::size_t Tensor<T>::numel() const {
    return storage().data.size();
}

template <typename T>
std::span<const T> Tensor<T>::data() const {
    return storage().data;
}

template <typename T>
std::span<T> Tensor<T>::mutable_data() {
    return storage().data;
}

template <typename T>
T Tensor<T>::item() const {
    auto& s = storage();
    if (s.data.size() != 1) {
        throw std::invalid_argument("tensor: item() on non-scalar shape " + shape_string(s.shape));
    }
    return s.data[0];
}

template <typename T>
bool Tensor<T>::requires_grad() const {
    return impl_ && impl_->requires_grad;
}

template <typename T>
void Tensor<T>::set_requires_grad(bool value) {
    storage().requires_grad = value;
}

template <typename T>
bool Tensor<T>::has_grad() const {
    return impl_ && !impl_->grad.empty();
}

template <typename T>
std::span<T> Tensor<T>::grad_buffer() {
    auto& s = storage();
    if (s.grad.empty()) s.grad.assign(s.data.size(), T{0});
    return s.grad;
}

template <typename T>
std::span<const T> Tensor<T>::grad() const {
    return storage().grad;
}

template <typename T>
void Tensor<T>::zero_grad() {
    auto& s = storage();
    std::fill(s.grad.begin(), s.grad.end(), T{0});
}

template <typename T>
Tensor<T> Tensor<T>::clone() const {
    auto& s = storage();
    return Tensor(s.shape, s.data, false);
}

template <typename To, typename From>
Tensor<To> tensor_cast(const Tensor<From>& src, bool requires_grad) {
    auto in = src.data();
    std::vector<To> out(in.begin(), in.end());
    return Tensor<To>(src.shape(), std::move(out), requires_grad);
}

template class Tensor<float>;
template class Tensor<double>;
template Tensor<double> tensor_cast<double, float>(const Tensor<float>&, bool);
template Tensor<float> tensor_cast<float, double>(const Tensor<double>&, bool);
template Tensor<float> tensor_cast<float, float>(const Tensor<float>&, bool);
template Tensor<double> tensor_cast<double, double>(const Tensor<double>&, bool);

}  // namespace twoshot::ad
