#include "twoshot/autodiff/parameter_set.hpp"

#include <algorithm>
#include <cstring>
#include <stdexcept>

namespace twoshot::ad {

template <typename T>
void ParameterSet<T>::add(const std::string& name, Tensor<T> value) {
    if (!params_.emplace(name, std::move(value)).second) {
        throw std::invalid_argument("parameter set: duplicate name '" + name + "'");
    }
}

template <typename T>
const Tensor<T>& ParameterSet<T>::at(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw std::out_of_range("parameter set: no parameter '" + name + "'");
    return it->second;
}

template <typename T>
Tensor<T>& ParameterSet<T>::at(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) throw std::out_of_range("parameter set: no parameter '" + name + "'");
    return it->second;
}

template <typename T>
std::size_t ParameterSet<T>::total_elements() const {
    std::size_t n = 0;
    for (const auto& [_, t] : params_) n += t.numel();
    return n;
}

template <typename T>
void ParameterSet<T>::zero_grad() {
    for (auto& [_, t] : params_) t.zero_grad();
}

template <typename T>
void ParameterSet<T>::set_requires_grad(bool value) {
    for (auto& [_, t] : params_) t.set_requires_grad(value);
}

template <typename T>
ParameterSet<T> ParameterSet<T>::clone() const {
    ParameterSet out;
    for (const auto& [name, t] : params_) {
        auto copy = t.clone();
        copy.set_requires_grad(t.requires_grad());
        out.add(name, std::move(copy));
    }
    return out;
}

template <typename T>
bool ParameterSet<T>::matches(const ParameterSet& other) const {
    if (params_.size() != other.params_.size()) return false;
    auto it = other.params_.begin();
    for (const auto& [name, t] : params_) {
        if (it->first != name || it->second.shape() != t.shape()) return false;
        ++it;
    }
    return true;
}

template <typename T>
bool ParameterSet<T>::equals(const ParameterSet& other) const {
    if (!matches(other)) return false;
    auto it = other.params_.begin();
    for (const auto& [name, t] : params_) {
        auto a = t.data();
        auto b = it->second.data();
        if (a.size() != b.size() || (!a.empty() && std::memcmp(a.data(), b.data(), a.size_bytes()) != 0)) return false;
        ++it;
    }
    return true;
}

template <typename To, typename From>
ParameterSet<To> parameter_cast(const ParameterSet<From>& src, bool requires_grad) {
    ParameterSet<To> out;
    for (const auto& [name, t] : src) out.add(name, tensor_cast<To>(t, requires_grad));
    return out;
}

template class ParameterSet<float>;
template class ParameterSet<double>;
template ParameterSet<double> parameter_cast<double, float>(const ParameterSet<float>&, bool);
template ParameterSet<float> parameter_cast<float, double>(const ParameterSet<double>&, bool);

}  // namespace twoshot::ad
