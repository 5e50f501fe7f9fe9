#pragma once

#include "twoshot/autodiff/tensor.hpp"

#include <map>
#include <string>

namespace twoshot::ad {

// Named parameters; std::map keeps iteration lexicographic.
template <typename T>
class ParameterSet {
public:
    using Map = std::map<std::string, Tensor<T>>;

    void add(const std::string& name, Tensor<T> value);
    bool contains(const std::string& name) const { return params_.count(name) != 0; }
    const Tensor<T>& at(const std::string& name) const;
    Tensor<T>& at(const std::string& name);

    std::size_t size() const { return params_.size(); }
    std::size_t total_elements() const;
    auto begin() const { return params_.begin(); }
    auto end() const { return params_.end(); }
    auto begin() { return params_.begin(); }
    auto end() { return params_.end(); }

    void zero_grad();
    void set_requires_grad(bool value);

    // Deep copy with fresh storage.
    ParameterSet clone() const;
    // Same names and shapes as other.
    bool matches(const ParameterSet& other) const;
    // Bitwise value equality.
    bool equals(const ParameterSet& other) const;

private:
    Map params_;
};

template <typename To, typename From>
ParameterSet<To> parameter_cast(const ParameterSet<From>& src, bool requires_grad);

extern template class ParameterSet<float>;
extern template class ParameterSet<double>;

}  // namespace twoshot::ad
