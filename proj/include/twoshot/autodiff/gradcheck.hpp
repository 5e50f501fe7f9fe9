#pragma once

#include "twoshot/autodiff/graph.hpp"
#include "twoshot/autodiff/ops.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace twoshot::ad {

struct GradCheckOptions {
    double step = 1e-5;
    // Generated inputs with |x| below this are redrawn; keeps relu-style kinks
    // out of the central-difference stencil.
    double kink_margin = 0.0;
};

struct GradCheckResult {
    // max over coordinates of |analytic - numeric| / max(1, |numeric|)
    double max_relative_error = 0.0;
    bool ok = true;
    std::size_t worst_leaf = 0;
    std::size_t worst_index = 0;
    std::string failure;
};

using ScalarFn = std::function<Tensor<double>(Graph<double>&)>;

// Compares reverse-mode gradients of fn with respect to every coordinate of
// every leaf against central differences. fn must build a fresh graph from the
// leaves on each call and return a scalar.
GradCheckResult gradient_check(std::vector<Tensor<double>> leaves, const ScalarFn& fn,
                               const GradCheckOptions& options = {});

using LeafFn = std::function<Tensor<double>(Graph<double>&, const std::vector<Tensor<double>>&)>;

// Leaves drawn uniformly from (-1, 1) with the given seed.
GradCheckResult gradient_check(const LeafFn& fn, const std::vector<Shape>& shapes, std::uint64_t seed,
                               const GradCheckOptions& options = {});

// Single primitive, reduced to a scalar through a fixed random projection so
// every output coordinate contributes.
GradCheckResult gradient_check(OpKind kind, const std::vector<Shape>& shapes, std::uint64_t seed,
                               const OpAttrs& attrs = {}, const GradCheckOptions& options = {});

// One configured check per primitive (log runs on inputs made positive first);
// `run` takes the seed.
struct PrimitiveCheck {
    OpKind kind;
    std::function<GradCheckResult(std::uint64_t)> run;
};
std::vector<PrimitiveCheck> primitive_checks();

std::vector<Tensor<double>> random_leaves(const std::vector<Shape>& shapes, std::uint64_t seed, double kink_margin);

}  // namespace twoshot::ad
